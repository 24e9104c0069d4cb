"""Mini-batch training with Adam, the one-cycle schedule and early stopping."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .data import WindowSet
from .errors import ConfigError, NumericalError
from .model import Module, save_checkpoint
from .numerics import AdamState, OneCycleSchedule, adam_step, onecycle_lr

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 19
    max_lr: float = 1e-4
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: float | None = None
    eval_batch_size: int = 256
    seed: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (train-mode batch norm)")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not 0 <= self.patience < self.max_epochs:
            raise ConfigError(f"patience ({self.patience}) must be < max_epochs ({self.max_epochs})")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive when set")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mse: float
    val_mae: float
    lr_end: float
    seconds: float


@dataclass
class RunLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mse: float = math.inf
    stopped_early: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.lr_trace)

    def comparable(self) -> dict:
        """Everything except wall-clock timings."""
        d = asdict(self)
        for e in d["epochs"]:
            e.pop("seconds")
        return d

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with (directory / "runlog.jsonl").open("w") as fh:
            for e in self.epochs:
                fh.write(json.dumps({"event": "epoch", **asdict(e)}) + "\n")
            fh.write(json.dumps({"event": "done", "best_epoch": self.best_epoch, "best_val_mse": self.best_val_mse,
                                 "stopped_early": self.stopped_early, "steps": self.n_steps}) + "\n")
        with (directory / "runlog.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_mse", "val_mae", "lr_end", "seconds"])
            for e in self.epochs:
                w.writerow([e.epoch, repr(e.train_loss), repr(e.val_mse), repr(e.val_mae), repr(e.lr_end),
                            f"{e.seconds:.3f}"])
        with (directory / "lr_trace.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "lr", "loss"])
            for i, (lr, loss) in enumerate(zip(self.lr_trace, self.step_losses)):
                w.writerow([i, repr(lr), repr(loss)])


class EarlyStopping:
    """Stop once ``patience`` consecutive epochs fail to strictly improve."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        if value < self.best:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def mse_loss(pred: nx.Tensor, target) -> nx.Tensor:
    return nx.mse(pred, target)


def evaluate(model: Module, ws: WindowSet, batch_size: int = 256) -> tuple[float, float]:
    pred = model.predict(ws.inputs, batch_size)
    err = pred - ws.targets
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def _clip(params, max_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale


def train(model: Module, train_set: WindowSet, val_set: WindowSet, cfg: TrainConfig,
          checkpoint_meta: dict | None = None) -> tuple[Module, RunLog]:
    """Fit ``model`` in place and restore its best-validation parameters.

    The last incomplete batch of every epoch is dropped. When
    ``cfg.checkpoint_dir`` is set the restored model and its RunLog are written
    there.
    """
    n = len(train_set)
    if n < cfg.batch_size:
        raise ConfigError(f"training set has {n} samples, fewer than one batch of {cfg.batch_size}")
    if len(val_set) == 0:
        raise ConfigError("validation set is empty")
    per_epoch = n // cfg.batch_size
    schedule = OneCycleSchedule(cfg.max_epochs * per_epoch, cfg.max_lr, cfg.pct_start,
                                cfg.div_factor, cfg.final_div_factor)
    state = AdamState(cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[2])
    stopper = EarlyStopping(cfg.patience)
    log = RunLog()
    best_state = model.snapshot()
    params = list(model.params.values())
    step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        losses = []
        for b in range(per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            model.zero_grad()
            loss = mse_loss(model.forward(train_set.inputs[idx], train=True), train_set.targets[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, batch {b} (step {step})")
            nx.backward(loss)
            if cfg.grad_clip is not None:
                _clip(params, cfg.grad_clip)
            lr = onecycle_lr(schedule, step)
            adam_step(model.params, None, state, lr)
            log.lr_trace.append(lr)
            log.step_losses.append(value)
            losses.append(value)
            step += 1
        val_mse, val_mae = evaluate(model, val_set, cfg.eval_batch_size)
        if not math.isfinite(val_mse):
            raise NumericalError(f"non-finite validation MSE after epoch {epoch}")
        stop = stopper.update(epoch, val_mse)
        if stopper.best_epoch == epoch:
            best_state = model.snapshot()
        log.epochs.append(EpochRecord(epoch, float(np.mean(losses)), val_mse, val_mae, log.lr_trace[-1],
                                      time.perf_counter() - t0))
        logger.info("epoch %d train %.6f val_mse %.6f val_mae %.6f", epoch, log.epochs[-1].train_loss,
                    val_mse, val_mae)
        if stop:
            log.stopped_early = True
            break
    model.load_state_arrays(best_state)
    log.best_epoch, log.best_val_mse = stopper.best_epoch, stopper.best
    if cfg.checkpoint_dir:
        save_checkpoint(model, cfg.checkpoint_dir, checkpoint_meta)
        log.write(cfg.checkpoint_dir)
    return model, log

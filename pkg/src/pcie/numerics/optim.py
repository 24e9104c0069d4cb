"""Adam optimizer and the cosine one-cycle learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ConfigError, NumericalError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray] | None,
              state: AdamState, lr: float) -> None:
    """Apply one bias-corrected Adam update to ``params`` in place.

    ``grads`` defaults to each parameter's ``.grad``; a missing gradient is
    treated as zero. Every gradient is checked for NaN/Inf before any
    parameter is touched, so a failed step leaves the model unchanged.
    """
    if not lr > 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    resolved: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = p.grad if grads is None else grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        resolved[name] = g

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = resolved[name]
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass(frozen=True)
class OneCycleSchedule:
    """Warm up from ``max_lr / div_factor`` to ``max_lr``, then anneal to
    ``max_lr / final_div_factor``, both phases on a half cosine."""

    total_steps: int
    max_lr: float = 1e-4
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not 0.0 <= self.pct_start < 1.0:
            raise ConfigError("pct_start must lie in [0, 1)")
        if self.max_lr <= 0 or self.div_factor <= 0 or self.final_div_factor <= 0:
            raise ConfigError("max_lr, div_factor and final_div_factor must be positive")

    @property
    def peak_step(self) -> int:
        return min(round(self.pct_start * self.total_steps), self.total_steps - 1)

    @property
    def initial_lr(self) -> float:
        return self.max_lr / self.div_factor

    @property
    def final_lr(self) -> float:
        return self.max_lr / self.final_div_factor


def _cos_interp(start: float, end: float, frac: float) -> float:
    return end + (start - end) / 2.0 * (1.0 + math.cos(math.pi * frac))


def onecycle_lr(schedule: OneCycleSchedule, step: int) -> float:
    if not 0 <= step < schedule.total_steps:
        raise ConfigError(f"step {step} outside [0, {schedule.total_steps})")
    peak = schedule.peak_step
    if step == peak:
        return schedule.max_lr
    if step < peak:
        if step == 0:
            return schedule.initial_lr
        return _cos_interp(schedule.initial_lr, schedule.max_lr, step / peak)
    return _cos_interp(schedule.max_lr, schedule.final_lr,
                       (step - peak) / (schedule.total_steps - 1 - peak))

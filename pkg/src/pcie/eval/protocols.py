"""Comparison protocols over prepared dataset cells.

A *cell* is one (task, horizon) build of a dataset; every variant evaluated
on a cell sees the same windows, splits and NormStats. Trainable variants are
either loaded from checkpoints or trained inline with one shared seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .. import __version__
from ..data import DatasetCell
from ..errors import ConfigError, DataError
from ..model import ATL_MODES, Module, PcieConfig, load_checkpoint, save_checkpoint
from ..model.network import PCIE
from ..training import TrainConfig, train
from .baselines import direct_linear, persistence
from .metrics import improvement_pct, metrics
from .report import EvalReport, ReportRow

logger = logging.getLogger(__name__)

# Non-binding reference: overall MSE improvement from mixing price and change
# channels that the original PCIE experiments reported on US_71 / US_14L.
PAPER_CHANNEL_MIX_REFERENCE = {"US_71": 2.762, "US_14L": 3.985}


@dataclass(frozen=True)
class VariantSpec:
    """A named model recipe: PCIE with config overrides, or a baseline.

    ``atl_mode="sweep"`` in the overrides trains one PCIE per ATL mode and
    keeps the one with the lowest validation MSE.
    """

    name: str
    kind: str = "pcie"
    overrides: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("pcie", "direct_linear", "persistence"):
            raise ConfigError(f"unknown variant kind {self.kind!r}")

    @property
    def trainable(self) -> bool:
        return self.kind != "persistence"


PCIE_VARIANT = VariantSpec("pcie")
NO_TOKENIZATION = VariantSpec("pcie_notok", overrides={"tokenization": False})
PERSISTENCE = VariantSpec("persistence", "persistence")
DIRECT_LINEAR = VariantSpec("direct_linear", "direct_linear")
VARIANTS = {v.name: v for v in (PCIE_VARIANT, NO_TOKENIZATION, PERSISTENCE, DIRECT_LINEAR)}


def source_revision() -> str:
    """Digest of the installed package sources (stands in for a VCS revision)."""
    h = hashlib.sha256()
    root = Path(__file__).resolve().parents[1]
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def pcie_config(cell: DatasetCell, base: Mapping | None = None, overrides: Mapping | None = None) -> PcieConfig:
    """PcieConfig for a cell; shape fields come from the cell, the rest from
    ``base`` then ``overrides``."""
    params = dict(base or {})
    params.update(overrides or {})
    if params.get("atl_mode") == "sweep":
        params.pop("atl_mode")
    for fixed in ("lookback", "horizon", "n_channels", "target_channel"):
        params.pop(fixed, None)
    target = cell.manifest["target_channel"]
    tc = cell.channels.index(target) if target in cell.channels else None
    return PcieConfig(lookback=cell.lookback, horizon=cell.horizon, n_channels=len(cell.channels),
                      target_channel=tc, **params)


def build_variant(cell: DatasetCell, variant: VariantSpec, base: Mapping | None, seed: int,
                  atl_mode: str | None = None) -> Module:
    if variant.kind == "direct_linear":
        return direct_linear(cell.lookback, cell.horizon, len(cell.channels), seed)
    overrides = dict(variant.overrides)
    if atl_mode is not None:
        overrides["atl_mode"] = atl_mode
    return PCIE(pcie_config(cell, base, overrides), seed)


def _sweep_modes(variant: VariantSpec, base: Mapping | None) -> list[str | None]:
    mode = dict(base or {}, **variant.overrides).get("atl_mode")
    return list(ATL_MODES) if mode == "sweep" else [None]


def fit_variant(cell: DatasetCell, variant: VariantSpec, base: Mapping | None, train_cfg: TrainConfig,
                checkpoint_dir: Path | None = None) -> tuple[Module, dict]:
    """Train one variant on a cell (running the ATL sweep if requested)."""
    best = None
    for mode in _sweep_modes(variant, base):
        model = build_variant(cell, variant, base, train_cfg.seed, mode)
        model, log = train(model, cell.sets["train"], cell.sets["val"], replace(train_cfg, checkpoint_dir=None))
        info = {"atl_mode": getattr(model.config, "atl_mode", None), "best_epoch": log.best_epoch,
                "best_val_mse": log.best_val_mse, "log": log}
        logger.info("%s %s h=%d atl=%s val_mse=%.6f", variant.name, cell.task, cell.horizon, info["atl_mode"],
                    log.best_val_mse)
        if best is None or log.best_val_mse < best[1]["best_val_mse"]:
            best = (model, info)
    model, info = best
    if checkpoint_dir is not None:
        meta = {"dataset_hash": cell.hash, "variant": variant.name, "task": cell.task, "horizon": cell.horizon,
                "train_config": train_cfg.to_json()}
        save_checkpoint(model, checkpoint_dir, meta)
        info["log"].write(checkpoint_dir)
    return model, info


def predict_cell(cell: DatasetCell, variant: VariantSpec, model: Module | None, split: str = "test") -> np.ndarray:
    ws = cell.sets[split]
    if variant.kind == "persistence":
        return persistence(ws.inputs, cell.horizon, cell.task, cell.channels)
    return model.predict(ws.inputs)


def score_cell(dataset: str, cell: DatasetCell, variant_name: str, pred: np.ndarray,
               split: str = "test") -> ReportRow:
    ws = cell.sets[split]
    mse, mae = metrics(pred, ws.targets)
    raw_mse, raw_mae = metrics(cell.raw_scale(split, pred), cell.raw_scale(split, ws.targets))
    return ReportRow(dataset, cell.task, cell.horizon, variant_name, mse, mae, raw_mse, raw_mae, len(ws),
                     cell.window_hash(split))


def _check_same_protocol(cells: Sequence[DatasetCell]) -> None:
    seen = set()
    for c in cells:
        key = (c.task, c.horizon)
        if key in seen:
            raise DataError(f"duplicate dataset cell for task={c.task} horizon={c.horizon}")
        seen.add(key)


def run_matrix(cells: Sequence[DatasetCell], variants: Sequence[VariantSpec], *, dataset: str = "dataset",
               model_base: Mapping | None = None, train_cfg: TrainConfig | None = None,
               checkpoints: Mapping[tuple[str, str, int], Path] | None = None,
               checkpoint_root: Path | None = None, metadata: Mapping | None = None) -> EvalReport:
    """Score every variant on every cell's test split.

    ``checkpoints`` maps ``(variant, task, horizon)`` to a checkpoint
    directory; trainable variants without one are trained inline (and saved
    under ``checkpoint_root`` when given). A checkpoint whose recorded dataset
    hash differs from the cell's is rejected.
    """
    train_cfg = train_cfg or TrainConfig()
    checkpoints = dict(checkpoints or {})
    _check_same_protocol(cells)
    report = EvalReport(metadata={
        "seed": train_cfg.seed,
        "config_hash": config_hash({"model": dict(model_base or {}), "train": train_cfg.to_json(),
                                    "variants": [(v.name, v.kind, dict(v.overrides)) for v in variants]}),
        "source_revision": source_revision(),
        "variants": [v.name for v in variants],
        **dict(metadata or {}),
    })
    for cell in cells:
        for variant in variants:
            model = None
            if variant.trainable:
                key = (variant.name, cell.task, cell.horizon)
                if key in checkpoints:
                    model, meta = load_checkpoint(checkpoints[key])
                    if meta.get("dataset_hash") != cell.hash:
                        raise DataError(f"checkpoint {checkpoints[key]} was trained on dataset "
                                        f"{meta.get('dataset_hash')}, evaluating on {cell.hash}")
                else:
                    ck = None if checkpoint_root is None else Path(checkpoint_root) / variant.name / cell.path.name
                    model, _ = fit_variant(cell, variant, model_base, train_cfg, ck)
            row = score_cell(dataset, cell, variant.name, predict_cell(cell, variant, model))
            report.rows.append(row)
    report.validate()
    return report


def ablation_no_tokenization(cells: Sequence[DatasetCell], *, dataset: str = "dataset",
                             model_base: Mapping | None = None, train_cfg: TrainConfig | None = None,
                             checkpoint_root: Path | None = None,
                             variants: tuple[VariantSpec, VariantSpec] = (PCIE_VARIANT, NO_TOKENIZATION)
                             ) -> EvalReport:
    """Paired tokenized / untokenized runs that differ only in ``tokenization``."""
    a, b = variants
    for cell in cells:
        ca = pcie_config(cell, model_base, a.overrides).to_json()
        cb = pcie_config(cell, model_base, b.overrides).to_json()
        drift = sorted(k for k in ca if ca[k] != cb[k] and k != "tokenization")
        if drift or ca["tokenization"] == cb["tokenization"]:
            raise ConfigError(f"ablation arms must differ only in tokenization; drift in {drift}")
    return run_matrix(cells, variants, dataset=dataset, model_base=model_base, train_cfg=train_cfg,
                      checkpoint_root=checkpoint_root, metadata={"protocol": "ablation_no_tokenization"})


@dataclass
class ChannelMixResult:
    report: EvalReport
    improvements: dict[tuple[str, int], float]

    @property
    def overall(self) -> float:
        """Arithmetic mean of the per-cell MSE improvements, in percent."""
        return float(np.mean(list(self.improvements.values())))


def _split_signature(cell: DatasetCell) -> tuple:
    return (cell.task, cell.horizon, cell.lookback, json.dumps(cell.manifest["splits"], sort_keys=True),
            tuple(cell.window_hash(s) for s in ("train", "val", "test")))


def channel_mix_ab(raw_cells: Sequence[DatasetCell], mixed_cells: Sequence[DatasetCell], *,
                   dataset: str = "dataset", variant: VariantSpec = PCIE_VARIANT, model_base: Mapping | None = None,
                   train_cfg: TrainConfig | None = None, checkpoint_root: Path | None = None,
                   reference: Mapping[str, float] | None = None,
                   checkpoints: Mapping[str, Mapping[tuple[str, int], Path]] | None = None) -> ChannelMixResult:
    """Train ``variant`` on raw5 and mixed10 builds of the same frames.

    Improvement per cell is ``(MSE_raw5 - MSE_mixed10) / MSE_raw5 * 100``.
    ``checkpoints`` optionally maps an arm (``raw5`` or ``mixed10``) to
    ``{(task, horizon): directory}`` of already trained models.
    """
    raw_by = {(c.task, c.horizon): c for c in raw_cells}
    mixed_by = {(c.task, c.horizon): c for c in mixed_cells}
    if set(raw_by) != set(mixed_by):
        raise DataError(f"arms cover different cells: {sorted(raw_by)} vs {sorted(mixed_by)}")
    for key in raw_by:
        if _split_signature(raw_by[key]) != _split_signature(mixed_by[key]):
            raise DataError(f"raw5 and mixed10 builds of cell {key} use different splits or windows")
    arms = {"raw5": replace(variant, name=f"{variant.name}_raw5"), "mixed10": replace(variant, name=f"{variant.name}_mixed10")}
    unknown = sorted(set(checkpoints or {}) - set(arms))
    if unknown:
        raise ConfigError(f"unknown channel-mix arms {unknown}; expected raw5, mixed10")
    train_cfg = train_cfg or TrainConfig()
    rows = []
    for arm, cells in (("raw5", raw_cells), ("mixed10", mixed_cells)):
        root = None if checkpoint_root is None else Path(checkpoint_root) / arm
        given = {(arms[arm].name, t, h): d for (t, h), d in (checkpoints or {}).get(arm, {}).items()}
        rep = run_matrix(cells, [arms[arm]], dataset=dataset, model_base=model_base, train_cfg=train_cfg,
                         checkpoints=given, checkpoint_root=root)
        rows += rep.rows
    report = EvalReport(rows=rows, metadata={
        "protocol": "channel_mix_ab", "seed": train_cfg.seed, "source_revision": source_revision(),
        "config_hash": config_hash({"model": dict(model_base or {}), "train": train_cfg.to_json()}),
        "reference_improvement_pct": dict(reference if reference is not None else PAPER_CHANNEL_MIX_REFERENCE),
    })
    improvements = {}
    for key in sorted(raw_by):
        r = report.get(dataset, key[0], key[1], arms["raw5"].name)
        m = report.get(dataset, key[0], key[1], arms["mixed10"].name)
        improvements[key] = improvement_pct(r.mse, m.mse)
    result = ChannelMixResult(report, improvements)
    report.metadata["improvement_pct"] = {f"{t}_h{h}": v for (t, h), v in improvements.items()}
    report.metadata["overall_improvement_pct"] = result.overall
    report.validate()
    return result

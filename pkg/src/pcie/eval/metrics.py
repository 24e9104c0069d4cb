from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def metrics(pred: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """(MSE, MAE) averaged over every element."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise ShapeError("cannot score an empty batch")
    err = pred - target
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def improvement_pct(baseline_mse: float, candidate_mse: float) -> float:
    return (baseline_mse - candidate_mse) / baseline_mse * 100.0

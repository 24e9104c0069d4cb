"""Shared oracles for the test-suite: finite differences and tiny data."""

from __future__ import annotations

import datetime as dt
import math

import numpy as np

from pcie import numerics as nx
from pcie.data import StockFrame, derive_pct_channels, load_dataset, write_dataset
from pcie.eval import generate_suite


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max relative error, relative to the largest gradient magnitude."""
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return float(np.abs(a - b).max() / scale)


def check_op_grad(op, *shapes, rng, h=1e-5, positive=False):
    """Gradient check of ``sum(op(*inputs) * w)`` for a random projection ``w``."""
    arrays = [rng.normal(size=s) for s in shapes]
    if positive:
        arrays = [np.abs(a) + 0.5 for a in arrays]
    ts = [nx.Tensor(a, requires_grad=True) for a in arrays]
    out = op(*ts)
    w = rng.normal(size=out.shape)
    nx.backward(nx.sum_(out * w))

    worst = 0.0
    for t in ts:
        def f():
            with nx.no_grad():
                return float((op(*[nx.Tensor(x.data) for x in ts]).data * w).sum())
        worst = max(worst, rel_err(t.grad, numeric_grad(f, t.data, h)))
    return worst


def make_frame(n: int = 120, seed: int = 0, ticker: str = "TST") -> StockFrame:
    """A clean random OHLCV frame that passes every anomaly rule."""
    rng = np.random.default_rng(seed)
    close = 50 * np.exp(np.cumsum(rng.normal(0, 0.01, n)))
    prev = np.concatenate([[close[0]], close[:-1]])
    op = prev * np.exp(rng.normal(0, 0.003, n))
    hi = np.maximum(op, close) * (1 + rng.uniform(0, 0.01, n))
    lo = np.minimum(op, close) * (1 - rng.uniform(0, 0.01, n))
    vol = rng.uniform(1e5, 2e5, n)
    start = dt.date(2020, 1, 1)
    dates = [start + dt.timedelta(days=i) for i in range(n)]
    return StockFrame(ticker, dates, np.column_stack([op, hi, lo, close, vol]))


def closed_form_onecycle(total, max_lr=1e-4, pct=0.3, div=25.0, final_div=1e4):
    """One-cycle learning rates written out step by step."""
    peak = min(round(pct * total), total - 1)
    lo, fin = max_lr / div, max_lr / final_div
    out = []
    for s in range(total):
        if s == peak:
            out.append(max_lr)
        elif s < peak:
            out.append(lo if s == 0 else max_lr + (lo - max_lr) / 2 * (1 + math.cos(math.pi * (s / peak))))
        else:
            out.append(fin + (max_lr - fin) / 2 * (1 + math.cos(math.pi * ((s - peak) / (total - 1 - peak)))))
    return out


def build_cells(root, suite, seed=0, n_tickers=2, length=300, lookback=16, horizons=(2, 4),
                tasks=("forecast", "prediction"), channel_set="mixed10", **suite_kw):
    """Synthesize a suite, write it as a dataset under ``root`` and load the cells."""
    frames = [derive_pct_channels(f) for f in generate_suite(suite, seed, n_tickers, length, **suite_kw)]
    write_dataset(root, frames, lookback, list(horizons), list(tasks), channel_set)
    return load_dataset(root)


# one "[PASS]/[FAIL] criterion N: ..." line per acceptance criterion, echoed by conftest
ACCEPTANCE: list[str] = []

"""Synthetic OHLCV suites with known structure.

``random_walk``
    Gaussian log-returns; persistence is the optimal forecaster.
``ar_trend``
    AR(1) log-returns around a constant drift (momentum, phi = 0.9), so the
    close percentage change is strongly autocorrelated and the level has
    exploitable trends.
``cross_channel``
    Volume changes lead the close: each volume shock enters a slowly decaying
    close drift two days later. The drift is nearly invisible in the close
    alone but is recovered from the recent history of volume changes.

Every suite draws from one ``numpy`` generator seeded by ``seed``; ticker
``k`` uses the child stream ``SeedSequence(seed).spawn(n)[k]``.
"""

from __future__ import annotations

import datetime as dt

import numpy as np

from ..errors import ConfigError
from ..data import StockFrame

SUITES = ("random_walk", "ar_trend", "cross_channel")


def trading_days(n: int, start: dt.date = dt.date(2016, 1, 4)) -> list[dt.date]:
    days, d = [], start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def _ohlcv(rng: np.random.Generator, log_close: np.ndarray, gap: np.ndarray, log_volume: np.ndarray,
           wick: float = 0.004) -> np.ndarray:
    """Assemble OHLCV rows satisfying ``l <= min(o, c) <= max(o, c) <= h``."""
    close = np.exp(log_close)
    prev = np.concatenate([[close[0]], close[:-1]])
    op = prev * np.exp(gap)
    hi = np.maximum(op, close) * np.exp(np.abs(rng.normal(0, wick, close.size)))
    lo = np.minimum(op, close) * np.exp(-np.abs(rng.normal(0, wick, close.size)))
    return np.column_stack([op, hi, lo, close, np.exp(log_volume)])


def random_walk(rng: np.random.Generator, n: int) -> np.ndarray:
    log_close = np.log(50.0) + np.cumsum(rng.normal(0.0, 0.015, n))
    gap = rng.normal(0.0, 0.004, n)
    log_volume = np.log(1e6) + rng.normal(0.0, 0.2, n)
    return _ohlcv(rng, log_close, gap, log_volume)


def ar_trend(rng: np.random.Generator, n: int, phi: float = 0.9, drift: float = 2e-4,
             noise: float = 0.003) -> np.ndarray:
    r = np.empty(n)
    r[0] = drift
    eps = rng.normal(0.0, noise, n)
    for t in range(1, n):
        r[t] = drift + phi * (r[t - 1] - drift) + eps[t]
    log_close = np.log(rng.uniform(30, 120)) + np.cumsum(r)
    gap = rng.normal(0.0, 0.002, n)
    log_volume = np.log(1e6) + rng.normal(0.0, 0.2, n)
    return _ohlcv(rng, log_close, gap, log_volume)


def cross_channel(rng: np.random.Generator, n: int, lag: int = 2, rho: float = 0.9, kappa: float = 0.008,
                  switch: float = 0.01, autocorr: float = 0.6, drift: float = 0.0015, volume_sd: float = 0.1,
                  noise: float = 0.006, gap_sd: float = 0.002, trend_sd: float = 0.003) -> np.ndarray:
    """Volume leads price through structure only a multi-step, nonlinear
    view of the volume changes ``u`` reveals.

    A hidden regime ``z = +-1`` flips with probability ``switch`` per day and
    sets the sign of the lag-1 autocorrelation of ``u`` (``autocorr * z``).
    The close drift is ``drift * z`` plus a persistent term
    ``mu_t = rho * mu_{t-1} + kappa * q_{t-lag}`` driven by the centred
    product of consecutive shocks ``q_t = u_t u_{t-1} / sd^2 - autocorr * z``.
    Both carry zero linear information in ``u``: a model must multiply
    neighbouring steps to read them.

    Log volume also carries a smooth trend (integrated AR(1) slope with
    innovation sd ``trend_sd``) that is uninformative. It dominates the
    volume level inside a window while barely touching day-to-day changes,
    so the shocks are well conditioned in ``vp`` and poorly in ``v``.
    """
    flips = rng.random(n) < switch
    z = np.where(np.cumsum(flips) % 2 == 0, 1.0, -1.0) * rng.choice([-1.0, 1.0])
    e = rng.normal(0.0, volume_sd, n)
    u = np.zeros(n)
    for t in range(1, n):
        u[t] = autocorr * z[t] * u[t - 1] + np.sqrt(1 - autocorr ** 2) * e[t]
    q = u * np.concatenate([[0.0], u[:-1]]) / volume_sd ** 2 - autocorr * z
    mu = np.zeros(n)
    for t in range(1, n):
        mu[t] = rho * mu[t - 1] + (kappa * q[t - lag] if t >= lag else 0.0)
    mu = mu + drift * z
    r = mu + rng.normal(0.0, noise, n)
    log_close = np.log(rng.uniform(30, 120)) + np.cumsum(r)
    fast = np.zeros(n)
    slope = np.zeros(n)
    slow = np.zeros(n)
    for t in range(1, n):
        # mean reversion keeps volume bounded; the change itself carries the signal
        fast[t] = fast[t - 1] + u[t] - 0.02 * fast[t - 1]
        slope[t] = 0.98 * slope[t - 1] + rng.normal(0.0, trend_sd)
        slow[t] = 0.995 * slow[t - 1] + slope[t]
    log_volume = np.log(1e6) + fast + slow
    return _ohlcv(rng, log_close, rng.normal(0.0, gap_sd, n), log_volume)


_GENERATORS = {"random_walk": random_walk, "ar_trend": ar_trend, "cross_channel": cross_channel}


def generate_suite(name: str, seed: int, n_tickers: int = 4, length: int = 1000, **kwargs) -> list[StockFrame]:
    """Raw 5-channel frames of one suite, tickers named ``<SUITE>_<k>``."""
    if name not in _GENERATORS:
        raise ConfigError(f"unknown synthetic suite {name!r}; options: {', '.join(SUITES)}")
    days = trading_days(length)
    frames = []
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(n_tickers)):
        rng = np.random.default_rng(child)
        values = _GENERATORS[name](rng, length, **kwargs)
        frames.append(StockFrame(f"{name.upper()}_{k:02d}", list(days), values))
    return frames

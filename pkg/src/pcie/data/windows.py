"""Chronological 7:1:2 splits, train-only z-scoring and stride-1 windowing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..errors import ConfigError, DataError
from .frame import ALL_CHANNELS, RAW_CHANNELS, StockFrame, derive_pct_channels

SPLITS = ("train", "val", "test")
TASKS = ("forecast", "prediction")
CHANNEL_SETS = {"raw5": RAW_CHANNELS, "mixed10": ALL_CHANNELS}
TARGET_CHANNEL = {"forecast": "c", "prediction": "cp"}


@dataclass(frozen=True)
class SplitSpec:
    """Row boundaries of one ticker's train/val/test regions.

    A window belongs to the region containing its whole target; windows whose
    target would cross into the next region are dropped (the last ``L_f - 1``
    candidates of each region). Inputs may reach back into earlier regions.
    """

    length: int
    train_end: int
    val_end: int
    lookback: int
    horizon: int

    @property
    def test_end(self) -> int:
        return self.length

    def region(self, name: str) -> tuple[int, int]:
        return {"train": (0, self.train_end), "val": (self.train_end, self.val_end),
                "test": (self.val_end, self.length)}[name]

    def target_starts(self, name: str) -> range:
        """First-target row index of every window in the region."""
        lo, hi = self.region(name)
        return range(max(lo, self.lookback), hi - self.horizon + 1)


def split_7_1_2(length: int, lookback: int, horizon: int) -> SplitSpec:
    if lookback < 1 or horizon < 1:
        raise ConfigError("lookback and horizon must be >= 1")
    if length < lookback + horizon + 10:
        raise DataError(f"frame of {length} rows too short for lookback {lookback} + horizon {horizon} + 10")
    return SplitSpec(length, length * 7 // 10, length * 8 // 10, lookback, horizon)


@dataclass(frozen=True)
class NormStats:
    """Per-channel train-region mean and std for one ticker.

    Constant channels keep ``std = 1`` so they map to zeros.
    """

    ticker: str
    channels: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, frame: StockFrame, train_end: int) -> NormStats:
        rows = frame.values[:train_end]
        mu = rows.mean(axis=0)
        sd = rows.std(axis=0)
        const = ~(sd > 0)
        return cls(frame.ticker, frame.channels, mu, np.where(const, 1.0, sd), const)

    def index(self, channel: str) -> int:
        return self.channels.index(channel)

    def normalize(self, values: np.ndarray, channels: tuple[str, ...] | None = None) -> np.ndarray:
        idx = [self.index(c) for c in (channels or self.channels)]
        return (values - self.mean[idx]) / self.std[idx]

    def denormalize(self, values: np.ndarray, channels: tuple[str, ...] | None = None) -> np.ndarray:
        idx = [self.index(c) for c in (channels or self.channels)]
        return values * self.std[idx] + self.mean[idx]

    def to_json(self) -> dict:
        return {"channels": list(self.channels), "mean": self.mean.tolist(), "std": self.std.tolist(),
                "constant": self.constant.tolist()}

    @classmethod
    def from_json(cls, ticker: str, d: dict) -> NormStats:
        return cls(ticker, tuple(d["channels"]), np.array(d["mean"], dtype=np.float64),
                   np.array(d["std"], dtype=np.float64), np.array(d["constant"], dtype=bool))


@dataclass(frozen=True)
class WindowSample:
    input: np.ndarray   # (L, M)
    target: np.ndarray  # (L_f,)
    origin: tuple[str, int]  # (ticker, index of the last input row)


@dataclass
class WindowSet:
    """Column-stacked windows of one split; iterating yields WindowSample."""

    inputs: np.ndarray   # (n, L, M)
    targets: np.ndarray  # (n, L_f)
    origins: list[tuple[str, int]]

    def __len__(self) -> int:
        return len(self.origins)

    def __getitem__(self, i: int) -> WindowSample:
        return WindowSample(self.inputs[i], self.targets[i], self.origins[i])

    def __iter__(self) -> Iterator[WindowSample]:
        return (self[i] for i in range(len(self)))

    @classmethod
    def concat(cls, parts: list[WindowSet]) -> WindowSet:
        parts = [p for p in parts if len(p)]
        if not parts:
            raise DataError("no windows to concatenate")
        return cls(np.concatenate([p.inputs for p in parts]), np.concatenate([p.targets for p in parts]),
                   [o for p in parts for o in p.origins])


def make_windows(frame: StockFrame, split: SplitSpec, task: str, channel_set: str,
                 stats: NormStats | None = None, splits: tuple[str, ...] = SPLITS) -> dict[str, WindowSet]:
    """Window one ticker into z-scored supervised samples for each of ``splits``.

    The frame must carry all ten channels: the prediction target is the cp
    channel even when the input uses only the raw five.
    """
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    if channel_set not in CHANNEL_SETS:
        raise ConfigError(f"unknown channel set {channel_set!r}; expected one of {tuple(CHANNEL_SETS)}")
    if frame.channels != ALL_CHANNELS:
        frame = derive_pct_channels(frame)
    if split.length != len(frame):
        raise DataError(f"{frame.ticker}: split built for {split.length} rows, frame has {len(frame)}")
    stats = stats or NormStats.fit(frame, split.train_end)
    cols = CHANNEL_SETS[channel_set]
    z = stats.normalize(frame.values[:, [frame.channels.index(c) for c in cols]], cols)
    target_ch = TARGET_CHANNEL[task]
    zt = stats.normalize(frame.column(target_ch)[:, None], (target_ch,))[:, 0]
    L, H = split.lookback, split.horizon
    out = {}
    for name in splits:
        starts = np.array(split.target_starts(name), dtype=np.int64)
        if starts.size == 0:
            raise DataError(f"{frame.ticker}: {name} split yields no windows (L={L}, L_f={H}, T={len(frame)})")
        in_idx = starts[:, None] - L + np.arange(L)[None, :]
        tg_idx = starts[:, None] + np.arange(H)[None, :]
        out[name] = WindowSet(z[in_idx], zt[tg_idx], [(frame.ticker, int(s) - 1) for s in starts])
    return out

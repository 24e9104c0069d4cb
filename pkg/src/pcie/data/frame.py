"""Per-ticker OHLCV frames: CSV ingestion, anomaly filtering and the
percentage-change channels."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import DataError

logger = logging.getLogger(__name__)

RAW_CHANNELS = ("o", "h", "l", "c", "v")
PCT_CHANNELS = ("op", "hp", "lp", "cp", "vp")
ALL_CHANNELS = RAW_CHANNELS + PCT_CHANNELS
CSV_HEADER = ("date", "open", "high", "low", "close", "volume")

MAX_ABS_CLOSE_PCT = 80.0
MAX_DROP_FRACTION = 0.05

_MISSING = {"", "nan", "NaN", "null", "NULL", "None"}


@dataclass
class StockFrame:
    """Dated, aligned channel matrix for one ticker.

    ``values`` has one column per entry of ``channels``; ``flags`` marks rows
    whose volume change was undefined (zero volume the day before) and was
    therefore set to 0.
    """

    ticker: str
    dates: list[dt.date]
    values: np.ndarray
    channels: tuple[str, ...] = RAW_CHANNELS
    flags: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.channels):
            raise DataError(f"{self.ticker}: values shape {self.values.shape} does not match {len(self.channels)} channels")
        if self.values.shape[0] != len(self.dates):
            raise DataError(f"{self.ticker}: {len(self.dates)} dates but {self.values.shape[0]} rows")
        if self.flags is None:
            self.flags = np.zeros(len(self.dates), dtype=bool)

    def __len__(self) -> int:
        return len(self.dates)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.channels.index(name)]

    def select(self, rows: np.ndarray) -> StockFrame:
        rows = np.asarray(rows)
        idx = np.flatnonzero(rows) if rows.dtype == bool else rows
        return replace(self, dates=[self.dates[i] for i in idx], values=self.values[idx], flags=self.flags[idx])

    @property
    def raw(self) -> StockFrame:
        idx = [self.channels.index(c) for c in RAW_CHANNELS]
        return replace(self, values=self.values[:, idx], channels=RAW_CHANNELS,
                       flags=np.zeros(len(self), dtype=bool))


def _parse_float(text: str, row: int, column: str, path) -> float:
    text = text.strip()
    if text in _MISSING:
        return float("nan")
    try:
        return float(text)
    except ValueError:
        raise DataError(f"{path}: row {row}: cannot parse {column}={text!r} as a number") from None


def ingest_csv(path, ticker: str | None = None) -> StockFrame:
    """Read ``date,open,high,low,close,volume`` into a raw 5-channel frame.

    Row numbers in error messages are 1-based file lines (the header is
    line 1). Missing values (empty, ``nan``, ``null``) are kept as NaN for
    the anomaly filter to drop.
    """
    path = Path(path)
    ticker = ticker or path.stem
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise DataError(f"{path}: row 1: missing column(s) {', '.join(missing)}")
        col = {c: header.index(c) for c in CSV_HEADER}
        rows: list[tuple[dt.date, list[float], int]] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) < len(header):
                raise DataError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                day = dt.date.fromisoformat(rec[col["date"]].strip())
            except ValueError:
                raise DataError(f"{path}: row {lineno}: bad date {rec[col['date']]!r}") from None
            vals = [_parse_float(rec[col[c]], lineno, c, path) for c in CSV_HEADER[1:]]
            rows.append((day, vals, lineno))
    seen: dict[dt.date, int] = {}
    for day, _, lineno in rows:
        if day in seen:
            raise DataError(f"{path}: row {lineno}: duplicate date {day} (first at row {seen[day]})")
        seen[day] = lineno
    rows.sort(key=lambda r: r[0])
    if not rows:
        raise DataError(f"{path}: no data rows")
    return StockFrame(ticker, [r[0] for r in rows], np.array([r[1] for r in rows]))


def pct_change(series: np.ndarray) -> np.ndarray:
    out = np.zeros_like(series, dtype=np.float64)
    out[1:] = (series[1:] - series[:-1]) / series[:-1] * 100
    return out


def derive_pct_channels(frame: StockFrame) -> StockFrame:
    """Append op, hp, lp, cp, vp (percent change vs. the previous row).

    Row 0 of every percentage channel is 0. A zero price on the previous row
    is an error; a zero previous volume sets vp to 0 and flags the row.
    """
    raw = frame.raw if frame.channels != RAW_CHANNELS else frame
    if len(raw) < 2:
        raise DataError(f"{frame.ticker}: need at least 2 rows to derive percentage changes")
    vals = raw.values
    prices = vals[:-1, :4]
    if np.any(prices == 0):
        r = int(np.argwhere(prices == 0)[0, 0])
        raise DataError(f"{frame.ticker}: zero price on {raw.dates[r]} makes the next percentage change undefined")
    pct = np.zeros_like(vals)
    for j in range(4):
        pct[:, j] = pct_change(vals[:, j])
    vol = vals[:, 4]
    flags = np.zeros(len(raw), dtype=bool)
    prev = vol[:-1]
    zero_prev = prev == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        vp = np.where(zero_prev, 0.0, (vol[1:] - prev) / np.where(zero_prev, 1.0, prev) * 100)
    pct[1:, 4] = vp
    flags[1:] = zero_prev
    if flags.any():
        logger.info("%s: %d rows with zero prior volume, vp set to 0", frame.ticker, int(flags.sum()))
    return StockFrame(frame.ticker, list(raw.dates), np.hstack([vals, pct]), ALL_CHANNELS, flags)


@dataclass(frozen=True)
class Rejection:
    row: int
    date: dt.date
    rule: str


def anomaly_filter(frame: StockFrame, max_drop_fraction: float = MAX_DROP_FRACTION
                   ) -> tuple[StockFrame, list[Rejection]]:
    """Drop invalid rows and return the clean frame plus a rejection log.

    Rules, checked in order: no NaN, positive prices and non-negative volume,
    ``l <= min(o, c)`` and ``h >= max(o, c)``, and a close-to-close move of at
    most 80% against the previous *kept* row. Percentage channels, if present,
    are recomputed on the surviving rows.
    """
    raw = frame.raw if frame.channels != RAW_CHANNELS else frame
    v = raw.values
    keep = np.ones(len(raw), dtype=bool)
    log: list[Rejection] = []
    last_close = None
    for i in range(len(raw)):
        o, h, l, c, vol = v[i]
        rule = None
        if np.isnan(v[i]).any():
            rule = "nan"
        elif min(o, h, l, c) <= 0 or vol < 0:
            rule = "non_positive_price"
        elif l > min(o, c) or h < max(o, c):
            rule = "ohlc_inconsistent"
        elif last_close is not None and abs((c - last_close) / last_close * 100) > MAX_ABS_CLOSE_PCT:
            rule = "close_jump"
        if rule is None:
            last_close = c
        else:
            keep[i] = False
            log.append(Rejection(i, raw.dates[i], rule))
    if len(log) > max_drop_fraction * len(raw):
        raise DataError(f"{frame.ticker}: anomaly filter rejected {len(log)}/{len(raw)} rows "
                        f"(> {max_drop_fraction:.0%}); dataset likely corrupt")
    clean = raw.select(keep)
    if frame.channels == ALL_CHANNELS and len(clean) >= 2:
        clean = derive_pct_channels(clean)
    return clean, log


def write_csv(frame: StockFrame, path) -> None:
    raw = frame.raw if frame.channels != RAW_CHANNELS else frame
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for day, row in zip(raw.dates, raw.values):
            w.writerow([day.isoformat()] + [repr(float(x)) for x in row])

"""OHLCV ingestion, percentage channels, anomaly filtering, splits and windows."""

from pathlib import Path

from ..errors import DataError
from .frame import (
    ALL_CHANNELS,
    CSV_HEADER,
    PCT_CHANNELS,
    RAW_CHANNELS,
    Rejection,
    StockFrame,
    anomaly_filter,
    derive_pct_channels,
    ingest_csv,
    pct_change,
    write_csv,
)
from .store import DatasetCell, cell_name, load_cell, load_dataset, load_index, write_cell, write_dataset
from .windows import (
    CHANNEL_SETS,
    SPLITS,
    TARGET_CHANNEL,
    TASKS,
    NormStats,
    SplitSpec,
    WindowSample,
    WindowSet,
    make_windows,
    split_7_1_2,
)


def load_frames(csv_dir) -> tuple[list[StockFrame], dict[str, list[Rejection]]]:
    """Ingest, filter and enrich every ``*.csv`` in a directory (sorted by name)."""
    paths = sorted(Path(csv_dir).glob("*.csv"))
    if not paths:
        raise DataError(f"{csv_dir}: no CSV files found")
    frames, logs = [], {}
    for p in paths:
        clean, log = anomaly_filter(ingest_csv(p))
        frames.append(derive_pct_channels(clean))
        logs[clean.ticker] = log
    return frames, logs


__all__ = [
    "ALL_CHANNELS", "CHANNEL_SETS", "CSV_HEADER", "DatasetCell", "NormStats", "PCT_CHANNELS",
    "RAW_CHANNELS", "Rejection", "SPLITS", "SplitSpec", "StockFrame", "TARGET_CHANNEL", "TASKS",
    "WindowSample", "WindowSet", "anomaly_filter", "cell_name", "derive_pct_channels", "ingest_csv",
    "load_cell", "load_dataset", "load_frames", "load_index", "make_windows", "pct_change",
    "split_7_1_2", "write_cell", "write_csv", "write_dataset",
]

"""On-disk dataset layout.

A dataset root holds ``index.json`` and one directory per (task, horizon)
cell. Each cell directory is self-describing: ``manifest.json`` records the
tickers, lookback, horizon, task, channel set, split boundaries and NormStats,
and ``<split>.bin`` stores the samples as a little-endian uint64 header
``(count, L, M, L_f)`` followed by ``count`` records of ``L*M`` input values
then ``L_f`` target values, all float64 row-major.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import DataError
from .frame import Rejection, StockFrame
from .windows import CHANNEL_SETS, SPLITS, TARGET_CHANNEL, NormStats, SplitSpec, WindowSet, make_windows, split_7_1_2

DATASET_FORMAT = "pcie-dataset/1"
INDEX_FORMAT = "pcie-dataset-index/1"
_HEADER = struct.Struct("<4Q")


def cell_name(task: str, horizon: int) -> str:
    return f"{task}_h{horizon}"


def dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=1, sort_keys=True) + "\n").encode()


def encode_samples(ws: WindowSet) -> bytes:
    n, L, M = ws.inputs.shape
    H = ws.targets.shape[1]
    body = np.concatenate([ws.inputs.reshape(n, L * M), ws.targets], axis=1)
    return _HEADER.pack(n, L, M, H) + np.ascontiguousarray(body, dtype="<f8").tobytes()


def decode_samples(blob: bytes, origins: list) -> WindowSet:
    if len(blob) < _HEADER.size:
        raise DataError("sample blob shorter than its header")
    n, L, M, H = _HEADER.unpack_from(blob)
    width = L * M + H
    if len(blob) != _HEADER.size + n * width * 8:
        raise DataError(f"sample blob size {len(blob)} inconsistent with header (n={n}, L={L}, M={M}, L_f={H})")
    body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(n, width).astype(np.float64)
    if len(origins) != n:
        raise DataError(f"manifest lists {len(origins)} origins for {n} samples")
    return WindowSet(body[:, :L * M].reshape(n, L, M), body[:, L * M:], [(str(t), int(i)) for t, i in origins])


@dataclass
class DatasetCell:
    path: Path
    manifest: dict
    hash: str
    sets: dict[str, WindowSet]
    stats: dict[str, NormStats]

    @property
    def task(self) -> str:
        return self.manifest["task"]

    @property
    def horizon(self) -> int:
        return self.manifest["horizon"]

    @property
    def lookback(self) -> int:
        return self.manifest["lookback"]

    @property
    def channel_set(self) -> str:
        return self.manifest["channel_set"]

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(self.manifest["channels"])

    def window_hash(self, split: str) -> str:
        return hashlib.sha256(json.dumps(self.manifest["origins"][split]).encode()).hexdigest()

    def raw_scale(self, split: str, values: np.ndarray) -> np.ndarray:
        """De-z-score target-shaped values using each sample's ticker stats."""
        ch = (self.manifest["target_channel"],)
        out = np.empty_like(values)
        for i, (ticker, _) in enumerate(self.sets[split].origins):
            out[i] = self.stats[ticker].denormalize(values[i][:, None], ch)[:, 0]
        return out


def write_cell(directory: Path, frames: list[StockFrame], lookback: int, horizon: int, task: str,
               channel_set: str) -> str:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    parts: dict[str, list[WindowSet]] = {s: [] for s in SPLITS}
    splits, stats = {}, {}
    for frame in frames:
        spec: SplitSpec = split_7_1_2(len(frame), lookback, horizon)
        st = NormStats.fit(frame, spec.train_end)
        for name, ws in make_windows(frame, spec, task, channel_set, st).items():
            parts[name].append(ws)
        splits[frame.ticker] = {"length": spec.length, "train_end": spec.train_end, "val_end": spec.val_end}
        stats[frame.ticker] = st.to_json()
    manifest = {
        "format": DATASET_FORMAT,
        "task": task,
        "horizon": horizon,
        "lookback": lookback,
        "channel_set": channel_set,
        "channels": list(CHANNEL_SETS[channel_set]),
        "target_channel": TARGET_CHANNEL[task],
        "tickers": [f.ticker for f in frames],
        "splits": splits,
        "norm_stats": stats,
        "samples": {},
        "origins": {},
    }
    for name in SPLITS:
        ws = WindowSet.concat(parts[name])
        blob = encode_samples(ws)
        (directory / f"{name}.bin").write_bytes(blob)
        manifest["samples"][name] = {"file": f"{name}.bin", "count": len(ws),
                                     "sha256": hashlib.sha256(blob).hexdigest()}
        manifest["origins"][name] = [list(o) for o in ws.origins]
    raw = dump_json(manifest)
    (directory / "manifest.json").write_bytes(raw)
    return hashlib.sha256(raw).hexdigest()


def write_dataset(root: Path, frames: list[StockFrame], lookback: int, horizons: Iterable[int],
                  tasks: Iterable[str], channel_set: str,
                  rejections: dict[str, list[Rejection]] | None = None) -> dict:
    if not frames:
        raise DataError("no tickers to write")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cells = []
    for task in tasks:
        for h in horizons:
            name = cell_name(task, h)
            digest = write_cell(root / name, frames, lookback, h, task, channel_set)
            cells.append({"task": task, "horizon": h, "dir": name, "hash": digest})
    index = {
        "format": INDEX_FORMAT,
        "tickers": [f.ticker for f in frames],
        "lookback": lookback,
        "channel_set": channel_set,
        "cells": cells,
        "rejections": {t: [[r.row, r.date.isoformat(), r.rule] for r in log]
                       for t, log in sorted((rejections or {}).items())},
    }
    (root / "index.json").write_bytes(dump_json(index))
    return index


def load_cell(directory: Path) -> DatasetCell:
    directory = Path(directory)
    try:
        raw = (directory / "manifest.json").read_bytes()
    except FileNotFoundError:
        raise DataError(f"{directory}: not a dataset cell (manifest.json missing)") from None
    try:
        manifest = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataError(f"{directory}/manifest.json: {exc}") from None
    if manifest.get("format") != DATASET_FORMAT:
        raise DataError(f"{directory}: unsupported dataset format {manifest.get('format')!r}")
    sets = {}
    for name in SPLITS:
        info = manifest["samples"][name]
        blob = (directory / info["file"]).read_bytes()
        if hashlib.sha256(blob).hexdigest() != info["sha256"]:
            raise DataError(f"{directory}/{info['file']}: checksum mismatch")
        sets[name] = decode_samples(blob, manifest["origins"][name])
    stats = {t: NormStats.from_json(t, d) for t, d in manifest["norm_stats"].items()}
    return DatasetCell(directory, manifest, hashlib.sha256(raw).hexdigest(), sets, stats)


def load_index(root: Path) -> dict:
    root = Path(root)
    try:
        index = json.loads((root / "index.json").read_text())
    except FileNotFoundError:
        raise DataError(f"{root}: not a dataset directory (index.json missing)") from None
    if index.get("format") != INDEX_FORMAT:
        raise DataError(f"{root}: unsupported dataset index format {index.get('format')!r}")
    return index


def load_dataset(root: Path, tasks=None, horizons=None) -> list[DatasetCell]:
    """Load the requested cells; every requested (task, horizon) must exist."""
    root = Path(root)
    index = load_index(root)
    have = {(c["task"], c["horizon"]) for c in index["cells"]}
    missing = sorted((t, h) for t in (tasks or {t for t, _ in have}) for h in (horizons or {h for _, h in have})
                     if (t, h) not in have)
    if missing:
        raise DataError(f"{root}: dataset has no cells for (task, horizon) {missing}; "
                        f"available: {sorted(have)}")
    cells = []
    for c in index["cells"]:
        if tasks and c["task"] not in tasks:
            continue
        if horizons and c["horizon"] not in horizons:
            continue
        cell = load_cell(root / c["dir"])
        if cell.hash != c["hash"]:
            raise DataError(f"{root / c['dir']}: manifest hash {cell.hash} != index entry {c['hash']}")
        cells.append(cell)
    if not cells:
        raise DataError(f"{root}: no dataset cells match tasks={tasks} horizons={horizons}")
    return cells

"""Parameter blobs: a JSON manifest of (name, shape, offset) and one
contiguous little-endian float64 buffer. Offsets count elements, not bytes."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import CheckpointError

FORMAT_TAG = "pcie-params/1"
_LE_F64 = np.dtype("<f8")


def pack_params(arrays: Mapping[str, np.ndarray]) -> tuple[dict, bytes]:
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype=_LE_F64)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes(order="C"))
        offset += arr.size
    blob = b"".join(chunks)
    manifest = {
        "format": FORMAT_TAG,
        "count": offset,
        "sha256": hashlib.sha256(blob).hexdigest(),
        "entries": entries,
    }
    return manifest, blob


def unpack_params(manifest: Mapping, blob: bytes) -> dict[str, np.ndarray]:
    if manifest.get("format") != FORMAT_TAG:
        raise CheckpointError(f"unsupported parameter format {manifest.get('format')!r}, expected {FORMAT_TAG!r}")
    try:
        count = int(manifest["count"])
        entries = manifest["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupted parameter manifest: {exc}") from None
    if len(blob) != count * _LE_F64.itemsize:
        raise CheckpointError(f"parameter blob holds {len(blob)} bytes, manifest expects {count * 8}")
    if "sha256" in manifest and hashlib.sha256(blob).hexdigest() != manifest["sha256"]:
        raise CheckpointError("parameter blob checksum mismatch")
    flat = np.frombuffer(blob, dtype=_LE_F64)
    out = {}
    for e in entries:
        try:
            shape = tuple(int(s) for s in e["shape"])
            start = int(e["offset"])
            name = e["name"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"corrupted manifest entry {e!r}: {exc}") from None
        size = int(np.prod(shape)) if shape else 1
        if start < 0 or start + size > count:
            raise CheckpointError(f"entry {name!r} overruns the blob")
        out[name] = flat[start:start + size].reshape(shape).astype(np.float64)
    return out


def save_params(directory: Path, arrays: Mapping[str, np.ndarray], stem: str = "params") -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest, blob = pack_params(arrays)
    (directory / f"{stem}.bin").write_bytes(blob)
    (directory / f"{stem}.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def load_params(directory: Path, stem: str = "params") -> dict[str, np.ndarray]:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / f"{stem}.json").read_text())
        blob = (directory / f"{stem}.bin").read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"missing parameter file: {exc.filename}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupted parameter manifest: {exc}") from None
    return unpack_params(manifest, blob)

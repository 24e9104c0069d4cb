"""Versioned checkpoints: ``checkpoint.json`` (kind, config, seed, dataset
reference, parameter manifest) next to ``params.bin``."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from ..errors import CheckpointError, ConfigError, ShapeError
from ..numerics import pack_params, unpack_params
from .network import Module, build_model

CHECKPOINT_FORMAT = "pcie-checkpoint/1"


def save_checkpoint(model: Module, directory, meta: dict | None = None) -> str:
    """Write the checkpoint and return its sha256 digest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pmanifest, blob = pack_params(model.state_arrays())
    doc = {
        "format": CHECKPOINT_FORMAT,
        "kind": model.kind,
        "config": model.config_json(),
        "seed": model.seed,
        "meta": meta or {},
        "params": pmanifest,
    }
    raw = (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode()
    (directory / "params.bin").write_bytes(blob)
    (directory / "checkpoint.json").write_bytes(raw)
    return hashlib.sha256(raw).hexdigest()


def checkpoint_hash(directory) -> str:
    return hashlib.sha256((Path(directory) / "checkpoint.json").read_bytes()).hexdigest()


def load_checkpoint(directory) -> tuple[Module, dict]:
    directory = Path(directory)
    try:
        doc = json.loads((directory / "checkpoint.json").read_text())
        blob = (directory / "params.bin").read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"missing checkpoint file {exc.filename}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{directory}/checkpoint.json is corrupted: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        found = doc.get("format") if isinstance(doc, dict) else None
        raise CheckpointError(f"{directory}: checkpoint format {found!r}, expected {CHECKPOINT_FORMAT!r}")
    try:
        model = build_model(doc["kind"], doc["config"], doc["seed"])
        model.load_state_arrays(unpack_params(doc["params"], blob))
    except KeyError as exc:
        raise CheckpointError(f"{directory}: checkpoint missing field {exc}") from None
    except (ConfigError, ShapeError, TypeError) as exc:
        raise CheckpointError(f"{directory}: {exc}") from None
    return model, doc.get("meta", {})

"""``pcie`` command line: synth, prepare, train, eval and ablate.

Settings come from a flat JSON run-config file (``--config``) overlaid by
flags; flags win. Outputs default to ``$PCIE_OUTPUT_ROOT`` (``./pcie_out``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .data import CHANNEL_SETS, TASKS, load_dataset, load_frames, write_csv, write_dataset
from .errors import CheckpointError, ConfigError, DataError, GraphError, NumericalError, ShapeError
from .eval import (
    SUITES,
    VARIANTS,
    VariantSpec,
    ablation_no_tokenization,
    channel_mix_ab,
    fit_variant,
    generate_suite,
    run_matrix,
)
from .eval.plotting import improvement_figure, runlog_figure
from .model import ATL_MODES, PcieConfig, checkpoint_hash, load_checkpoint
from .training import TrainConfig

logger = logging.getLogger("pcie")

ENV_OUTPUT_ROOT = "PCIE_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_OTHER = 0, 2, 3, 4, 1

# per-cell fields are derived from the dataset, not configured
_MODEL_KEYS = tuple(f.name for f in fields(PcieConfig) if f.name not in ("horizon", "n_channels", "target_channel"))
_TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name != "checkpoint_dir")

DEFAULTS: dict = {
    **{f.name: f.default for f in fields(PcieConfig) if f.name in _MODEL_KEYS},
    **{f.name: f.default for f in fields(TrainConfig) if f.name in _TRAIN_KEYS},
    "tasks": list(TASKS),
    "horizons": [10, 20, 40, 60],
    "channel_set": "mixed10",
    "variants": ["pcie", "persistence"],
    "dataset_name": None,
    "synth_tickers": 4,
    "synth_length": 1000,
}


def load_run_config(path: str | None, overrides: dict) -> dict:
    """Defaults, then the JSON file, then non-None flag overrides."""
    cfg = dict(DEFAULTS)
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path}: expected a JSON object")
        unknown = sorted(set(doc) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"config file {path}: unknown keys {unknown}")
        cfg.update(doc)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("tasks", "horizons", "variants"):
        if not isinstance(cfg[key], list) or not cfg[key]:
            raise ConfigError(f"{key} must be a non-empty list")
    bad = [t for t in cfg["tasks"] if t not in TASKS]
    if bad:
        raise ConfigError(f"unknown tasks {bad}; options: {', '.join(TASKS)}")
    if cfg["channel_set"] not in CHANNEL_SETS:
        raise ConfigError(f"unknown channel_set {cfg['channel_set']!r}; options: {', '.join(CHANNEL_SETS)}")
    if cfg["atl_mode"] not in ATL_MODES + ("sweep",):
        raise ConfigError(f"unknown atl_mode {cfg['atl_mode']!r}; options: {', '.join(ATL_MODES)}, sweep")
    unknown_v = [v for v in cfg["variants"] if v not in VARIANTS]
    if unknown_v:
        raise ConfigError(f"unknown variants {unknown_v}; options: {', '.join(VARIANTS)}")
    train_config(cfg)
    return cfg


def model_base(cfg: dict) -> dict:
    return {k: cfg[k] for k in _MODEL_KEYS if k != "lookback"}


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(**{k: cfg[k] for k in _TRAIN_KEYS})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def variants(cfg: dict) -> list[VariantSpec]:
    return [VARIANTS[v] for v in cfg["variants"]]


def output_root() -> Path:
    return Path(os.environ.get(ENV_OUTPUT_ROOT, "pcie_out"))


def _dataset_name(cfg: dict, dataset: Path) -> str:
    return cfg["dataset_name"] or Path(dataset).resolve().name


def _load_cells(dataset, cfg: dict):
    return load_dataset(Path(dataset), cfg["tasks"], cfg["horizons"])


def _metadata(command: str, cfg: dict) -> dict:
    return {"command": command, "run_config": cfg}


def _print_paths(paths) -> None:
    for p in paths:
        print(f"wrote {p}")


# -- commands -----------------------------------------------------------------

def prepare(csv_dir: Path, out: Path, cfg: dict) -> dict:
    frames, logs = load_frames(csv_dir)
    index = write_dataset(out, frames, cfg["lookback"], cfg["horizons"], cfg["tasks"], cfg["channel_set"], logs)
    print(f"prepared {len(frames)} tickers x {len(index['cells'])} cells -> {out}")
    print("ticker,rows_rejected,nan,non_positive_price,ohlc_inconsistent,close_jump")
    rules = ("nan", "non_positive_price", "ohlc_inconsistent", "close_jump")
    for ticker, log in sorted(logs.items()):
        counts = [sum(r.rule == rule for r in log) for rule in rules]
        print(",".join([ticker, str(len(log))] + [str(c) for c in counts]))
    return index


def cmd_prepare(args, cfg) -> int:
    csv_dir = Path(args.csv_dir)
    out = Path(args.out) if args.out else output_root() / "datasets" / csv_dir.resolve().name
    prepare(csv_dir, out, cfg)
    return EXIT_OK


def cmd_synth(args, cfg) -> int:
    if args.suite not in SUITES:
        raise ConfigError(f"unknown synthetic suite {args.suite!r}; options: {', '.join(SUITES)}")
    root = Path(args.out) if args.out else output_root() / "synth" / f"{args.suite}_s{cfg['seed']}"
    csv_dir = root / "csv"
    csv_dir.mkdir(parents=True, exist_ok=True)
    for frame in generate_suite(args.suite, cfg["seed"], cfg["synth_tickers"], cfg["synth_length"]):
        write_csv(frame, csv_dir / f"{frame.ticker}.csv")
    prepare(csv_dir, root / "dataset", cfg)
    return EXIT_OK


def _runs_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    return output_root() / "runs" / _dataset_name(cfg, args.dataset)


def cmd_train(args, cfg) -> int:
    cells = _load_cells(args.dataset, cfg)
    out = _runs_dir(args, cfg)
    tcfg = train_config(cfg)
    print("variant,task,horizon,atl_mode,best_epoch,best_val_mse,checkpoint_sha256")
    for variant in variants(cfg):
        if not variant.trainable:
            continue
        for cell in cells:
            ck = out / variant.name / cell.path.name
            _, info = fit_variant(cell, variant, model_base(cfg), tcfg, ck)
            runlog_figure(info["log"], ck / "runlog.png")
            print(f"{variant.name},{cell.task},{cell.horizon},{info['atl_mode']},{info['best_epoch']},"
                  f"{info['best_val_mse']!r},{checkpoint_hash(ck)}")
    return EXIT_OK


def find_checkpoints(root: Path) -> dict[tuple[str, str, int], Path]:
    """Map ``(variant, task, horizon)`` to every checkpoint directory under ``root``."""
    found = {}
    for doc in sorted(Path(root).rglob("checkpoint.json")):
        _, meta = load_checkpoint(doc.parent)
        try:
            key = (meta["variant"], meta["task"], int(meta["horizon"]))
        except KeyError as exc:
            raise CheckpointError(f"{doc.parent}: checkpoint meta lacks {exc}") from None
        if key in found:
            raise CheckpointError(f"two checkpoints for {key}: {found[key]} and {doc.parent}")
        found[key] = doc.parent
    if not found:
        raise CheckpointError(f"no checkpoints found under {root}")
    return found


def cmd_eval(args, cfg) -> int:
    cells = _load_cells(args.dataset, cfg)
    checkpoints = find_checkpoints(Path(args.checkpoints))
    wanted = variants(cfg)
    for v in wanted:
        for cell in cells:
            if v.trainable and (v.name, cell.task, cell.horizon) not in checkpoints:
                raise CheckpointError(f"no checkpoint for variant {v.name} task={cell.task} "
                                      f"horizon={cell.horizon} under {args.checkpoints}")
    report = run_matrix(cells, wanted, dataset=_dataset_name(cfg, args.dataset), model_base=model_base(cfg),
                        train_cfg=train_config(cfg), checkpoints=checkpoints, metadata=_metadata("eval", cfg))
    out = Path(args.out) if args.out else output_root() / "reports" / _dataset_name(cfg, args.dataset)
    sys.stdout.write(report.to_csv())
    print(report.to_text(), end="")
    _print_paths(report.write(out, "report"))
    return EXIT_OK


def cmd_ablate(args, cfg) -> int:
    tcfg = train_config(cfg)
    name = _dataset_name(cfg, args.dataset)
    out = Path(args.out) if args.out else output_root() / "ablations" / name
    if args.kind == "tokenization":
        report = ablation_no_tokenization(_load_cells(args.dataset, cfg), dataset=name, model_base=model_base(cfg),
                                          train_cfg=tcfg, checkpoint_root=out / "checkpoints")
        report.metadata.update(_metadata("ablate tokenization", cfg))
        wins = sum(report.get(name, r.task, r.horizon, "pcie").mse <= r.mse
                   for r in report.rows if r.variant == "pcie_notok")
        report.metadata["tokenized_wins"] = wins
        print(report.to_text(), end="")
        print(f"tokenized <= untokenized in {wins} of {len(report.rows) // 2} cells")
        _print_paths(report.write(out, "tokenization"))
        return EXIT_OK
    if not args.raw5:
        raise ConfigError("channel-mix ablation needs --raw5 DATASET (the dataset argument is the mixed10 build)")
    raw = _load_cells(args.raw5, cfg)
    mixed = _load_cells(args.dataset, cfg)
    if {c.channel_set for c in raw} != {"raw5"} or {c.channel_set for c in mixed} != {"mixed10"}:
        raise DataError("channel-mix ablation needs a raw5 dataset (--raw5) and a mixed10 dataset")
    result = channel_mix_ab(raw, mixed, dataset=name, model_base=model_base(cfg), train_cfg=tcfg,
                            checkpoint_root=out / "checkpoints")
    result.report.metadata.update(_metadata("ablate channel-mix", cfg))
    print(result.report.to_text(), end="")
    print("task,horizon,improvement_pct")
    for (task, h), v in result.improvements.items():
        print(f"{task},{h},{v!r}")
    print(f"overall,,{result.overall!r}")
    paths = result.report.write(out, "channel_mix")
    paths.append(improvement_figure(result.improvements, out / "channel_mix_improvement.png"))
    _print_paths(paths)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON run-config file; flags override its keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int, action="append", dest="horizons", metavar="L_F",
                   help="target length (repeatable)")
    p.add_argument("--task", action="append", dest="tasks", choices=TASKS, help="repeatable")
    p.add_argument("--channel-set", choices=tuple(CHANNEL_SETS))
    p.add_argument("--atl-mode", choices=ATL_MODES + ("sweep",))
    p.add_argument("--no-tokenization", action="store_const", const=False, dest="tokenization")
    p.add_argument("--variant", action="append", dest="variants", choices=tuple(VARIANTS), help="repeatable")
    p.add_argument("--out", help="output directory (default under $PCIE_OUTPUT_ROOT)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcie", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pcie {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic suite and prepare it")
    p.add_argument("suite", help=f"one of {', '.join(SUITES)}")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="build a dataset from a directory of per-ticker CSVs")
    p.add_argument("csv_dir")
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train every trainable variant on every dataset cell")
    p.add_argument("dataset")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score checkpoints and baselines on the test split")
    p.add_argument("dataset")
    p.add_argument("--checkpoints", required=True, help="directory searched for checkpoints")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="tokenization or channel-mix ablation")
    p.add_argument("kind", choices=("tokenization", "channel-mix"))
    p.add_argument("dataset", help="dataset (the mixed10 build for channel-mix)")
    p.add_argument("--raw5", help="raw5 build of the same frames (channel-mix)")
    _add_common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


_OVERRIDE_KEYS = ("seed", "horizons", "tasks", "channel_set", "atl_mode", "tokenization", "variants")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config, {k: getattr(args, k) for k in _OVERRIDE_KEYS})
        return args.func(args, cfg)
    except (ConfigError, ShapeError) as exc:
        print(f"pcie: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"pcie: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"pcie: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GraphError, OSError) as exc:
        print(f"pcie: error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())

"""EvalReport: CSV, JSON and an aligned text table laid out like a
model-comparison table (row groups = dataset x task, rows = horizon,
column pairs = variant MSE/MAE)."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import NumericalError

CSV_COLUMNS = ("dataset", "task", "horizon", "variant", "mse", "mae", "raw_mse", "raw_mae", "n_test",
               "window_hash")


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    task: str
    horizon: int
    variant: str
    mse: float
    mae: float
    raw_mse: float
    raw_mae: float
    n_test: int
    window_hash: str

    @property
    def key(self) -> tuple[str, str, int, str]:
        return self.dataset, self.task, self.horizon, self.variant


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        """Enforce MSE >= 0, MAE >= 0 and MAE <= sqrt(MSE) on every row."""
        for r in self.rows:
            for m, a in ((r.mse, r.mae), (r.raw_mse, r.raw_mae)):
                if not (math.isfinite(m) and math.isfinite(a)) or m < 0 or a < 0:
                    raise NumericalError(f"invalid metrics in row {r.key}: mse={m} mae={a}")
                if a > math.sqrt(m) * (1 + 1e-12):
                    raise NumericalError(f"row {r.key} violates MAE <= sqrt(MSE): mae={a} mse={m}")

    def get(self, dataset: str, task: str, horizon: int, variant: str) -> ReportRow:
        for r in self.rows:
            if r.key == (dataset, task, horizon, variant):
                return r
        raise KeyError((dataset, task, horizon, variant))

    @property
    def variants(self) -> list[str]:
        return list(dict.fromkeys(r.variant for r in self.rows))

    def sorted_rows(self) -> list[ReportRow]:
        order = {v: i for i, v in enumerate(self.variants)}
        return sorted(self.rows, key=lambda r: (r.dataset, r.task, r.horizon, order[r.variant]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.sorted_rows():
            w.writerow([r.dataset, r.task, r.horizon, r.variant, repr(r.mse), repr(r.mae), repr(r.raw_mse),
                        repr(r.raw_mae), r.n_test, r.window_hash])
        return buf.getvalue()

    def to_text(self, digits: int = 4) -> str:
        variants = self.variants
        groups: dict[tuple[str, str], dict[int, dict[str, ReportRow]]] = {}
        for r in self.sorted_rows():
            groups.setdefault((r.dataset, r.task), {}).setdefault(r.horizon, {})[r.variant] = r
        label_w = max([len(f"{d} {t}") for d, t in groups] + [len("Model")])
        cell_w = max(digits + 4, 8)
        pair_w = 2 * cell_w + 1
        names = [v[:pair_w] for v in variants]
        lines = []
        rule = "+" + "-" * (label_w + 2) + "+" + "-" * 6 + "+" + "+".join("-" * (pair_w + 2) for _ in variants) + "+"
        lines.append(rule)
        lines.append(f"| {'Model':<{label_w}} | {'':>4} | " + " | ".join(f"{n:^{pair_w}}" for n in names) + " |")
        lines.append(f"| {'Metric':<{label_w}} | {'L_f':>4} | "
                     + " | ".join(f"{'MSE':>{cell_w}} {'MAE':>{cell_w}}" for _ in variants) + " |")
        lines.append(rule)
        for (dataset, task), by_h in groups.items():
            label = f"{dataset} {task}"
            for i, (h, cells) in enumerate(sorted(by_h.items())):
                vals = []
                for v in variants:
                    r = cells.get(v)
                    vals.append(f"{r.mse:>{cell_w}.{digits}f} {r.mae:>{cell_w}.{digits}f}" if r
                                else f"{'-':>{cell_w}} {'-':>{cell_w}}")
                lines.append(f"| {label if i == 0 else '':<{label_w}} | {h:>4} | " + " | ".join(vals) + " |")
            lines.append(rule)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata, "rows": [asdict(r) for r in self.sorted_rows()]},
                          indent=1, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    def write(self, directory, stem: str = "report", figures: bool = True) -> list[Path]:
        self.validate()
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = [directory / f"{stem}.csv", directory / f"{stem}.txt", directory / f"{stem}.json"]
        paths[0].write_text(self.to_csv())
        paths[1].write_text(self.to_text())
        paths[2].write_text(self.to_json())
        if figures:
            from .plotting import report_figures

            paths += report_figures(self, directory, stem)
        return paths


def read_csv(path) -> list[ReportRow]:
    with Path(path).open(newline="") as fh:
        rows = []
        for rec in csv.DictReader(fh):
            rows.append(ReportRow(rec["dataset"], rec["task"], int(rec["horizon"]), rec["variant"],
                                  float(rec["mse"]), float(rec["mae"]), float(rec["raw_mse"]),
                                  float(rec["raw_mae"]), int(rec["n_test"]), rec["window_hash"]))
    return rows

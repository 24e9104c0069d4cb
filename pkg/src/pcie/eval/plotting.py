"""Figures rendered next to the delimited reports (PNG, Agg backend)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 120,
}
# PNG metadata otherwise embeds the matplotlib version string
_PNG_META = {"Software": None}


def figure_size(width: float = 6.0, ratio: float | None = None) -> tuple[float, float]:
    ratio = ratio or (math.sqrt(5) - 1.0) / 2.0
    return width, width * ratio


def _save(fig, path: Path) -> Path:
    fig.savefig(path, metadata=_PNG_META, bbox_inches="tight")
    plt.close(fig)
    return path


def report_figures(report, directory, stem: str = "report") -> list[Path]:
    """One MSE-vs-horizon panel per (dataset, task), one line per variant."""
    directory = Path(directory)
    groups: dict[tuple[str, str], list] = {}
    for r in report.sorted_rows():
        groups.setdefault((r.dataset, r.task), []).append(r)
    if not groups:
        return []
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(groups), figsize=figure_size(4.0 * len(groups), 0.75 / len(groups)),
                                 squeeze=False)
        for ax, ((dataset, task), rows) in zip(axes[0], groups.items()):
            for variant in dict.fromkeys(r.variant for r in rows):
                pts = sorted((r.horizon, r.mse) for r in rows if r.variant == variant)
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=variant)
            ax.set_title(f"{dataset} {task}")
            ax.set_xlabel("horizon $L_f$")
            ax.set_ylabel("test MSE (z-scored)")
            ax.legend(frameon=False)
        fig.tight_layout()
        return [_save(fig, directory / f"{stem}_mse.png")]


def improvement_figure(cells: dict[tuple[str, int], float], path, title: str = "mixed10 vs raw5") -> Path:
    """Bar chart of per-cell percentage MSE improvement."""
    labels = [f"{t[:4]} {h}" for t, h in cells]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figure_size(6.0, 0.5))
        vals = list(cells.values())
        ax.bar(labels, vals, color=["tab:green" if v > 0 else "tab:red" for v in vals])
        ax.axhline(0.0, color="black", lw=0.8)
        ax.set_ylabel("MSE improvement (%)")
        ax.set_title(title)
        fig.tight_layout()
        return _save(fig, Path(path))


def runlog_figure(log, path) -> Path:
    """Per-step training loss and learning rate, plus per-epoch validation MSE."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=figure_size(8.0, 0.35))
        ax1.semilogy(log.step_losses, lw=0.6, label="train loss")
        ep_steps = [len(log.step_losses) * e.epoch / len(log.epochs) for e in log.epochs]
        ax1.semilogy(ep_steps, [e.val_mse for e in log.epochs], marker="o", ms=3, label="val MSE")
        ax1.set_xlabel("step")
        ax1.legend(frameon=False)
        ax2.plot(log.lr_trace, color="tab:purple")
        ax2.set_xlabel("step")
        ax2.set_ylabel("learning rate")
        fig.tight_layout()
        return _save(fig, Path(path))

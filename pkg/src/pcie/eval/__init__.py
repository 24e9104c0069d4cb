"""Metrics, baselines, synthetic suites and the comparison protocols."""

from .baselines import BASELINE_KINDS, BaselineSpec, direct_linear, persistence
from .metrics import improvement_pct, metrics
from .protocols import (
    DIRECT_LINEAR,
    NO_TOKENIZATION,
    PAPER_CHANNEL_MIX_REFERENCE,
    PCIE_VARIANT,
    PERSISTENCE,
    VARIANTS,
    ChannelMixResult,
    VariantSpec,
    ablation_no_tokenization,
    build_variant,
    channel_mix_ab,
    fit_variant,
    pcie_config,
    run_matrix,
    score_cell,
    source_revision,
)
from .report import CSV_COLUMNS, EvalReport, ReportRow, read_csv
from .synth import SUITES, generate_suite, trading_days

__all__ = [
    "BASELINE_KINDS", "BaselineSpec", "CSV_COLUMNS", "ChannelMixResult", "DIRECT_LINEAR", "EvalReport",
    "NO_TOKENIZATION", "PAPER_CHANNEL_MIX_REFERENCE", "PCIE_VARIANT", "PERSISTENCE", "ReportRow", "SUITES",
    "VARIANTS", "VariantSpec", "ablation_no_tokenization", "build_variant", "channel_mix_ab", "direct_linear",
    "fit_variant", "generate_suite", "improvement_pct", "metrics", "pcie_config", "persistence", "read_csv",
    "run_matrix", "score_cell", "source_revision", "trading_days",
]

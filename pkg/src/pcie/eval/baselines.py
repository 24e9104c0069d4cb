"""Reference predictors that PCIE is compared against."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..model import DirectLinear, LinearConfig

BASELINE_KINDS = ("persistence", "direct_linear")


@dataclass(frozen=True)
class BaselineSpec:
    kind: str

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ConfigError(f"unknown baseline {self.kind!r}; expected one of {BASELINE_KINDS}")

    @property
    def trainable(self) -> bool:
        return self.kind != "persistence"


def persistence(inputs: np.ndarray, horizon: int, task: str, channels: tuple[str, ...]) -> np.ndarray:
    """Last observed close repeated (forecast), or zeros (prediction).

    Everything is on the dataset's z-scored scale: the close input and the
    forecast target share the close channel's stats, so repetition is exact,
    and a zero prediction is the train-region mean change.
    """
    if task == "forecast":
        last = inputs[:, -1, channels.index("c")]
        return np.repeat(last[:, None], horizon, axis=1)
    if task == "prediction":
        return np.zeros((len(inputs), horizon))
    raise ConfigError(f"unknown task {task!r}")


def direct_linear(lookback: int, horizon: int, n_channels: int, seed: int = 0) -> DirectLinear:
    return DirectLinear(LinearConfig(lookback, horizon, n_channels), seed)

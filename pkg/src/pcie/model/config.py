from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError

ATL_MODES = ("shared_linear", "independent_linear", "mlp")


def patch_count(length: int, patch_len: int, stride: int) -> int:
    """Number of patches after padding ``stride`` copies of the last value."""
    if not 1 <= patch_len <= length:
        raise ConfigError(f"patch length {patch_len} must lie in [1, {length}]")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    return (length + stride - patch_len) // stride + 1


@dataclass(frozen=True)
class PcieConfig:
    """Architecture hyperparameters of one PCIE network.

    ``target_channel`` is the input column whose instance statistics undo
    RevIN on the output; ``None`` leaves the head output in normalized units
    (used when the target channel is not among the inputs).
    """

    lookback: int = 96
    horizon: int = 10
    n_channels: int = 10
    patch_len: int = 4
    stride: int = 1
    d_patch: int = 16
    n_heads: int = 4
    n_layers: int = 3
    ff_hidden: int = 128
    atl_hidden: int = 32
    atl_mode: str = "shared_linear"
    dropout: float = 0.1
    revin: bool = True
    tokenization: bool = True
    target_channel: int | None = 3
    revin_eps: float = 1e-5
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    init_std: float = 0.02

    def __post_init__(self):
        if self.lookback < 1 or self.horizon < 1 or self.n_channels < 1:
            raise ConfigError("lookback, horizon and n_channels must be >= 1")
        if self.revin and self.lookback < 2:
            raise ConfigError("RevIN needs lookback >= 2")
        patch_count(self.lookback, self.patch_len, self.stride)
        if self.d_patch < 1 or self.n_layers < 0 or self.ff_hidden < 1 or self.atl_hidden < 1:
            raise ConfigError("d_patch, ff_hidden and atl_hidden must be >= 1, n_layers >= 0")
        if self.n_heads < 1 or self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.atl_mode not in ATL_MODES:
            raise ConfigError(f"unknown atl_mode {self.atl_mode!r}; expected one of {ATL_MODES}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.target_channel is not None and not 0 <= self.target_channel < self.n_channels:
            raise ConfigError(f"target_channel {self.target_channel} outside [0, {self.n_channels})")

    @property
    def d_model(self) -> int:
        return self.d_patch * self.n_channels

    @property
    def n_tokens(self) -> int:
        if not self.tokenization:
            return self.lookback
        return patch_count(self.lookback, self.patch_len, self.stride)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> PcieConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown PcieConfig keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]

"""Parameter containers for the PCIE network and the direct-linear baseline."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import numerics as nx
from ..errors import ConfigError, ShapeError
from ..numerics import BatchNormState, Tensor
from .config import PcieConfig
from .layers import (
    atl_forward,
    channel_mix,
    encoder_forward,
    head_forward,
    patchify,
    revin_denormalize,
    revin_normalize,
)

MODEL_REGISTRY: dict[str, type] = {}


def register(kind: str):
    def deco(cls):
        cls.kind = kind
        MODEL_REGISTRY[kind] = cls
        return cls
    return deco


class Module:
    """Shared plumbing: named parameters, batch-norm buffers and a dropout RNG."""

    kind = "module"

    def __init__(self, seed: int):
        self.seed = int(seed)
        init_seq, drop_seq = np.random.SeedSequence(self.seed).spawn(2)
        self._init_rng = np.random.default_rng(init_seq)
        self.rng = np.random.default_rng(drop_seq)
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, BatchNormState] = {}

    def _normal(self, name: str, shape, std: float) -> None:
        self.params[name] = Tensor(self._init_rng.normal(0.0, std, size=shape), requires_grad=True)

    def _const(self, name: str, shape, value: float) -> None:
        self.params[name] = Tensor(np.full(shape, float(value)), requires_grad=True)

    def zero_grad(self) -> None:
        nx.zero_grad(self.params.values())

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"param/{k}": p.data for k, p in self.params.items()}
        for k, st in self.buffers.items():
            out[f"buffer/{k}.running_mean"] = st.running_mean
            out[f"buffer/{k}.running_var"] = st.running_var
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        expected = set(self.state_arrays())
        if set(arrays) != expected:
            missing, extra = sorted(expected - set(arrays)), sorted(set(arrays) - expected)
            raise ShapeError(f"state mismatch: missing {missing}, unexpected {extra}")
        for k, p in self.params.items():
            arr = arrays[f"param/{k}"]
            if arr.shape != p.shape:
                raise ShapeError(f"parameter {k}: stored shape {arr.shape} != model shape {p.shape}")
            p.data = np.array(arr, dtype=np.float64)
        for k, st in self.buffers.items():
            st.running_mean = np.array(arrays[f"buffer/{k}.running_mean"], dtype=np.float64)
            st.running_var = np.array(arrays[f"buffer/{k}.running_var"], dtype=np.float64)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays().items()}

    def config_json(self) -> dict:
        return self.config.to_json()

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Eval-mode forward without graph recording."""
        outs = []
        with nx.no_grad():
            for i in range(0, len(x), batch_size):
                outs.append(self.forward(x[i:i + batch_size], train=False).data)
        return np.concatenate(outs) if outs else np.zeros((0, self.config.horizon))


@register("pcie")
class PCIE(Module):
    """Patching, adaptive temporal learning, channel mixing, a batch-norm
    transformer encoder and a direct multi-step linear head."""

    def __init__(self, config: PcieConfig, seed: int = 0):
        super().__init__(seed)
        self.config = c = config
        std = c.init_std
        d, n = c.d_model, c.n_tokens
        if c.revin:
            self._const("revin.weight", (c.n_channels,), 1.0)
            self._const("revin.bias", (c.n_channels,), 0.0)
        if c.tokenization:
            if c.atl_mode == "shared_linear":
                self._normal("atl.w", (c.patch_len, c.d_patch), std)
                self._const("atl.b", (c.d_patch,), 0.0)
            elif c.atl_mode == "independent_linear":
                self._normal("atl.w", (c.n_channels, c.patch_len, c.d_patch), std)
                self._const("atl.b", (c.n_channels, 1, c.d_patch), 0.0)
            else:
                self._normal("atl.w1", (c.patch_len, c.atl_hidden), std)
                self._const("atl.b1", (c.atl_hidden,), 0.0)
                self._normal("atl.w2", (c.atl_hidden, c.d_patch), std)
                self._const("atl.b2", (c.d_patch,), 0.0)
        else:
            self._normal("lift.w", (c.n_channels, d), std)
            self._const("lift.b", (d,), 0.0)
        self._normal("pos", (n, d), std)
        for i in range(c.n_layers):
            pre = f"enc{i}"
            for w in ("wq", "wk", "wv", "wo"):
                self._normal(f"{pre}.{w}", (d, d), std)
            self._normal(f"{pre}.ff.w1", (d, c.ff_hidden), std)
            self._const(f"{pre}.ff.b1", (c.ff_hidden,), 0.0)
            self._normal(f"{pre}.ff.w2", (c.ff_hidden, d), std)
            self._const(f"{pre}.ff.b2", (d,), 0.0)
            for bn in ("bn1", "bn2"):
                self._const(f"{pre}.{bn}.gamma", (d,), 1.0)
                self._const(f"{pre}.{bn}.beta", (d,), 0.0)
                self.buffers[f"{pre}.{bn}"] = BatchNormState.fresh(d, c.bn_momentum, c.bn_eps)
        self._normal("head.w", (n * d, c.horizon), std)
        self._const("head.b", (c.horizon,), 0.0)

    def tokens(self, x: np.ndarray) -> tuple[Tensor, object]:
        c = self.config
        state = None
        if c.revin:
            z, state = revin_normalize(x, self.params["revin.weight"], self.params["revin.bias"], c.revin_eps)
        else:
            z = Tensor(x)
        if c.tokenization:
            emb = atl_forward(patchify(z, c.patch_len, c.stride), self.params, c.atl_mode)
            return channel_mix(emb, self.params["pos"]), state
        return z @ self.params["lift.w"] + self.params["lift.b"] + self.params["pos"], state

    def forward(self, x: np.ndarray, train: bool = False) -> Tensor:
        c = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != (c.lookback, c.n_channels):
            raise ShapeError(f"expected windows of shape (B, {c.lookback}, {c.n_channels}), got {x.shape}")
        tok, state = self.tokens(x)
        enc = encoder_forward(tok, self.params, self.buffers, c.n_layers, c.n_heads, c.dropout, self.rng, train)
        y = head_forward(enc, self.params["head.w"], self.params["head.b"])
        if state is not None and c.target_channel is not None:
            y = revin_denormalize(y, state, c.target_channel)
        return y


@dataclass(frozen=True)
class LinearConfig:
    lookback: int
    horizon: int
    n_channels: int
    init_std: float = 0.02

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> LinearConfig:
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad LinearConfig: {exc}") from None


@register("direct_linear")
class DirectLinear(Module):
    """One linear map from the flattened ``L x M`` window to ``L_f`` steps."""

    def __init__(self, config: LinearConfig, seed: int = 0):
        super().__init__(seed)
        self.config = config
        self._normal("w", (config.lookback * config.n_channels, config.horizon), config.init_std)
        self._const("b", (config.horizon,), 0.0)

    def forward(self, x: np.ndarray, train: bool = False) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        c = self.config
        if x.shape[1:] != (c.lookback, c.n_channels):
            raise ShapeError(f"expected windows of shape (B, {c.lookback}, {c.n_channels}), got {x.shape}")
        return Tensor(x.reshape(len(x), -1)) @ self.params["w"] + self.params["b"]


CONFIG_TYPES = {"pcie": PcieConfig, "direct_linear": LinearConfig}


def build_model(kind: str, config_json: dict, seed: int) -> Module:
    if kind not in MODEL_REGISTRY:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_REGISTRY)}")
    return MODEL_REGISTRY[kind](CONFIG_TYPES[kind].from_json(config_json), seed)

"""Functional building blocks of the PCIE network.

Shapes carry a leading batch axis ``B`` throughout: windows are ``(B, L, M)``,
patches ``(B, M, N, P)``, tokens ``(B, N, d_model)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .. import numerics as nx
from ..errors import ConfigError, ShapeError
from ..numerics import Tensor
from .config import ATL_MODES, patch_count


@dataclass(frozen=True)
class RevinState:
    mean: np.ndarray  # (B, 1, M)
    std: np.ndarray   # (B, 1, M)
    weight: Tensor    # (M,)
    bias: Tensor      # (M,)
    eps: float

    @property
    def batch(self) -> int:
        return self.mean.shape[0]

    @property
    def n_channels(self) -> int:
        return self.mean.shape[-1]


def revin_normalize(x: np.ndarray, weight: Tensor, bias: Tensor, eps: float = 1e-5
                    ) -> tuple[Tensor, RevinState]:
    """Per-window, per-channel standardization followed by a learnable affine.

    Statistics use the population variance and are treated as constants.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] < 2:
        raise ShapeError(f"revin_normalize expects (B, L>=2, M), got {x.shape}")
    mu = x.mean(axis=1, keepdims=True)
    sd = np.sqrt(x.var(axis=1, keepdims=True) + eps)
    z = Tensor((x - mu) / sd)
    return z * weight + bias, RevinState(mu, sd, weight, bias, eps)


def revin_denormalize(y: Tensor, state: RevinState, channel: int) -> Tensor:
    """Invert the affine, then restore ``channel``'s instance mean and std."""
    if y.ndim != 2 or y.shape[0] != state.batch:
        raise ShapeError(f"revin state was captured for batch {state.batch}, output has shape {y.shape}")
    if not 0 <= channel < state.n_channels:
        raise ShapeError(f"channel {channel} outside revin state with {state.n_channels} channels")
    w = state.weight[channel]
    b = state.bias[channel]
    y = (y - b) / (w + state.eps * state.eps)
    return y * state.std[:, 0, channel:channel + 1] + state.mean[:, 0, channel:channel + 1]


def patchify(x: Tensor, patch_len: int, stride: int) -> Tensor:
    """Pad each channel with ``stride`` copies of its last value and unfold.

    ``x`` is ``(B, L, M)``; the result is ``(B, M, N, P)``.
    """
    x = nx.as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"patchify expects (B, L, M), got {x.shape}")
    length = x.shape[1]
    if patch_len > length:
        raise ConfigError(f"patch length {patch_len} exceeds window length {length}")
    n = patch_count(length, patch_len, stride)
    xt = x.transpose(0, 2, 1)
    pad = xt[:, :, [length - 1] * stride]
    padded = nx.concat([xt, pad], axis=2)
    idx = np.arange(n)[:, None] * stride + np.arange(patch_len)[None, :]
    return padded[:, :, idx]


def atl_forward(patches: Tensor, params: Mapping[str, Tensor], mode: str) -> Tensor:
    """Embed every length-P patch into d_patch.

    ``shared_linear`` uses one ``W (P, d_patch)`` for all channels,
    ``independent_linear`` a per-channel ``W (M, P, d_patch)``, and ``mlp`` a
    shared P -> hidden -> d_patch network with GELU.
    """
    if mode == "shared_linear":
        return patches @ params["atl.w"] + params["atl.b"]
    if mode == "independent_linear":
        # (B, M, N, P) @ (M, P, d) broadcasts over the channel axis
        return patches @ params["atl.w"] + params["atl.b"]
    if mode == "mlp":
        h = nx.gelu(patches @ params["atl.w1"] + params["atl.b1"])
        return h @ params["atl.w2"] + params["atl.b2"]
    raise ConfigError(f"unknown atl mode {mode!r}; expected one of {ATL_MODES}")


def channel_mix(atl_out: Tensor, w_pos: Tensor) -> Tensor:
    """Concatenate the M channel embeddings at each patch position (channel
    order preserved) and add the learnable position table ``(N, d_model)``."""
    b, m, n, d = atl_out.shape
    if w_pos.shape != (n, m * d):
        raise ShapeError(f"position table {w_pos.shape} does not match ({n}, {m * d})")
    return atl_out.transpose(0, 2, 1, 3).reshape(b, n, m * d) + w_pos


def multi_head_attention(x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor, n_heads: int,
                         dropout: float = 0.0, rng: np.random.Generator | None = None,
                         train: bool = False) -> Tensor:
    b, n, d = x.shape
    if d % n_heads:
        raise ConfigError(f"d_model={d} is not divisible by n_heads={n_heads}")
    dk = d // n_heads

    def heads(t: Tensor) -> Tensor:
        return t.reshape(b, n, n_heads, dk).transpose(0, 2, 1, 3)

    q, k, v = heads(x @ wq), heads(x @ wk), heads(x @ wv)
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dk))
    attn = nx.dropout(nx.softmax_lastdim(scores), dropout, rng, train)
    ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(b, n, d)
    return ctx @ wo


def _token_batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: nx.BatchNormState, train: bool) -> Tensor:
    b, n, d = x.shape
    return nx.batchnorm(x.reshape(b * n, d), gamma, beta, state, train).reshape(b, n, d)


def encoder_layer(x: Tensor, params: Mapping[str, Tensor], prefix: str,
                  bn: Mapping[str, nx.BatchNormState], n_heads: int, dropout: float,
                  rng: np.random.Generator | None, train: bool) -> Tensor:
    p = lambda name: params[f"{prefix}.{name}"]  # noqa: E731
    att = multi_head_attention(x, p("wq"), p("wk"), p("wv"), p("wo"), n_heads, dropout, rng, train)
    x = _token_batchnorm(x + att, p("bn1.gamma"), p("bn1.beta"), bn[f"{prefix}.bn1"], train)
    ff = nx.gelu(x @ p("ff.w1") + p("ff.b1")) @ p("ff.w2") + p("ff.b2")
    ff = nx.dropout(ff, dropout, rng, train)
    return _token_batchnorm(x + ff, p("bn2.gamma"), p("bn2.beta"), bn[f"{prefix}.bn2"], train)


def encoder_forward(tokens: Tensor, params: Mapping[str, Tensor], bn: Mapping[str, nx.BatchNormState],
                    n_layers: int, n_heads: int, dropout: float = 0.0,
                    rng: np.random.Generator | None = None, train: bool = False) -> Tensor:
    x = tokens
    for i in range(n_layers):
        x = encoder_layer(x, params, f"enc{i}", bn, n_heads, dropout, rng, train)
    return x


def head_forward(encoded: Tensor, w_f: Tensor, b_f: Tensor) -> Tensor:
    """Flatten ``(B, N, d_model)`` and map to all ``L_f`` steps at once.

    ``w_f`` is stored input-major, ``(N * d_model, L_f)``.
    """
    flat = nx.flatten(encoded, 1)
    if w_f.shape[0] != flat.shape[1]:
        raise ShapeError(f"head weight {w_f.shape} does not accept {flat.shape[1]} flattened features")
    return flat @ w_f + b_f

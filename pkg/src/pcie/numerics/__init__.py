"""Minimal float64 tensor engine with reverse-mode autodiff, Adam and one-cycle LR."""

from .optim import AdamState, OneCycleSchedule, adam_step, onecycle_lr
from .serialize import FORMAT_TAG, load_params, pack_params, save_params, unpack_params
from .tensor import (
    BatchNormState,
    Tensor,
    add,
    as_tensor,
    backward,
    batchnorm,
    concat,
    div,
    dropout,
    flatten,
    gelu,
    getitem,
    grad_enabled,
    matmul,
    mean,
    mse,
    mul,
    no_grad,
    relu,
    reshape,
    softmax_lastdim,
    sub,
    sum_,
    transpose,
    zero_grad,
)

__all__ = [
    "AdamState", "BatchNormState", "FORMAT_TAG", "OneCycleSchedule", "Tensor",
    "adam_step", "add", "as_tensor", "backward", "batchnorm", "concat", "div", "dropout",
    "flatten", "gelu", "getitem", "grad_enabled", "load_params", "matmul", "mean", "mse",
    "mul", "no_grad", "onecycle_lr", "pack_params", "relu", "reshape", "save_params",
    "softmax_lastdim", "sub", "sum_", "transpose", "unpack_params", "zero_grad",
]

"""The PCIE network and its checkpoints."""

from .checkpoint import CHECKPOINT_FORMAT, checkpoint_hash, load_checkpoint, save_checkpoint
from .config import ATL_MODES, PcieConfig, patch_count
from .layers import (
    RevinState,
    atl_forward,
    channel_mix,
    encoder_forward,
    head_forward,
    multi_head_attention,
    patchify,
    revin_denormalize,
    revin_normalize,
)
from .network import MODEL_REGISTRY, PCIE, DirectLinear, LinearConfig, Module, build_model

__all__ = [
    "ATL_MODES", "CHECKPOINT_FORMAT", "DirectLinear", "LinearConfig", "MODEL_REGISTRY", "Module",
    "PCIE", "PcieConfig", "RevinState", "atl_forward", "build_model", "channel_mix",
    "checkpoint_hash", "encoder_forward", "head_forward", "load_checkpoint", "multi_head_attention",
    "patch_count", "patchify", "revin_denormalize", "revin_normalize", "save_checkpoint",
]

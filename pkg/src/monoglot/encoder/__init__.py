from .model import (
    LN_EPS,
    ModelConfig,
    NoMaskedPositions,
    compute_gradients,
    desk_config,
    encoder_forward,
    encoder_backward,
    forward_mlm,
    init_model,
    param_shapes,
    production_config,
)
from .optim import AdamState, adam_step, init_adam, linear_schedule_lr
from .checkpoint import (
    CheckpointError,
    EncoderCheckpoint,
    load_checkpoint,
    save_checkpoint,
    vocab_fingerprint,
)
from .training import PretrainSchedule, pretrain

__all__ = [
    "LN_EPS",
    "ModelConfig",
    "NoMaskedPositions",
    "compute_gradients",
    "desk_config",
    "encoder_forward",
    "encoder_backward",
    "forward_mlm",
    "init_model",
    "param_shapes",
    "production_config",
    "AdamState",
    "adam_step",
    "init_adam",
    "linear_schedule_lr",
    "CheckpointError",
    "EncoderCheckpoint",
    "load_checkpoint",
    "save_checkpoint",
    "vocab_fingerprint",
    "PretrainSchedule",
    "pretrain",
]

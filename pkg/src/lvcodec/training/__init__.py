"""Rate-distortion training at desk scale."""

from .data import ClipSampler, overlay_clip, periodic_pattern, smooth_texture, synthetic_dataset, translating_clip
from .losses import RDLossConfig, distortion, ms_ssim_t, rd_loss
from .optim import Adam
from .trainer import (
    CurriculumConfig,
    StepResult,
    TrainingError,
    TrainResult,
    clip_length_schedule,
    forward_clip,
    load_checkpoint,
    load_model,
    me_endpoint_error,
    pframes_at,
    pretrain_me,
    rate_weight_at,
    run_curriculum,
    save_checkpoint,
    sidecar_path,
    train_codec,
    train_step,
    translation_pair,
)

__all__ = [
    "Adam", "ClipSampler", "CurriculumConfig", "RDLossConfig", "StepResult", "TrainResult",
    "TrainingError", "clip_length_schedule", "distortion", "forward_clip", "load_checkpoint",
    "load_model", "me_endpoint_error", "ms_ssim_t", "overlay_clip", "periodic_pattern",
    "pframes_at", "pretrain_me", "rate_weight_at", "rd_loss", "run_curriculum", "save_checkpoint", "sidecar_path",
    "smooth_texture", "synthetic_dataset", "train_codec", "train_step", "translating_clip", "translation_pair",
]

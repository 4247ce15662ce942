"""boxvid: subject- and box-trajectory-conditioned video generation at desk
scale, trained and evaluated end-to-end on a synthetic moving-shapes corpus."""

from .diffusion import (
    NoiseSchedule,
    ScheduleConfig,
    add_noise,
    cfg_combine,
    ddim_sample,
    make_schedule,
    reweighted_loss,
)
from .geometry import (
    Box,
    BoxSequence,
    MaskVideo,
    blend_mask,
    interpolate_trajectory,
    invert_mask,
    rasterize_boxes,
    resize_to_latent,
)
from .model import ModelConfig, VideoCustomizer, build_conditioning, build_model
from .training import TrainConfig, prepare_batch, train, train_step

__all__ = [
    "Box",
    "BoxSequence",
    "MaskVideo",
    "ModelConfig",
    "NoiseSchedule",
    "ScheduleConfig",
    "TrainConfig",
    "VideoCustomizer",
    "add_noise",
    "blend_mask",
    "build_conditioning",
    "build_model",
    "cfg_combine",
    "ddim_sample",
    "interpolate_trajectory",
    "invert_mask",
    "make_schedule",
    "prepare_batch",
    "rasterize_boxes",
    "resize_to_latent",
    "reweighted_loss",
    "train",
    "train_step",
]

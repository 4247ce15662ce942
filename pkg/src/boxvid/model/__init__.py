from .codec import decode_video, encode_video
from .conditioning import (
    ConditioningBundle,
    build_conditioning,
    build_null_conditioning,
    collate_conditioning,
    null_trajectory,
)
from .config import ModelConfig, tiny_config
from .denoiser import VideoCustomizer, build_model
from .layers import ReferenceAttention, attention
from .motion import MotionModule, SpatioTemporalEncoder

__all__ = [
    "ConditioningBundle",
    "ModelConfig",
    "MotionModule",
    "ReferenceAttention",
    "SpatioTemporalEncoder",
    "VideoCustomizer",
    "attention",
    "build_conditioning",
    "build_model",
    "build_null_conditioning",
    "collate_conditioning",
    "decode_video",
    "encode_video",
    "null_trajectory",
    "tiny_config",
]

"""Sampling entry points: latent DDIM plus pixel decoding and preview
rendering with target-box overlays."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .diffusion import ddim_sample
from .geometry import BoxSequence
from .model.codec import decode_video
from .model.conditioning import ConditioningBundle


def sample_video(model, cond: ConditioningBundle, num_steps: int,
                 guidance_scale: float, seed: int) -> np.ndarray:
    """One conditioned video as uint8 (F, H, W, 3); deterministic per seed."""
    model.eval()
    model.cache_subject_features(cond)
    null = None
    if guidance_scale != 1.0:
        null = model.null_conditioning(cond.batch_size)
        model.cache_subject_features(null)
    z = ddim_sample(model, cond, num_steps, guidance_scale, seed, null_cond=null)
    return decode_video(z[0], model.config.codec_block)


def sample_video_batch(model, cond: ConditioningBundle, num_steps: int,
                       guidance_scale: float, seed: int) -> list[np.ndarray]:
    """Batched variant; one shared noise seed for the whole batch."""
    model.eval()
    model.cache_subject_features(cond)
    null = None
    if guidance_scale != 1.0:
        null = model.null_conditioning(cond.batch_size)
        model.cache_subject_features(null)
    z = ddim_sample(model, cond, num_steps, guidance_scale, seed, null_cond=null)
    return [decode_video(z[i], model.config.codec_block) for i in range(z.shape[0])]


def video_digest(video: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(video).tobytes()).hexdigest()


def write_preview_gif(video: np.ndarray, boxes: BoxSequence, path: str | Path,
                      upscale: int = 4, duration_ms: int = 150) -> None:
    """Animated preview with the target boxes drawn over every frame."""
    frames = []
    f, h, w, _ = video.shape
    for i in range(f):
        img = Image.fromarray(video[i]).resize((w * upscale, h * upscale),
                                               Image.Resampling.NEAREST)
        draw = ImageDraw.Draw(img)
        b = boxes[i]
        draw.rectangle(
            [b.x1 * w * upscale, b.y1 * h * upscale,
             max(b.x1, b.x2) * w * upscale - 1, max(b.y1, b.y2) * h * upscale - 1],
            outline=(255, 255, 255), width=2,
        )
        frames.append(img)
    frames[0].save(path, save_all=True, append_images=frames[1:],
                   duration=duration_ms, loop=0)

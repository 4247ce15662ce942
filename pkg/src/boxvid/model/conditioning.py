"""Conditioning bundles: caption embedding, subject image, motion signal, and
per-resolution blended masks, all derived from one box trajectory."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from ..geometry import Box, BoxSequence, blend_mask, invert_mask, rasterize_boxes, resize_to_latent
from ..vocab import encode_caption
from .codec import encode_video


@dataclass
class ConditioningBundle:
    """Batched conditioning; every tensor carries a leading batch axis."""

    text_embedding: torch.Tensor           # (B, L, D)
    subject_image: np.ndarray              # (B, H, W, 3) uint8
    subject_latent: torch.Tensor           # (B, 1, h, w, C)
    motion_signal: torch.Tensor            # (B, F, H, W), values in [0, 1]
    blended_masks: dict                    # {(h, w): (B, F, h, w)}
    subject_sites: Optional[list] = field(default=None, repr=False)

    @property
    def batch_size(self) -> int:
        return self.text_embedding.shape[0]

    def __post_init__(self):
        b = self.batch_size
        for name in ("subject_latent", "motion_signal"):
            tensor = getattr(self, name)
            if tensor.shape[0] != b:
                raise ValueError(
                    f"invalid-conditioning: {name} batch {tensor.shape[0]} != {b}"
                )
        for res, mask in self.blended_masks.items():
            if mask.shape[0] != b or tuple(mask.shape[2:]) != tuple(res):
                raise ValueError(
                    f"invalid-conditioning: blended mask for {res} has shape "
                    f"{tuple(mask.shape)}"
                )


def build_conditioning(model, boxes: BoxSequence, subject_image: np.ndarray,
                       caption_tokens, lambda_m: Optional[float] = None) -> ConditioningBundle:
    """Single-sample bundle from a trajectory, a subject image, and a caption.

    The pixel mask, the motion signal (its complement), and the per-site
    blended masks all come from the same box sequence.
    """
    cfg = model.config
    if len(boxes) != cfg.frames:
        raise ValueError(
            f"invalid-conditioning: {len(boxes)} boxes for a {cfg.frames}-frame model"
        )
    if lambda_m is None:
        lambda_m = model.lambda_m
    dtype = model.dtype

    ids = torch.as_tensor(
        encode_caption(caption_tokens, cfg.text_length), dtype=torch.long
    ).unsqueeze(0)
    text = model.embed_caption(ids)

    if subject_image.shape != (cfg.pixel_size, cfg.pixel_size, 3):
        raise ValueError(
            f"invalid-input: subject image shape {subject_image.shape}, expected "
            f"({cfg.pixel_size}, {cfg.pixel_size}, 3)"
        )
    subj_latent = encode_video(subject_image[None], cfg.codec_block).unsqueeze(0).to(dtype)

    mask_pix = rasterize_boxes(boxes, cfg.pixel_size, cfg.pixel_size)
    motion = torch.from_numpy(invert_mask(mask_pix).values).to(dtype).unsqueeze(0)

    blended = {}
    for res in cfg.site_resolutions:
        lat = resize_to_latent(mask_pix, res[0], res[1])
        blended[res] = torch.from_numpy(blend_mask(lat, lambda_m).values).to(dtype).unsqueeze(0)

    return ConditioningBundle(
        text_embedding=text,
        subject_image=subject_image[None],
        subject_latent=subj_latent,
        motion_signal=motion,
        blended_masks=blended,
    )


def null_trajectory(frames: int) -> BoxSequence:
    """Degenerate zero-area boxes: no foreground anywhere."""
    return BoxSequence(tuple(Box(0.0, 0.0, 0.0, 0.0) for _ in range(frames)))


def build_null_conditioning(model, blank_value: int) -> ConditioningBundle:
    """The dropped-conditioning branch for classifier-free guidance: pad-only
    caption, blank subject image, and the null trajectory."""
    cfg = model.config
    blank = np.full((cfg.pixel_size, cfg.pixel_size, 3), blank_value, dtype=np.uint8)
    return build_conditioning(model, null_trajectory(cfg.frames), blank, ())


def collate_conditioning(bundles: list[ConditioningBundle]) -> ConditioningBundle:
    return ConditioningBundle(
        text_embedding=torch.cat([b.text_embedding for b in bundles]),
        subject_image=np.concatenate([b.subject_image for b in bundles]),
        subject_latent=torch.cat([b.subject_latent for b in bundles]),
        motion_signal=torch.cat([b.motion_signal for b in bundles]),
        blended_masks={
            res: torch.cat([b.blended_masks[res] for b in bundles])
            for res in bundles[0].blended_masks
        },
    )

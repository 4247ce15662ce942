"""Fixed latent codec: value scaling to [-1, 1] plus space-to-depth.

Deterministic and exactly invertible; stands in for a learned VAE. A block
size of 4 maps (F, 64, 64, 3) uint8 video to (F, 16, 16, 48) float latents.
"""

from __future__ import annotations

import numpy as np
import torch


def encode_video(video: np.ndarray, block: int = 4) -> torch.Tensor:
    """uint8 (F, H, W, 3) -> float32 latent (F, H/block, W/block, 3*block^2)."""
    if video.ndim != 4 or video.shape[-1] != 3:
        raise ValueError(f"invalid-input: expected (F, H, W, 3), got {video.shape}")
    f, h, w, c = video.shape
    if h % block != 0 or w % block != 0:
        raise ValueError(f"invalid-input: {h}x{w} not divisible by block {block}")
    unit = video.astype(np.float32) / 127.5 - 1.0
    x = torch.from_numpy(unit)
    return space_to_depth(x, block)


def decode_video(latent: torch.Tensor, block: int = 4) -> np.ndarray:
    """Latent -> uint8 (F, H, W, 3), rounding and clipping pixel values."""
    unit = depth_to_space(latent, block).detach().cpu().numpy()
    return np.clip(np.rint((unit + 1.0) * 127.5), 0, 255).astype(np.uint8)


def space_to_depth(x: torch.Tensor, block: int) -> torch.Tensor:
    """(F, H, W, C) -> (F, H/b, W/b, C*b*b), inverse of depth_to_space."""
    f, h, w, c = x.shape
    x = x.reshape(f, h // block, block, w // block, block, c)
    x = x.permute(0, 1, 3, 2, 4, 5)
    return x.reshape(f, h // block, w // block, block * block * c)


def depth_to_space(x: torch.Tensor, block: int) -> torch.Tensor:
    f, h, w, c = x.shape
    cc = c // (block * block)
    x = x.reshape(f, h, w, block, block, cc)
    x = x.permute(0, 1, 3, 2, 4, 5)
    return x.reshape(f, h * block, w * block, cc)

"""Mask-guided motion module: a lightweight spatiotemporal encoder over the
motion signal plus a quarter-width control branch injecting zero-gated
residuals into the base decoder."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .layers import Downsample, ResBlock, SpatialTransformer, TemporalAttention, ZeroConv


class SpatioTemporalEncoder(nn.Module):
    """Three conv stages (stride 2, 2, 1), two temporal attention layers, and
    an output 1x1 conv; maps the pixel-resolution motion signal down to the
    latent grid."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cm = cfg.motion_channels
        self.conv1 = nn.Conv2d(1, cm // 4, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(cm // 4, cm // 2, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(cm // 2, cm, 3, stride=1, padding=1)
        self.temporal1 = TemporalAttention(cm, cfg.frames)
        self.temporal2 = TemporalAttention(cm, cfg.frames)
        self.conv_out = nn.Conv2d(cm, cm, 1)

    def forward(self, motion_signal: torch.Tensor) -> torch.Tensor:
        """(B, F, H, W) motion signal -> (B*F, C_m, h, w) features."""
        b, frames, hh, ww = motion_signal.shape
        x = motion_signal.reshape(b * frames, 1, hh, ww)
        x = F.silu(self.conv1(x))
        x = F.silu(self.conv2(x))
        x = F.silu(self.conv3(x))
        x = self.temporal1(x, frames)
        x = self.temporal2(x, frames)
        return self.conv_out(x)


class ControlBranch(nn.Module):
    """Trainable quarter-width copy of the base encoder. Encoded motion
    features are fused with the noisy latent by summation after a learned 1x1
    projection; per-level features pass through zero-initialized projections
    sized to the decoder block inputs, so a fresh branch contributes nothing."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.gain = cfg.injection_gain
        div = cfg.control_divisor
        ch = tuple(w // div for w in cfg.channel_widths)
        groups = max(1, cfg.norm_groups // div)
        head = max(1, cfg.attention_head_dim // div)
        self.conv_in = nn.Conv2d(cfg.latent_channels, ch[0], 3, padding=1)
        self.fuse = nn.Conv2d(cfg.motion_channels, ch[0], 1)
        self.res = nn.ModuleList()
        self.tf = nn.ModuleList()
        self.temp = nn.ModuleList()
        self.downs = nn.ModuleList()
        self.zero_proj = nn.ModuleList()
        for i, width in enumerate(ch):
            self.res.append(ResBlock(width, width, cfg.time_embed_dim, groups))
            self.tf.append(
                SpatialTransformer(width, cfg.text_embed_dim, head, cfg.ff_mult,
                                   groups, with_reference=False)
            )
            self.temp.append(TemporalAttention(width, cfg.frames))
            self.zero_proj.append(ZeroConv(width, 2 * cfg.channel_widths[i]))
            if i < len(ch) - 1:
                self.downs.append(Downsample(width, ch[i + 1]))

    def forward(self, z_bf: torch.Tensor, encoded: torch.Tensor, temb_bf: torch.Tensor,
                text: torch.Tensor, frames: int) -> list[torch.Tensor]:
        if encoded.shape[0] != z_bf.shape[0]:
            raise ValueError(
                f"invalid-shape: encoded motion batch {encoded.shape[0]} vs latent "
                f"batch {z_bf.shape[0]}"
            )
        h = self.conv_in(z_bf) + self.fuse(encoded)
        feats = []
        for i in range(len(self.res)):
            h = self.res[i](h, temb_bf)
            h = self.tf[i](h, text, frames)
            h = self.temp[i](h, frames)
            feats.append(self.zero_proj[i](h) * self.gain)
            if i < len(self.downs):
                h = self.downs[i](h)
        return [feats[i] for i in reversed(range(len(feats)))]


class MotionModule(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.encoder = SpatioTemporalEncoder(cfg)
        self.control = ControlBranch(cfg)

    def spatiotemporal_encode(self, motion_signal: torch.Tensor) -> torch.Tensor:
        if motion_signal.ndim != 4:
            raise ValueError(
                f"invalid-input: expected (B, F, H, W) motion signal, got "
                f"{tuple(motion_signal.shape)}"
            )
        return self.encoder(motion_signal)

    def control_residuals(self, encoded: torch.Tensor, z: torch.Tensor,
                          temb: torch.Tensor, text: torch.Tensor) -> list[torch.Tensor]:
        """Residuals in decoder application order (deepest level first)."""
        b, frames, hh, ww, c = z.shape
        z_bf = z.permute(0, 1, 4, 2, 3).reshape(b * frames, c, hh, ww)
        temb_bf = temb.repeat_interleave(frames, dim=0)
        return self.control(z_bf, encoded, temb_bf, text, frames)

"""Building blocks for the toy video UNet.

Internal layout: spatial ops run on (B*F, C, H, W); spatial transformers run
on token grids (B*F, H*W, C); temporal attention folds space into the batch
and attends over the F frame positions. All attention is single-head.
"""

from __future__ import annotations

import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Softmax(Q K^T / sqrt(d)) V, batched over leading dims.

    Reference formulation used directly by tests; model layers call the
    equivalent fused kernel.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(
            f"invalid-shape: query dim {q.shape[-1]} != key dim {k.shape[-1]}"
        )
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(
            f"invalid-shape: {k.shape[-2]} keys vs {v.shape[-2]} values"
        )
    d = q.shape[-1]
    scores = q @ k.transpose(-2, -1) / math.sqrt(d)
    return torch.softmax(scores, dim=-1) @ v


def _sdpa(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    # single-head fused path; unsqueeze a head axis
    out = F.scaled_dot_product_attention(q.unsqueeze(1), k.unsqueeze(1), v.unsqueeze(1))
    return out.squeeze(1)


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / (half - 1)
        )
        args = t[:, None] * freqs[None, :]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class TimeMLP(nn.Module):
    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.embed = SinusoidalTimeEmbedding(in_dim)
        self.net = nn.Sequential(nn.Linear(in_dim, out_dim), nn.SiLU(), nn.Linear(out_dim, out_dim))

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.net(self.embed(t))


class ResBlock(nn.Module):
    """GN -> SiLU -> conv, time-embedding shift, GN -> SiLU -> conv, skip."""

    def __init__(self, in_ch: int, out_ch: int, time_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = nn.GroupNorm(groups, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class TokenAttention(nn.Module):
    """Single-head attention over token sequences; query and context may differ."""

    def __init__(self, q_dim: int, kv_dim: int, head_dim: int):
        super().__init__()
        self.to_q = nn.Linear(q_dim, head_dim, bias=False)
        self.to_k = nn.Linear(kv_dim, head_dim, bias=False)
        self.to_v = nn.Linear(kv_dim, head_dim, bias=False)
        self.to_out = nn.Linear(head_dim, q_dim, bias=False)

    def forward(self, tokens: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        out = _sdpa(self.to_q(tokens), self.to_k(context), self.to_v(context))
        return self.to_out(out)


class ReferenceAttention(nn.Module):
    """Residual cross-attention from video tokens to subject tokens, gated
    entrywise by a blended mask. The output projection starts at zero so a
    fresh module is exactly the identity on its input; `gain` is a fixed
    scalar on the zero-started projection (a reparameterization, neutral at
    init)."""

    def __init__(self, width: int, head_dim: int, gain: float = 1.0):
        super().__init__()
        self.gain = gain
        self.to_q = nn.Linear(width, head_dim, bias=False)
        self.to_k = nn.Linear(width, head_dim, bias=False)
        self.to_v = nn.Linear(width, head_dim, bias=False)
        self.to_out = nn.Linear(head_dim, width, bias=False)
        nn.init.zeros_(self.to_out.weight)

    def forward(self, tokens: torch.Tensor, subject_tokens: torch.Tensor,
                mask_tokens: torch.Tensor) -> torch.Tensor:
        """tokens (N_b, n, C), subject (N_b, m, C), mask (N_b, n, 1) -> (N_b, n, C)."""
        if mask_tokens.shape[:2] != tokens.shape[:2]:
            raise ValueError(
                f"invalid-mask: mask tokens {tuple(mask_tokens.shape)} do not align "
                f"with features {tuple(tokens.shape)}"
            )
        attn = _sdpa(self.to_q(tokens), self.to_k(subject_tokens), self.to_v(subject_tokens))
        return tokens + mask_tokens * (self.gain * self.to_out(attn))


class FeedForward(nn.Module):
    def __init__(self, dim: int, mult: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(dim, dim * mult), nn.GELU(), nn.Linear(dim * mult, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class SpatialTransformer(nn.Module):
    """Per-frame token block: self-attn, masked reference attention, text
    cross-attn, second masked reference attention, feed-forward.

    The two reference sites have separate parameters. `capture`, when given,
    receives the post-self and post-cross hidden states (the features the
    subject pathway exports). With `subject=None` the reference sites are
    skipped entirely, which is the plain base pathway.
    """

    def __init__(self, channels: int, text_dim: int, head_dim: int, ff_mult: int,
                 groups: int, with_reference: bool = True, reference_gain: float = 1.0):
        super().__init__()
        self.norm = nn.GroupNorm(groups, channels)
        self.proj_in = nn.Conv2d(channels, channels, 1)
        self.ln1 = nn.LayerNorm(channels)
        self.self_attn = TokenAttention(channels, channels, head_dim)
        self.ln2 = nn.LayerNorm(channels)
        self.cross_attn = TokenAttention(channels, text_dim, head_dim)
        self.ln3 = nn.LayerNorm(channels)
        self.ff = FeedForward(channels, ff_mult)
        self.proj_out = nn.Conv2d(channels, channels, 1)
        if with_reference:
            self.ref_self = ReferenceAttention(channels, head_dim, reference_gain)
            self.ref_cross = ReferenceAttention(channels, head_dim, reference_gain)
        else:
            self.ref_self = None
            self.ref_cross = None

    def forward(self, x: torch.Tensor, text: torch.Tensor, frames: int,
                subject: Optional[dict] = None,
                mask_tokens: Optional[torch.Tensor] = None,
                capture: Optional[dict] = None) -> torch.Tensor:
        bf, c, hh, ww = x.shape
        b = bf // frames
        residual = x
        h = self.proj_in(self.norm(x))
        tokens = h.flatten(2).transpose(1, 2)  # (BF, N, C)

        tokens = tokens + self.self_attn(self.ln1(tokens), self.ln1(tokens))
        if capture is not None:
            capture["self"] = tokens
        if subject is not None:
            tokens = self.ref_self(tokens, _expand_frames(subject["self"], frames), mask_tokens)

        text_bf = text.repeat_interleave(frames, dim=0)
        tokens = tokens + self.cross_attn(self.ln2(tokens), text_bf)
        if capture is not None:
            capture["cross"] = tokens
        if subject is not None:
            tokens = self.ref_cross(tokens, _expand_frames(subject["cross"], frames), mask_tokens)

        tokens = tokens + self.ff(self.ln3(tokens))
        h = tokens.transpose(1, 2).reshape(bf, c, hh, ww)
        return residual + self.proj_out(h)


def _expand_frames(subject_tokens: torch.Tensor, frames: int) -> torch.Tensor:
    """(B, m, C) subject tokens repeated per frame -> (B*F, m, C)."""
    b, m, c = subject_tokens.shape
    return subject_tokens.unsqueeze(1).expand(b, frames, m, c).reshape(b * frames, m, c)


def mask_to_tokens(mask: torch.Tensor) -> torch.Tensor:
    """(B, F, H, W) blended mask -> (B*F, H*W, 1) token gate."""
    b, f, h, w = mask.shape
    return mask.reshape(b * f, h * w, 1)


class TemporalAttention(nn.Module):
    """Single-head self-attention over the frame axis at every spatial site,
    with a learned frame-position embedding."""

    def __init__(self, channels: int, max_frames: int):
        super().__init__()
        self.pos = nn.Parameter(torch.randn(max_frames, channels) * 0.02)
        self.ln = nn.LayerNorm(channels)
        self.attn = TokenAttention(channels, channels, channels)

    def forward(self, x: torch.Tensor, frames: int) -> torch.Tensor:
        bf, c, hh, ww = x.shape
        b = bf // frames
        tokens = x.reshape(b, frames, c, hh * ww).permute(0, 3, 1, 2)  # (B, N, F, C)
        tokens = tokens.reshape(b * hh * ww, frames, c)
        pos = self.pos[:frames].to(tokens.dtype)
        h = self.ln(tokens + pos)
        tokens = tokens + self.attn(h, h)
        tokens = tokens.reshape(b, hh * ww, frames, c).permute(0, 2, 3, 1)
        return tokens.reshape(bf, c, hh, ww)


class Downsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(F.interpolate(x, scale_factor=2.0, mode="nearest"))


class ZeroConv(nn.Module):
    """1x1 convolution initialized to zero; the control-branch output gate."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 1)
        nn.init.zeros_(self.conv.weight)
        nn.init.zeros_(self.conv.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)

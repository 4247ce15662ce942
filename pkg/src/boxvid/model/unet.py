"""The frozen base video UNet with optional reference-attention sites.

Layout per level: resblock -> spatial transformer -> temporal attention in
the encoder, then a mid resblock, then a convolutional decoder with skip
concatenation. Control residuals are added to each decoder block's input
tensor (the input of its first convolution). Reference attention lives inside
the encoder transformers; everything else belongs to the frozen base.
"""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .layers import (
    Downsample,
    ResBlock,
    SpatialTransformer,
    TemporalAttention,
    TimeMLP,
    Upsample,
    mask_to_tokens,
)

REFERENCE_MARKERS = ("ref_self", "ref_cross")


class BaseUNet(nn.Module):
    def __init__(self, cfg: ModelConfig, with_reference: bool = True):
        super().__init__()
        self.cfg = cfg
        ch = cfg.channel_widths
        self.text_embedding = nn.Embedding(cfg.vocab_size, cfg.text_embed_dim)
        self.time_mlp = TimeMLP(cfg.base_channels, cfg.time_embed_dim)
        self.conv_in = nn.Conv2d(cfg.latent_channels, ch[0], 3, padding=1)

        self.enc_res = nn.ModuleList()
        self.enc_tf = nn.ModuleList()
        self.enc_temp = nn.ModuleList()
        self.downs = nn.ModuleList()
        for i, width in enumerate(ch):
            self.enc_res.append(ResBlock(width, width, cfg.time_embed_dim, cfg.norm_groups))
            self.enc_tf.append(
                SpatialTransformer(width, cfg.text_embed_dim, cfg.attention_head_dim,
                                   cfg.ff_mult, cfg.norm_groups, with_reference,
                                   reference_gain=cfg.injection_gain)
            )
            self.enc_temp.append(TemporalAttention(width, cfg.frames))
            if i < len(ch) - 1:
                self.downs.append(Downsample(width, ch[i + 1]))

        self.mid = ResBlock(ch[-1], ch[-1], cfg.time_embed_dim, cfg.norm_groups)

        self.dec_res = nn.ModuleList()
        self.ups = nn.ModuleList()
        for i, width in enumerate(ch):
            self.dec_res.append(ResBlock(2 * width, width, cfg.time_embed_dim, cfg.norm_groups))
            if i > 0:
                self.ups.append(Upsample(width, ch[i - 1]))

        self.out_norm = nn.GroupNorm(cfg.norm_groups, ch[0])
        self.conv_out = nn.Conv2d(ch[0], cfg.latent_channels, 3, padding=1)
        if cfg.identity_init:
            self._identity_leaning_init()

    def _identity_leaning_init(self) -> None:
        """Frozen-base init that embeds the latent in the leading channels,
        carries it through the norm-free resblock skip paths and the level-0
        skip connection, and reads it back out, so the untrained base predicts
        roughly the noisy latent itself. Residual branches are scaled down so
        the copy dominates at init."""
        cfg = self.cfg
        s = cfg.branch_scale
        with torch.no_grad():
            w = torch.zeros_like(self.conv_in.weight)
            k = self.conv_in.kernel_size[0] // 2
            for j in range(cfg.latent_channels):
                w[j, j, k, k] = 1.0
            w[cfg.latent_channels:] = self.conv_in.weight[cfg.latent_channels:] * s
            self.conv_in.weight.copy_(w)
            self.conv_in.bias.zero_()

            for block in [*self.enc_res, self.mid, *self.dec_res]:
                block.conv2.weight.mul_(s)
                block.conv2.bias.mul_(s)
            for tf in self.enc_tf:
                tf.proj_out.weight.mul_(s)
                tf.proj_out.bias.mul_(s)
            for temp in self.enc_temp:
                temp.attn.to_out.weight.mul_(s)

            # level-0 decoder skip conv selects the encoder skip half of the
            # concatenated input, where the embedded latent lives
            dec0 = self.dec_res[0]
            w = torch.zeros_like(dec0.skip.weight)
            out_ch = w.shape[0]
            for j in range(out_ch):
                w[j, out_ch + j, 0, 0] = 1.0
            dec0.skip.weight.copy_(w)
            dec0.skip.bias.zero_()

            w = torch.zeros_like(self.conv_out.weight)
            k = self.conv_out.kernel_size[0] // 2
            for j in range(cfg.latent_channels):
                w[j, j, k, k] = 1.0
            self.conv_out.weight.copy_(w)
            self.conv_out.bias.zero_()

    def decoder_input_shapes(self) -> list[tuple[int, int]]:
        """(channels, side) of each decoder block input, in application order
        (deepest level first); control residuals must match these."""
        ch = self.cfg.channel_widths
        sizes = self.cfg.level_sizes
        return [(2 * ch[i], sizes[i]) for i in reversed(range(len(ch)))]

    def embed_text(self, token_ids: torch.Tensor) -> torch.Tensor:
        return self.text_embedding(token_ids)

    def time_embedding(self, t: torch.Tensor) -> torch.Tensor:
        return self.time_mlp(t)

    def forward(
        self,
        z: torch.Tensor,
        temb: torch.Tensor,
        text: torch.Tensor,
        subject_sites: Optional[list] = None,
        masks: Optional[dict] = None,
        motion_residuals: Optional[list] = None,
        capture: Optional[list] = None,
    ) -> torch.Tensor:
        """z is (B, F, h, w, C) channels-last; returns the same shape.

        subject_sites: per-transformer dicts of subject tokens. masks: blended
        masks keyed by (h, w). motion_residuals: tensors matching
        decoder_input_shapes(). capture: list to fill with per-transformer
        hidden states (the subject pathway export).
        """
        b, frames, hh, ww, c = z.shape
        x = z.permute(0, 1, 4, 2, 3).reshape(b * frames, c, hh, ww)
        temb_bf = temb.repeat_interleave(frames, dim=0)

        h = self.conv_in(x)
        skips = []
        for i in range(len(self.enc_res)):
            h = self.enc_res[i](h, temb_bf)
            site_cap = None
            if capture is not None:
                site_cap = {}
                capture.append(site_cap)
            subject = subject_sites[i] if subject_sites is not None else None
            mask_tok = None
            if subject is not None:
                res = self.cfg.site_resolutions[i]
                mask = masks[res]
                if mask.shape[2:] != res:
                    raise ValueError(
                        f"invalid-mask: blended mask {tuple(mask.shape[2:])} does not "
                        f"match site resolution {res}"
                    )
                mask_tok = mask_to_tokens(mask.to(h.dtype))
            h = self.enc_tf[i](h, text, frames, subject, mask_tok, site_cap)
            h = self.enc_temp[i](h, frames)
            skips.append(h)
            if i < len(self.downs):
                h = self.downs[i](h)

        h = self.mid(h, temb_bf)

        k = 0
        for i in reversed(range(len(self.dec_res))):
            x_in = torch.cat([h, skips[i]], dim=1)
            if motion_residuals is not None:
                x_in = x_in + motion_residuals[k]
                k += 1
            h = self.dec_res[i](x_in, temb_bf)
            if i > 0:
                h = self.ups[i - 1](h)

        out = self.conv_out(self.out_norm(h))
        return out.reshape(b, frames, c, hh, ww).permute(0, 1, 3, 4, 2)


def is_reference_param(name: str) -> bool:
    return any(marker in name.split(".") for marker in REFERENCE_MARKERS)

"""The full customized denoiser: frozen base UNet, trainable reference
attention at every transformer site, and the trainable motion module.

The subject pathway runs the plain base pathway (reference sites skipped) on
the clean subject latent at a fixed reference timestep, so subject features
are independent of the denoising step and may be cached during sampling.
"""

from __future__ import annotations

import hashlib
from typing import Optional

import torch
import torch.nn as nn

from ..diffusion import NoiseSchedule, ScheduleConfig, schedule_from_config
from .conditioning import ConditioningBundle, build_null_conditioning
from .config import ModelConfig
from .motion import MotionModule
from .unet import BaseUNet, is_reference_param

SUBJECT_REFERENCE_STEP = 1


class VideoCustomizer(nn.Module):
    def __init__(self, cfg: ModelConfig, schedule: NoiseSchedule,
                 lambda_m: float = 0.75, use_motion: bool = True,
                 blank_value: int = 128):
        super().__init__()
        self.config = cfg
        self.schedule = schedule
        self.lambda_m = lambda_m
        self.blank_value = blank_value
        self.unet = BaseUNet(cfg, with_reference=True)
        self.motion = MotionModule(cfg) if use_motion else None
        for name, p in self.unet.named_parameters():
            p.requires_grad_(is_reference_param(name))

    @property
    def use_motion(self) -> bool:
        return self.motion is not None

    @property
    def device(self) -> torch.device:
        return next(self.parameters()).device

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def latent_shape(self, batch: int) -> tuple[int, ...]:
        c = self.config
        return (batch, c.frames, c.latent_size, c.latent_size, c.latent_channels)

    def embed_caption(self, token_ids: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self.unet.embed_text(token_ids.to(self.device)).to(self.dtype)

    def null_conditioning(self, batch: int = 1) -> ConditioningBundle:
        bundle = build_null_conditioning(self, self.blank_value)
        if batch == 1:
            return bundle
        from .conditioning import collate_conditioning

        return collate_conditioning([bundle] * batch)

    def _temb(self, t, batch: int) -> torch.Tensor:
        T = self.schedule.num_steps
        if isinstance(t, int):
            if not (1 <= t <= T):
                raise ValueError(f"invalid-input: t={t} outside [1, {T}]")
            ts = torch.full((batch,), float(t), dtype=self.dtype, device=self.device)
        else:
            ts = torch.as_tensor(t, device=self.device)
            if ts.min() < 1 or ts.max() > T:
                raise ValueError(f"invalid-input: timestep outside [1, {T}]")
            ts = ts.to(self.dtype)
        return self.unet.time_embedding(ts)

    def encode_subject(self, subject_latent: torch.Tensor,
                       text_embedding: torch.Tensor) -> list[dict]:
        """Per-site subject tokens from the base pathway at the fixed
        reference step; one {"self": ..., "cross": ...} dict per transformer."""
        if subject_latent.ndim != 5 or subject_latent.shape[1] != 1:
            raise ValueError(
                f"invalid-input: expected (B, 1, h, w, C) subject latent, got "
                f"{tuple(subject_latent.shape)}"
            )
        batch = subject_latent.shape[0]
        temb = self._temb(SUBJECT_REFERENCE_STEP, batch)
        capture: list[dict] = []
        self.unet(subject_latent, temb, text_embedding, capture=capture)
        return capture

    def denoise(self, z_t: torch.Tensor, t, cond: ConditioningBundle) -> torch.Tensor:
        """Predict the noise in z_t under full conditioning."""
        if tuple(z_t.shape) != self.latent_shape(z_t.shape[0]):
            raise ValueError(
                f"invalid-input: latent shape {tuple(z_t.shape)}, expected "
                f"{self.latent_shape(z_t.shape[0])}"
            )
        if cond.batch_size != z_t.shape[0]:
            raise ValueError(
                f"invalid-conditioning: batch {cond.batch_size} != latent batch "
                f"{z_t.shape[0]}"
            )
        for res in self.config.site_resolutions:
            if res not in cond.blended_masks:
                raise ValueError(f"invalid-conditioning: missing blended mask for {res}")
        temb = self._temb(t, z_t.shape[0])
        sites = cond.subject_sites
        if sites is None:
            sites = self.encode_subject(cond.subject_latent, cond.text_embedding)
        residuals = None
        if self.motion is not None:
            if cond.motion_signal is None:
                raise ValueError("invalid-conditioning: missing motion signal")
            encoded = self.motion.spatiotemporal_encode(cond.motion_signal)
            residuals = self.motion.control_residuals(encoded, z_t, temb, cond.text_embedding)
        return self.unet(z_t, temb, cond.text_embedding, subject_sites=sites,
                         masks=cond.blended_masks, motion_residuals=residuals)

    def cache_subject_features(self, cond: ConditioningBundle) -> None:
        """Precompute subject features for repeated sampling steps; output is
        equivalent because the subject pathway ignores the denoising step."""
        with torch.no_grad():
            cond.subject_sites = self.encode_subject(cond.subject_latent, cond.text_embedding)

    def base_output(self, z_t: torch.Tensor, t, text_embedding: torch.Tensor) -> torch.Tensor:
        """The frozen base UNet alone: no reference attention, no residuals."""
        temb = self._temb(t, z_t.shape[0])
        return self.unet(z_t, temb, text_embedding)

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def parameter_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        groups: dict[str, list[tuple[str, nn.Parameter]]] = {
            "reference_attention": [],
            "motion_encoder": [],
            "control_branch": [],
        }
        for name, p in self.named_parameters():
            if not p.requires_grad:
                continue
            if name.startswith("motion.encoder"):
                groups["motion_encoder"].append((name, p))
            elif name.startswith("motion.control"):
                groups["control_branch"].append((name, p))
            else:
                groups["reference_attention"].append((name, p))
        return groups

    def base_named_parameters(self):
        for name, p in self.unet.named_parameters():
            if not is_reference_param(name):
                yield f"unet.{name}", p

    def base_state_digest(self) -> str:
        digest = hashlib.sha256()
        for name, p in sorted(self.base_named_parameters()):
            digest.update(name.encode())
            digest.update(p.detach().cpu().numpy().tobytes())
        return digest.hexdigest()


def build_model(cfg: ModelConfig, schedule_cfg: Optional[ScheduleConfig] = None,
                lambda_m: float = 0.75, use_motion: bool = True, seed: int = 0,
                blank_value: int = 128) -> VideoCustomizer:
    """Deterministic construction: the base init depends only on the seed."""
    schedule_cfg = schedule_cfg or ScheduleConfig()
    torch.manual_seed(seed)
    return VideoCustomizer(cfg, schedule_from_config(schedule_cfg),
                           lambda_m=lambda_m, use_motion=use_motion,
                           blank_value=blank_value)

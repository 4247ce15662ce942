"""Noise schedules, the forward process, the reweighted training loss, and
deterministic DDIM sampling with classifier-free guidance.

Latent videos are torch tensors laid out channels-last, (F, h, w, C) or
batched (B, F, h, w, C). Timesteps are 1-indexed: t in [1, T], with
alpha_bar[t-1] the cumulative product through step t. All ops preserve the
input dtype, so identity checks can run in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch


@dataclass(frozen=True)
class ScheduleConfig:
    """Run-config keys owned by the diffusion process."""

    steps_total: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    ddim_steps: int = 50
    guidance_scale: float = 9.0


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def num_steps(self) -> int:
        return len(self.beta)


def make_schedule(num_steps: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    """Linear beta ramp with running-product alpha_bar."""
    if num_steps < 1:
        raise ValueError(f"invalid-schedule: need T >= 1, got {num_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"invalid-schedule: need 0 < beta_start <= beta_end < 1, got "
            f"({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, num_steps, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def schedule_from_config(cfg: ScheduleConfig) -> NoiseSchedule:
    return make_schedule(cfg.steps_total, cfg.beta_start, cfg.beta_end)


def _alpha_bar_coeffs(t, schedule: NoiseSchedule, like: torch.Tensor):
    """sqrt(alpha_bar_t), sqrt(1-alpha_bar_t) broadcastable against `like`.

    `t` may be a python int or a 1-D sequence/tensor aligned with the leading
    batch dimension of `like`.
    """
    T = schedule.num_steps
    if isinstance(t, (int, np.integer)):
        if not (1 <= t <= T):
            raise ValueError(f"invalid-input: t={t} outside [1, {T}]")
        ab = float(schedule.alpha_bar[t - 1])
        return np.sqrt(ab), np.sqrt(1.0 - ab)
    ts = torch.as_tensor(t, dtype=torch.long)
    if ts.min() < 1 or ts.max() > T:
        raise ValueError(f"invalid-input: timestep outside [1, {T}]")
    ab = torch.as_tensor(schedule.alpha_bar, dtype=like.dtype, device=like.device)[ts - 1]
    shape = (len(ts),) + (1,) * (like.ndim - 1)
    ab = ab.view(shape)
    return torch.sqrt(ab), torch.sqrt(1.0 - ab)


def add_noise(z0: torch.Tensor, t, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Forward process: sqrt(ab_t) * z0 + sqrt(1 - ab_t) * eps."""
    if z0.shape != eps.shape:
        raise ValueError(f"invalid-input: shape mismatch {tuple(z0.shape)} vs {tuple(eps.shape)}")
    ca, cb = _alpha_bar_coeffs(t, schedule, z0)
    return ca * z0 + cb * eps


def reweighted_loss(
    eps_pred: torch.Tensor,
    eps: torch.Tensor,
    mask: torch.Tensor,
    inside_weight: float,
) -> torch.Tensor:
    """Mean of (w*M + (1-M)) * (eps_pred - eps)^2 with the mask broadcast over channels.

    `mask` matches the tensors minus the trailing channel axis. inside_weight
    is the in-box amplification; 1 recovers plain MSE exactly.
    """
    if eps_pred.shape != eps.shape:
        raise ValueError(
            f"invalid-input: shape mismatch {tuple(eps_pred.shape)} vs {tuple(eps.shape)}"
        )
    if tuple(mask.shape) != tuple(eps.shape[:-1]):
        raise ValueError(
            f"invalid-input: mask shape {tuple(mask.shape)} does not match "
            f"tensor shape {tuple(eps.shape[:-1])} (channels excluded)"
        )
    if inside_weight < 1.0:
        raise ValueError(f"invalid-weight: inside weight {inside_weight} < 1")
    m = mask.to(eps.dtype).unsqueeze(-1)
    weight = inside_weight * m + (1.0 - m)
    return (weight * (eps_pred - eps) ** 2).mean()


def cfg_combine(eps_cond: torch.Tensor, eps_uncond: torch.Tensor, scale: float) -> torch.Tensor:
    """Classifier-free guidance: uncond + scale * (cond - uncond)."""
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError(
            f"invalid-input: shape mismatch {tuple(eps_cond.shape)} vs {tuple(eps_uncond.shape)}"
        )
    return eps_uncond + scale * (eps_cond - eps_uncond)


def ddim_timesteps(num_steps_total: int, num_steps: int) -> list[int]:
    """Uniform-stride descending subsequence of [1, T] ending at t=1."""
    if num_steps > num_steps_total:
        raise ValueError(f"invalid-steps: {num_steps} > schedule length {num_steps_total}")
    if num_steps < 1 or num_steps_total % num_steps != 0:
        raise ValueError(
            f"invalid-steps: {num_steps} does not divide schedule length {num_steps_total}"
        )
    stride = num_steps_total // num_steps
    return [1 + k * stride for k in reversed(range(num_steps))]


def ddim_step(z_t: torch.Tensor, eps_pred: torch.Tensor, t: int, t_prev: int,
              schedule: NoiseSchedule, clip_range: Optional[float] = None) -> torch.Tensor:
    """Deterministic (eta=0) DDIM update from t to t_prev; t_prev=0 returns the
    predicted clean latent (alpha_bar_0 := 1).

    `clip_range` clamps the clean-latent estimate to [-r, r] (static
    thresholding); the sampler uses the codec's valid range, the bare update
    leaves it off.
    """
    ca, cb = _alpha_bar_coeffs(t, schedule, z_t)
    z0_pred = (z_t - cb * eps_pred) / ca
    if clip_range is not None:
        z0_pred = z0_pred.clamp(-clip_range, clip_range)
    if t_prev == 0:
        return z0_pred
    pa, pb = _alpha_bar_coeffs(t_prev, schedule, z_t)
    return pa * z0_pred + pb * eps_pred


def ddim_sample(model, cond, num_steps: int, guidance_scale: float, seed: int,
                null_cond=None, clip_range: Optional[float] = 1.0) -> torch.Tensor:
    """Sample a latent video from pure noise with eta=0 DDIM and CFG.

    Deterministic in (seed, cond, num_steps, guidance_scale). `model` supplies
    `.denoise(z, t, cond)`, `.schedule`, `.null_conditioning(batch)` and
    `.latent_shape(batch)`. Reads model parameters only. The default
    clip_range matches the codec's [-1, 1] latent range.
    """
    schedule = model.schedule
    steps = ddim_timesteps(schedule.num_steps, num_steps)
    batch = cond.batch_size
    if null_cond is None and guidance_scale != 1.0:
        null_cond = model.null_conditioning(batch)
    gen = torch.Generator(device="cpu").manual_seed(seed)
    shape = model.latent_shape(batch)
    z = torch.randn(shape, generator=gen, dtype=model.dtype).to(model.device)
    with torch.no_grad():
        for i, t in enumerate(steps):
            t_prev = steps[i + 1] if i + 1 < len(steps) else 0
            eps = model.denoise(z, t, cond)
            if guidance_scale != 1.0:
                eps_u = model.denoise(z, t, null_cond)
                eps = cfg_combine(eps, eps_u, guidance_scale)
            z = ddim_step(z, eps, t, t_prev, schedule, clip_range=clip_range)
    return z

"""Single-file checkpoint container.

Layout (torch.save dict, format_version 1):
  format_version   int
  model_config     ModelConfig fields
  schedule_config  ScheduleConfig fields
  train_config     TrainConfig fields
  use_motion       bool
  iteration        completed training iterations
  model_state      full state dict; frozen base under "unet.*" (reference
                   attention distinguishable by "ref_self"/"ref_cross" in the
                   key), motion module under "motion.*"
  optimizer_state  AdamW state or None
  numpy_rng_state / torch_rng_state   resume determinism
  extra            free-form (final_loss, wall time, ...)
"""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
from typing import Optional

import torch

from .diffusion import ScheduleConfig
from .model.config import ModelConfig
from .model.denoiser import VideoCustomizer, build_model

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, model: VideoCustomizer, train_cfg,
                    schedule_cfg: ScheduleConfig, iteration: int,
                    optimizer: Optional[torch.optim.Optimizer] = None,
                    numpy_rng_state=None, torch_rng_state=None,
                    extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "model_config": asdict(model.config),
        "schedule_config": asdict(schedule_cfg),
        "train_config": asdict(train_cfg),
        "use_motion": model.use_motion,
        "iteration": iteration,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "numpy_rng_state": numpy_rng_state,
        "torch_rng_state": torch_rng_state,
        "extra": extra or {},
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"io-error: no checkpoint at {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"invalid-checkpoint: format version {version}")
    return payload


def model_from_checkpoint(payload: dict, device: str = "cpu") -> VideoCustomizer:
    cfg = ModelConfig(**{**payload["model_config"],
                         "level_multipliers": tuple(payload["model_config"]["level_multipliers"])})
    schedule_cfg = ScheduleConfig(**payload["schedule_config"])
    model = build_model(cfg, schedule_cfg,
                        lambda_m=payload["train_config"]["lambda_m"],
                        use_motion=payload["use_motion"],
                        seed=payload["train_config"]["seed"])
    model.load_state_dict(payload["model_state"])
    return model.to(device)

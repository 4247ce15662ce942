"""Flat run configuration: one JSON file covering training, schedule, corpus,
and evaluation keys. Unknown keys are rejected; command-line flags override
file values."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .diffusion import ScheduleConfig
from .model.config import ModelConfig
from .training import TrainConfig


@dataclass
class RunConfig:
    # schedule
    steps_total: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    ddim_steps: int = 50
    guidance_scale: float = 9.0
    # training
    cond_drop_prob: float = 0.1
    lambda_m: float = 0.75
    lambda_l: float = 2.0
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    iterations: int = 3000
    batch_size: int = 16
    seed: int = 0
    # corpus / evaluation
    clips: int = 2000
    frames: int = 8
    pixel_size: int = 64
    eval_cases: int = 20
    device: str = "cpu"

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lambda_m=self.lambda_m, lambda_l=self.lambda_l,
            learning_rate=self.learning_rate, weight_decay=self.weight_decay,
            iterations=self.iterations, batch_size=self.batch_size,
            cond_drop_prob=self.cond_drop_prob, seed=self.seed,
        )

    def schedule_config(self) -> ScheduleConfig:
        return ScheduleConfig(
            steps_total=self.steps_total, beta_start=self.beta_start,
            beta_end=self.beta_end, ddim_steps=self.ddim_steps,
            guidance_scale=self.guidance_scale,
        )

    def model_config(self) -> ModelConfig:
        if self.pixel_size % 4 != 0:
            raise ValueError(f"invalid-config: pixel_size {self.pixel_size} not divisible by 4")
        return ModelConfig(frames=self.frames, latent_size=self.pixel_size // 4)


RUN_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def load_run_config(path: str | Path) -> RunConfig:
    data = json.loads(Path(path).read_text())
    unknown = set(data) - RUN_CONFIG_KEYS
    if unknown:
        raise ValueError(f"invalid-config: unknown keys {sorted(unknown)}")
    return RunConfig(**data)


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(asdict(cfg), indent=1, sort_keys=True))

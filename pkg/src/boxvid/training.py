"""Joint training of reference attention and the motion module over the
frozen base, with the box-reweighted noise-prediction objective."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import extract_subject, iter_corpus
from .diffusion import ScheduleConfig, add_noise, reweighted_loss
from .geometry import BoxSequence, rasterize_boxes
from .model.conditioning import build_conditioning, collate_conditioning
from .model.config import ModelConfig
from .model.denoiser import VideoCustomizer, build_model


@dataclass(frozen=True)
class TrainConfig:
    lambda_m: float = 0.75
    lambda_l: float = 2.0
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    iterations: int = 3000
    batch_size: int = 16
    cond_drop_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lambda_m <= 1.0):
            raise ValueError(f"invalid-config: lambda_m {self.lambda_m} not in [0,1]")
        if self.lambda_l < 1.0:
            raise ValueError(f"invalid-config: lambda_l {self.lambda_l} < 1")
        # iterations == 0 is allowed: a zero-iteration run checkpoints the
        # initialization untouched
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("invalid-config: bad iterations or batch size")
        if not (0.0 <= self.cond_drop_prob <= 1.0):
            raise ValueError("invalid-config: cond_drop_prob not in [0,1]")


@dataclass
class TrainClip:
    """Lean per-clip view kept in memory during training."""

    video: np.ndarray          # (F, H, W, 3) uint8
    boxes: BoxSequence
    caption: tuple[str, ...]
    mask: np.ndarray           # (F, H, W) bool silhouette


def train_clip_from_record(record) -> TrainClip:
    return TrainClip(
        video=record.video,
        boxes=record.boxes,
        caption=record.caption,
        mask=record.masks.values > 0.5,
    )


def load_train_clips(corpus_dir: str | Path) -> list[TrainClip]:
    return [train_clip_from_record(rec) for _, rec in iter_corpus(corpus_dir)]


@dataclass
class Batch:
    z0: torch.Tensor           # (B, F, h, w, C)
    cond: "object"             # collated ConditioningBundle
    loss_mask: torch.Tensor    # (B, F, h, w) binary, latent resolution


def prepare_batch(clips: list[TrainClip], cfg: TrainConfig,
                  rng: np.random.Generator, model: VideoCustomizer) -> Batch:
    """Encode videos, draw a random subject frame per clip, build the
    conditioning bundle from each clip's boxes, and drop conditioning with
    probability cond_drop_prob."""
    if len(clips) == 0:
        raise ValueError("invalid-batch: empty")
    from .model.codec import encode_video

    mcfg = model.config
    lat = mcfg.latent_size
    z0s, bundles, loss_masks = [], [], []
    for clip in clips:
        frames = clip.video.shape[0]
        z0s.append(encode_video(clip.video, mcfg.codec_block).to(model.dtype))
        frame_index = int(rng.integers(1, frames + 1))
        subject = extract_subject(clip.video[frame_index - 1],
                                  clip.mask[frame_index - 1], model.blank_value)
        if rng.random() < cfg.cond_drop_prob:
            bundles.append(model.null_conditioning())
        else:
            bundles.append(build_conditioning(model, clip.boxes, subject,
                                              clip.caption, cfg.lambda_m))
        loss_masks.append(
            torch.from_numpy(rasterize_boxes(clip.boxes, lat, lat).values).to(model.dtype)
        )
    return Batch(
        z0=torch.stack(z0s),
        cond=collate_conditioning(bundles),
        loss_mask=torch.stack(loss_masks),
    )


def train_step(batch: Batch, model: VideoCustomizer,
               optimizer: torch.optim.Optimizer, cfg: TrainConfig,
               generator: torch.Generator) -> float:
    """One optimization step on the trainable set; the base stays frozen."""
    T = model.schedule.num_steps
    b = batch.z0.shape[0]
    t = torch.randint(1, T + 1, (b,), generator=generator)
    eps = torch.randn(batch.z0.shape, generator=generator, dtype=batch.z0.dtype)
    z_t = add_noise(batch.z0, t, eps, model.schedule)
    eps_pred = model.denoise(z_t, t, batch.cond)
    loss = reweighted_loss(eps_pred, eps, batch.loss_mask, cfg.lambda_l)
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    value = float(loss.detach())
    if not np.isfinite(value):
        raise RuntimeError(f"training-diverged: non-finite loss {value}")
    return value


def build_optimizer(model: VideoCustomizer, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(model.trainable_parameters(), lr=cfg.learning_rate,
                             weight_decay=cfg.weight_decay, betas=(0.9, 0.999),
                             eps=1e-8)


def train(corpus_dir: str | Path, cfg: TrainConfig, out_dir: str | Path,
          model_cfg: Optional[ModelConfig] = None,
          schedule_cfg: Optional[ScheduleConfig] = None,
          use_motion: bool = True, resume: Optional[str | Path] = None,
          device: str = "cpu", log_stream=None) -> Path:
    """Full training run; writes checkpoint.pt and train_log.jsonl under
    out_dir and returns the checkpoint path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_cfg = model_cfg or ModelConfig()
    schedule_cfg = schedule_cfg or ScheduleConfig()

    clips = load_train_clips(corpus_dir)
    if not clips:
        raise FileNotFoundError(f"io-error: empty corpus at {corpus_dir}")

    start_iteration = 0
    if resume is not None:
        payload = load_checkpoint(resume)
        model_cfg = ModelConfig(**{**payload["model_config"],
                                   "level_multipliers": tuple(payload["model_config"]["level_multipliers"])})
        schedule_cfg = ScheduleConfig(**payload["schedule_config"])
        use_motion = payload["use_motion"]
        cfg = TrainConfig(**payload["train_config"])
        model = build_model(model_cfg, schedule_cfg, lambda_m=cfg.lambda_m,
                            use_motion=use_motion, seed=cfg.seed).to(device)
        model.load_state_dict(payload["model_state"])
        optimizer = build_optimizer(model, cfg)
        if payload["optimizer_state"] is not None:
            optimizer.load_state_dict(payload["optimizer_state"])
        np_rng = np.random.default_rng()
        np_rng.bit_generator.state = payload["numpy_rng_state"]
        generator = torch.Generator()
        generator.set_state(payload["torch_rng_state"])
        start_iteration = payload["iteration"]
    else:
        model = build_model(model_cfg, schedule_cfg, lambda_m=cfg.lambda_m,
                            use_motion=use_motion, seed=cfg.seed).to(device)
        optimizer = build_optimizer(model, cfg)
        np_rng = np.random.default_rng(cfg.seed)
        generator = torch.Generator().manual_seed(cfg.seed)

    log_path = out / "train_log.jsonl"
    mode = "a" if (resume is not None and log_path.exists()) else "w"
    log_file = open(log_path, mode)

    def log(record: dict):
        line = json.dumps(record, sort_keys=True)
        log_file.write(line + "\n")
        log_file.flush()
        if log_stream is not None:
            print(line, file=log_stream, flush=True)

    log({"event": "start", "iteration": start_iteration,
         "lambda_m": cfg.lambda_m, "lambda_l": cfg.lambda_l,
         "config": asdict(cfg), "schedule": asdict(schedule_cfg),
         "use_motion": use_motion, "num_clips": len(clips)})

    model.train()
    t0 = time.time()
    final_loss = None
    for it in range(start_iteration, start_iteration + cfg.iterations):
        idx = np_rng.integers(0, len(clips), size=cfg.batch_size)
        batch = prepare_batch([clips[i] for i in idx], cfg, np_rng, model)
        loss = train_step(batch, model, optimizer, cfg, generator)
        final_loss = loss
        log({"iteration": it + 1, "loss": loss, "wall_time": time.time() - t0})
    log_file.close()

    ckpt = save_checkpoint(
        out / "checkpoint.pt", model, cfg, schedule_cfg,
        iteration=start_iteration + cfg.iterations,
        optimizer=optimizer,
        numpy_rng_state=np_rng.bit_generator.state,
        torch_rng_state=generator.get_state(),
        extra={"final_loss": final_loss, "wall_time": time.time() - t0},
    )
    return ckpt

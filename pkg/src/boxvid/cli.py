"""Operator CLI: corpus synthesis, training, sampling, evaluation, and
ablation sweeps.

Exit codes: 0 success, 1 internal failure, 2 user/input error. The
BOXVID_OUTPUT_ROOT environment variable supplies a default output root when
--out is omitted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import experiments
from .checkpoint import load_checkpoint, model_from_checkpoint
from .dataset import build_manifest, load_manifest, spec_from_dict, write_corpus
from .geometry import Box, interpolate_trajectory, load_box_sequence, save_box_sequence
from .runconfig import RunConfig, load_run_config
from .sampling import sample_video, video_digest, write_preview_gif
from .training import train


class UserError(Exception):
    """Bad input or missing file; maps to exit code 2."""


def _resolve_out(args, command: str) -> Path:
    if args.out is not None:
        return Path(args.out)
    root = os.environ.get("BOXVID_OUTPUT_ROOT")
    if root is None:
        raise UserError("no --out given and BOXVID_OUTPUT_ROOT is not set")
    return Path(root) / command


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None) is not None:
        path = Path(args.config)
        if not path.exists():
            raise UserError(f"config file not found: {path}")
        try:
            rc = load_run_config(path)
        except ValueError as exc:
            raise UserError(str(exc)) from None
    else:
        rc = RunConfig()
    overrides = {}
    for key in vars(rc):
        flag = getattr(args, key, None)
        if flag is not None:
            overrides[key] = flag
    return replace(rc, **overrides)


def cmd_synth(args) -> int:
    rc = _load_config(args)
    out = _resolve_out(args, "synth")
    try:
        manifest = build_manifest(rc.clips, rc.seed, rc.frames, rc.pixel_size)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    try:
        write_corpus(out, manifest)
    except OSError as exc:
        raise UserError(f"cannot write corpus to {out}: {exc}") from None
    print(f"wrote {len(manifest['clips'])} clips to {out}")
    return 0


def cmd_train(args) -> int:
    rc = _load_config(args)
    corpus = Path(args.corpus)
    if not (corpus / "manifest.json").exists():
        raise UserError(f"no corpus manifest under {corpus}")
    out = _resolve_out(args, "train")
    ckpt = train(
        corpus, rc.train_config(), out,
        model_cfg=rc.model_config(), schedule_cfg=rc.schedule_config(),
        use_motion=not args.no_motion, resume=args.resume, device=rc.device,
        log_stream=sys.stdout if args.verbose else None,
    )
    print(f"checkpoint: {ckpt}")
    return 0


def _parse_box(text: str) -> Box:
    parts = text.split(",")
    if len(parts) != 4:
        raise UserError(f"box must be 'x1,y1,x2,y2', got {text!r}")
    try:
        return Box(*[float(p) for p in parts])
    except ValueError as exc:
        raise UserError(f"bad box {text!r}: {exc}") from None


def _load_subject(path: Path, pixel_size: int) -> np.ndarray:
    if not path.exists():
        raise UserError(f"subject image not found: {path}")
    if path.suffix == ".npy":
        img = np.load(path)
    else:
        from PIL import Image

        img = np.asarray(Image.open(path).convert("RGB"))
    if img.shape != (pixel_size, pixel_size, 3):
        raise UserError(
            f"subject image has shape {img.shape}, expected ({pixel_size}, {pixel_size}, 3)"
        )
    return img.astype(np.uint8)


def cmd_sample(args) -> int:
    payload = _load_ckpt(args.checkpoint)
    model = model_from_checkpoint(payload)
    cfg = model.config
    if args.boxes is not None:
        try:
            boxes = load_box_sequence(args.boxes)
        except (ValueError, FileNotFoundError) as exc:
            raise UserError(str(exc)) from None
        if len(boxes) != cfg.frames:
            raise UserError(
                f"box file has {len(boxes)} frames but the model expects {cfg.frames}"
            )
    elif args.start_box is not None and args.end_box is not None:
        boxes = interpolate_trajectory(_parse_box(args.start_box),
                                       _parse_box(args.end_box), cfg.frames)
    else:
        raise UserError("provide --boxes or both --start-box and --end-box")

    subject = _load_subject(Path(args.subject), cfg.pixel_size)
    tokens = tuple(args.prompt.split())
    from .model.conditioning import build_conditioning

    try:
        cond = build_conditioning(model, boxes, subject, tokens)
    except ValueError as exc:
        raise UserError(str(exc)) from None

    sched = payload["schedule_config"]
    steps = args.steps if args.steps is not None else sched["ddim_steps"]
    guidance = args.guidance if args.guidance is not None else sched["guidance_scale"]
    video = sample_video(model, cond, steps, guidance, args.seed)

    out = _resolve_out(args, "sample")
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "video.npy", video)
    save_box_sequence(boxes, out / "boxes.txt")
    write_preview_gif(video, boxes, out / "preview.gif")
    print(f"video: {out / 'video.npy'} sha256={video_digest(video)}")
    return 0


def _load_ckpt(path_str: str):
    try:
        return load_checkpoint(path_str)
    except (FileNotFoundError, ValueError) as exc:
        raise UserError(str(exc)) from None


def cmd_evaluate(args) -> int:
    eval_dir = Path(args.eval_set)
    if not (eval_dir / "manifest.json").exists():
        raise UserError(f"no eval-set manifest under {eval_dir}")
    try:
        cases = experiments.cases_from_corpus(eval_dir, limit=args.limit)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    out = _resolve_out(args, "evaluate")

    if args.use_stored_videos:
        report = experiments.evaluate_stored(cases)
    else:
        if args.checkpoint is None:
            raise UserError("--checkpoint is required unless --use-stored-videos is set")
        payload = _load_ckpt(args.checkpoint)
        model = model_from_checkpoint(payload)
        sched = payload["schedule_config"]
        for case in cases:
            case.video = None
        report, _ = experiments.evaluate_generated(
            model, cases, sched["ddim_steps"], sched["guidance_scale"], args.seed)

    report.save(out)
    agg = report.aggregate()
    print(json.dumps(agg, indent=1, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    rc = _load_config(args)
    corpus = Path(args.corpus)
    if not (corpus / "manifest.json").exists():
        raise UserError(f"no corpus manifest under {corpus}")
    eval_dir = Path(args.eval_set)
    if not (eval_dir / "manifest.json").exists():
        raise UserError(f"no eval-set manifest under {eval_dir}")
    out = _resolve_out(args, "ablate")
    out.mkdir(parents=True, exist_ok=True)

    variants = (tuple(v.strip() for v in args.variants.split(","))
                if args.variants else experiments.VARIANT_GRID)
    seeds = tuple(int(s) for s in args.seeds.split(","))

    table = {}
    for variant in variants:
        try:
            overrides = experiments.variant_overrides(variant)
        except ValueError as exc:
            raise UserError(str(exc)) from None
        rows = []
        for seed in seeds:
            vdir = out / f"{variant.replace('=', '_')}_seed{seed}"
            rows.append(experiments.run_variant(corpus, eval_dir, vdir, rc,
                                                seed, overrides))
        table[variant] = {
            "seeds": list(seeds),
            "miou": float(np.mean([r["miou"] for r in rows])),
            "cd": float(np.mean([r["cd"] for r in rows])),
            "r_sim": float(np.mean([r["r_sim"] for r in rows])),
            "t_cons": float(np.mean([r["t_cons"] for r in rows])),
            "per_seed": rows,
        }
    (out / "table.json").write_text(json.dumps(table, indent=1, sort_keys=True))

    lines = [f"{'variant':<16} {'mIoU':>7} {'CD':>7} {'R-Sim':>7} {'T-Cons':>7}"]
    for variant, row in table.items():
        lines.append(f"{variant:<16} {row['miou']:>7.3f} {row['cd']:>7.3f} "
                     f"{row['r_sim']:>7.3f} {row['t_cons']:>7.3f}")
    text = "\n".join(lines)
    (out / "table.txt").write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boxvid")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p, keys):
        p.add_argument("--config", help="run config JSON file")
        flag_types = {
            "steps_total": int, "ddim_steps": int, "iterations": int,
            "batch_size": int, "seed": int, "clips": int, "frames": int,
            "pixel_size": int, "eval_cases": int, "device": str,
        }
        for key in keys:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key,
                           type=flag_types.get(key, float), default=None)

    p = sub.add_parser("synth", help="synthesize a moving-shapes corpus")
    p.add_argument("--out")
    add_config_flags(p, ("clips", "seed", "frames", "pixel_size"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train reference attention + motion module")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--no-motion", action="store_true",
                   help="train without the motion module (ablation)")
    p.add_argument("--verbose", action="store_true")
    add_config_flags(p, ("lambda_m", "lambda_l", "learning_rate", "weight_decay",
                         "iterations", "batch_size", "cond_drop_prob", "seed",
                         "steps_total", "beta_start", "beta_end", "frames",
                         "pixel_size", "device"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate one video from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--subject", required=True, help="subject image (.png or .npy)")
    p.add_argument("--boxes", help="box-sequence file, one frame per line")
    p.add_argument("--start-box", help="x1,y1,x2,y2 for frame 1")
    p.add_argument("--end-box", help="x1,y1,x2,y2 for the last frame")
    p.add_argument("--prompt", required=True, help="space-separated caption tokens")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--guidance", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="score generated or stored videos")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--eval-set", required=True, help="corpus dir used as eval manifest")
    p.add_argument("--use-stored-videos", action="store_true",
                   help="detector round trip on the stored clips")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the ablation variant grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--eval-set", required=True)
    p.add_argument("--variants", default=None,
                   help="comma-separated subset of the variant grid")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--out")
    add_config_flags(p, ("iterations", "batch_size", "eval_cases", "frames",
                         "pixel_size", "device"))
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


def entrypoint() -> None:
    sys.exit(main())

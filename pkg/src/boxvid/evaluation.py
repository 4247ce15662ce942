"""Metrics: box overlap and centroid distance for motion-control precision,
embedding-cosine scores for consistency and subject fidelity, a frame-diff
motion-magnitude proxy, and a color-threshold box detector for videos in the
synthetic corpus style.

The embedder is pluggable: anything mapping a uint8 (H, W, 3) frame to a
nonzero 1-D vector works; the default is a flattened 16x16 grayscale
area-downsample, so no pretrained encoders are required.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .geometry import Box, BoxSequence

FRAME_DIAGONAL = math.sqrt(2.0)  # unit-square diagonal used to normalize CD


def box_iou(a: Box, b: Box) -> float:
    """Intersection over union of two normalized boxes; 0 when both degenerate."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def miou(pred: BoxSequence, target: BoxSequence) -> float:
    """Mean per-frame IoU."""
    if len(pred) != len(target):
        raise ValueError(f"invalid-input: {len(pred)} vs {len(target)} frames")
    return float(np.mean([box_iou(p, t) for p, t in zip(pred, target)]))


def centroid_distance(pred: BoxSequence, target: BoxSequence) -> float:
    """Mean centroid distance per frame, normalized by the frame diagonal."""
    if len(pred) != len(target):
        raise ValueError(f"invalid-input: {len(pred)} vs {len(target)} frames")
    dists = []
    for p, t in zip(pred, target):
        (px, py), (tx, ty) = p.centroid, t.centroid
        dists.append(math.hypot(px - tx, py - ty) / FRAME_DIAGONAL)
    return float(np.mean(dists))


@dataclass(frozen=True)
class DetectorConfig:
    """Color-distance threshold detector replacing a learned box predictor."""

    border: int = 2              # background statistics come from this frame ring
    threshold_scale: float = 5.0   # multiples of the robust background spread
    min_threshold: float = 40.0    # floor on the color-distance threshold
    min_component: int = 4         # smallest pixel count accepted as a subject


DEGENERATE_BOX = Box(0.0, 0.0, 0.0, 0.0)


def _detect_frame(frame: np.ndarray, cfg: DetectorConfig) -> Box:
    h, w, _ = frame.shape
    f = frame.astype(np.float64)
    ring = np.concatenate([
        f[: cfg.border].reshape(-1, 3),
        f[-cfg.border:].reshape(-1, 3),
        f[:, : cfg.border].reshape(-1, 3),
        f[:, -cfg.border:].reshape(-1, 3),
    ])
    bg = np.median(ring, axis=0)
    spread = np.median(np.linalg.norm(ring - bg, axis=1))
    threshold = max(cfg.threshold_scale * spread, cfg.min_threshold)
    dist = np.linalg.norm(f - bg, axis=2)
    fg = dist > threshold
    labels, count = ndimage.label(fg)
    if count == 0:
        return DEGENERATE_BOX
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, count + 1))
    best = int(np.argmax(sizes)) + 1
    if sizes[best - 1] < cfg.min_component:
        return DEGENERATE_BOX
    rows = np.flatnonzero((labels == best).any(axis=1))
    cols = np.flatnonzero((labels == best).any(axis=0))
    return Box(cols[0] / w, rows[0] / h, (cols[-1] + 1) / w, (rows[-1] + 1) / h)


def detect_boxes(video: np.ndarray, cfg: DetectorConfig = DetectorConfig()) -> BoxSequence:
    """Per-frame largest-component tight box; degenerate when nothing is found."""
    return BoxSequence(tuple(_detect_frame(frame, cfg) for frame in video))


def count_detection_failures(boxes: BoxSequence) -> int:
    return sum(1 for b in boxes if b.is_degenerate())


def toy_embedder(frame: np.ndarray) -> np.ndarray:
    """Flattened 16x16 grayscale area-downsample; deterministic and
    dependency-free."""
    gray = frame.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    img = Image.fromarray(gray)
    small = img.resize((16, 16), Image.Resampling.BOX)
    return np.asarray(small, dtype=np.float64).reshape(-1)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("undefined-similarity: zero embedding vector")
    return float(np.dot(a, b) / (na * nb))


def temporal_consistency(video: np.ndarray,
                         embedder: Callable = toy_embedder) -> float:
    """Mean cosine similarity of consecutive frame embeddings."""
    if video.shape[0] < 2:
        raise ValueError("invalid-input: need at least two frames")
    embs = [embedder(frame) for frame in video]
    sims = [_cosine(embs[i], embs[i + 1]) for i in range(len(embs) - 1)]
    return float(np.mean(sims))


def region_similarity(subject_image: np.ndarray, video: np.ndarray,
                      boxes: BoxSequence, embedder: Callable = toy_embedder
                      ) -> tuple[float, int]:
    """Mean cosine similarity between the subject image and per-frame box
    crops rescaled to the subject resolution. Returns (score, skipped) where
    degenerate boxes skip their frame."""
    if len(boxes) != video.shape[0]:
        raise ValueError(f"invalid-input: {len(boxes)} boxes for {video.shape[0]} frames")
    h, w = video.shape[1:3]
    target = embedder(subject_image)
    sims = []
    skipped = 0
    for frame, box in zip(video, boxes):
        c0, c1 = int(math.floor(box.x1 * w)), int(math.ceil(box.x2 * w))
        r0, r1 = int(math.floor(box.y1 * h)), int(math.ceil(box.y2 * h))
        if c1 - c0 < 1 or r1 - r0 < 1:
            skipped += 1
            continue
        crop = Image.fromarray(frame[r0:r1, c0:c1])
        crop = crop.resize((subject_image.shape[1], subject_image.shape[0]),
                           Image.Resampling.BILINEAR)
        sims.append(_cosine(target, embedder(np.asarray(crop))))
    if not sims:
        return 0.0, skipped
    return float(np.mean(sims)), skipped


def dynamic_degree_proxy(video: np.ndarray) -> float:
    """Mean absolute inter-frame pixel difference, scaled to [0, 1]."""
    if video.shape[0] < 2:
        raise ValueError("invalid-input: need at least two frames")
    diffs = np.abs(np.diff(video.astype(np.float64), axis=0))
    return float(diffs.mean() / 255.0)


@dataclass
class ClipScores:
    clip_id: str
    miou: float
    cd: float
    t_cons: float
    r_sim: float
    sim: float
    dd_proxy: float
    detection_failures: int
    r_sim_skipped: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    clips: list[ClipScores] = field(default_factory=list)

    def aggregate(self) -> dict:
        if not self.clips:
            raise ValueError("invalid-input: empty report")
        keys = ("miou", "cd", "t_cons", "r_sim", "sim", "dd_proxy")
        agg = {k: float(np.mean([getattr(c, k) for c in self.clips])) for k in keys}
        agg["detection_failures"] = int(sum(c.detection_failures for c in self.clips))
        agg["num_clips"] = len(self.clips)
        return agg

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "per_clip.jsonl", "w") as fh:
            for c in self.clips:
                fh.write(json.dumps(c.to_dict(), sort_keys=True) + "\n")
        (out / "summary.json").write_text(
            json.dumps(self.aggregate(), indent=1, sort_keys=True))


def score_clip(clip_id: str, video: np.ndarray, target_boxes: BoxSequence,
               subject_image: np.ndarray,
               detector_cfg: DetectorConfig = DetectorConfig(),
               embedder: Callable = toy_embedder) -> ClipScores:
    """All metrics for one generated (or stored) video against its targets.

    A degenerate predicted box scores IoU 0 and the maximum centroid distance
    for its frame; failures are also counted separately.
    """
    pred = detect_boxes(video, detector_cfg)
    ious, cds = [], []
    for p, t in zip(pred, target_boxes):
        if p.is_degenerate():
            ious.append(0.0)
            cds.append(1.0)
        else:
            ious.append(box_iou(p, t))
            (px, py), (tx, ty) = p.centroid, t.centroid
            cds.append(math.hypot(px - tx, py - ty) / FRAME_DIAGONAL)
    r_sim, skipped = region_similarity(subject_image, video, target_boxes, embedder)
    sim = _cosine(embedder(subject_image),
                  np.mean([embedder(f) for f in video], axis=0))
    return ClipScores(
        clip_id=clip_id,
        miou=float(np.mean(ious)),
        cd=float(np.mean(cds)),
        t_cons=temporal_consistency(video, embedder),
        r_sim=r_sim,
        sim=sim,
        dd_proxy=dynamic_degree_proxy(video),
        detection_failures=count_detection_failures(pred),
        r_sim_skipped=skipped,
    )

"""Synthetic moving-shapes corpus with exact boxes and masks.

Each clip renders one solid-color shape (circle, square, or triangle) moving
linearly over a static textured gray background. Masks are exact silhouettes
evaluated at pixel centers (no anti-aliasing); boxes are the tight bounds of
the silhouette, stored normalized with the same half-open convention the
rasterizer uses, so rasterizing a stored box recovers the mask's bounding
rows and columns exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .geometry import Box, BoxSequence, MaskVideo, PIXEL, load_box_sequence, save_box_sequence
from .vocab import COLOR_RGB, SHAPES, caption_for, direction_token

BLANK_VALUE = 128          # mid-gray blank background for subject images
TEXTURE_AMPLITUDE = 12.0   # peak background texture deviation, uint8 units
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ClipSpec:
    """Shape/color/trajectory/size parameters; centers and size normalized."""

    shape: str
    color: str
    size: float                    # bounding radius: half-extent of the shape
    start: tuple[float, float]     # center at frame 1
    end: tuple[float, float]       # center at frame F
    frames: int = 8
    pixel_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "end", tuple(float(v) for v in self.end))
        if self.shape not in SHAPES:
            raise ValueError(f"invalid-spec: unknown shape {self.shape!r}")
        if self.color not in COLOR_RGB:
            raise ValueError(f"invalid-spec: unknown color {self.color!r}")
        if not (0.0 < self.size < 0.5):
            raise ValueError(f"invalid-spec: size {self.size} not in (0, 0.5)")
        if self.frames < 1 or self.pixel_size < 8:
            raise ValueError("invalid-spec: bad frame count or resolution")
        for cx, cy in (self.start, self.end):
            if cx - self.size < 0 or cx + self.size > 1 or cy - self.size < 0 or cy + self.size > 1:
                raise ValueError(
                    f"invalid-spec: trajectory exits frame (center ({cx}, {cy}), "
                    f"size {self.size})"
                )

    def caption(self) -> tuple[str, ...]:
        return caption_for(self.shape, self.color, direction_token(self.start, self.end))


@dataclass
class ClipRecord:
    video: np.ndarray        # (F, H, W, 3) uint8
    boxes: BoxSequence
    masks: MaskVideo         # binary, pixel resolution
    caption: tuple[str, ...]
    subject_word: str
    spec: ClipSpec
    seed: int


@dataclass(frozen=True)
class AnnotationRecord:
    """Per-clip box statistics driving the corpus filters."""

    first_frame_box_count: int
    box_area_fraction: tuple[float, ...]
    box_width_fraction: tuple[float, ...]
    box_height_fraction: tuple[float, ...]
    first_box: Box
    last_box: Box


def _shape_mask(shape: str, cx: float, cy: float, size: float,
                px: np.ndarray, py: np.ndarray) -> np.ndarray:
    dx = px[None, :] - cx
    dy = py[:, None] - cy
    if shape == "circle":
        return dx ** 2 + dy ** 2 <= size ** 2
    if shape == "square":
        return (np.abs(dx) <= size) & (np.abs(dy) <= size)
    if shape == "triangle":
        # upward triangle inscribed in the bounding circle
        h = math.sqrt(3.0) / 2.0 * size
        top = (0.0, -size)
        left = (-h, 0.5 * size)
        right = (h, 0.5 * size)
        inside = np.ones_like(dx, dtype=bool) & np.ones_like(dy, dtype=bool)
        for (ax, ay), (bx, by) in ((top, left), (left, right), (right, top)):
            cross = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax)
            inside &= cross >= 0
        return inside
    raise ValueError(f"invalid-spec: unknown shape {shape!r}")


def _tight_box(mask: np.ndarray) -> Box:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if len(rows) == 0:
        return Box(0.0, 0.0, 0.0, 0.0)
    h, w = mask.shape
    return Box(cols[0] / w, rows[0] / h, (cols[-1] + 1) / w, (rows[-1] + 1) / h)


def _background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    base = float(rng.integers(96, 160))
    noise = rng.standard_normal((8, 8))
    tex = np.kron(noise, np.ones((height // 8, width // 8)))
    tex = uniform_filter(tex, size=7)
    peak = np.abs(tex).max()
    if peak > 0:
        tex = tex / peak * TEXTURE_AMPLITUDE
    frame = np.clip(base + tex, 0, 255).astype(np.uint8)
    return np.repeat(frame[:, :, None], 3, axis=2)


def synth_clip(spec: ClipSpec, seed: int) -> ClipRecord:
    """Render one clip; deterministic in (spec, seed)."""
    rng = np.random.default_rng(seed)
    h = w = spec.pixel_size
    background = _background(rng, h, w)
    px = (np.arange(w) + 0.5) / w
    py = (np.arange(h) + 0.5) / h
    color = np.array(COLOR_RGB[spec.color], dtype=np.uint8)

    video = np.empty((spec.frames, h, w, 3), dtype=np.uint8)
    masks = np.empty((spec.frames, h, w), dtype=np.float64)
    boxes = []
    ts = np.linspace(0.0, 1.0, spec.frames) if spec.frames > 1 else np.zeros(1)
    for i, t in enumerate(ts):
        cx = (1.0 - t) * spec.start[0] + t * spec.end[0]
        cy = (1.0 - t) * spec.start[1] + t * spec.end[1]
        m = _shape_mask(spec.shape, cx, cy, spec.size, px, py)
        frame = background.copy()
        frame[m] = color
        video[i] = frame
        masks[i] = m
        boxes.append(_tight_box(m))

    return ClipRecord(
        video=video,
        boxes=BoxSequence(tuple(boxes)),
        masks=MaskVideo(masks, PIXEL),
        caption=spec.caption(),
        subject_word=spec.shape,
        spec=spec,
        seed=seed,
    )


def extract_subject(frame: np.ndarray, mask: np.ndarray,
                    blank_value: int = BLANK_VALUE) -> np.ndarray:
    """Subject pixels on a blank background."""
    out = np.full_like(frame, blank_value)
    out[mask] = frame[mask]
    return out


def subject_image_from_clip(clip: ClipRecord, frame_index: int,
                            blank_value: int = BLANK_VALUE) -> np.ndarray:
    """Copy subject pixels of the 1-based `frame_index`; blank out the rest."""
    f = clip.video.shape[0]
    if not (1 <= frame_index <= f):
        raise ValueError(f"invalid-frame: index {frame_index} outside [1, {f}]")
    return extract_subject(clip.video[frame_index - 1],
                           clip.masks.values[frame_index - 1] > 0.5, blank_value)


def annotate(clip: ClipRecord, first_frame_box_count: int = 1) -> AnnotationRecord:
    areas, widths, heights = [], [], []
    for b in clip.boxes:
        areas.append(b.area)
        widths.append(b.width)
        heights.append(b.height)
    return AnnotationRecord(
        first_frame_box_count=first_frame_box_count,
        box_area_fraction=tuple(areas),
        box_width_fraction=tuple(widths),
        box_height_fraction=tuple(heights),
        first_box=clip.boxes[0],
        last_box=clip.boxes[len(clip.boxes) - 1],
    )


def filter_single_subject(a: AnnotationRecord) -> bool:
    """Keep only clips whose first frame holds exactly one subject box."""
    return a.first_frame_box_count == 1


def filter_size(a: AnnotationRecord, min_area: float = 0.01, max_area: float = 0.6,
                max_side: float = 0.9) -> bool:
    """Reject subjects too small or too large on any frame."""
    if not (0.0 <= min_area < max_area <= 1.0):
        raise ValueError(f"invalid-config: bad area bounds ({min_area}, {max_area})")
    for area, width, height in zip(a.box_area_fraction, a.box_width_fraction,
                                   a.box_height_fraction):
        if not (min_area <= area <= max_area):
            return False
        if width > max_side or height > max_side:
            return False
    return True


def filter_dynamics(a: AnnotationRecord, min_centroid_shift: float = 0.1) -> bool:
    """Keep clips whose first-to-last centroid displacement is large enough."""
    c0 = a.first_box.centroid
    c1 = a.last_box.centroid
    return math.hypot(c1[0] - c0[0], c1[1] - c0[1]) >= min_centroid_shift


def passes_filters(a: AnnotationRecord, min_centroid_shift: float = 0.1) -> bool:
    return (filter_single_subject(a) and filter_size(a)
            and filter_dynamics(a, min_centroid_shift))


def sample_clip_spec(rng: np.random.Generator, frames: int = 8, pixel_size: int = 64,
                     size_range: tuple[float, float] = (0.10, 0.16),
                     min_shift: float = 0.12) -> ClipSpec:
    """Draw a random spec that passes all corpus filters by construction."""
    shape = str(rng.choice(SHAPES))
    color = str(rng.choice(sorted(COLOR_RGB)))
    size = float(rng.uniform(*size_range))
    margin = size + 1.0 / pixel_size
    while True:
        start = tuple(rng.uniform(margin, 1.0 - margin, size=2))
        end = tuple(rng.uniform(margin, 1.0 - margin, size=2))
        if math.hypot(end[0] - start[0], end[1] - start[1]) >= min_shift:
            break
    return ClipSpec(shape=shape, color=color, size=size, start=start, end=end,
                    frames=frames, pixel_size=pixel_size)


def build_manifest(num_clips: int, seed: int, frames: int = 8,
                   pixel_size: int = 64) -> dict:
    """Deterministic corpus manifest; regenerating from it is byte-identical."""
    rng = np.random.default_rng(seed)
    clips = []
    for i in range(num_clips):
        spec = sample_clip_spec(rng, frames=frames, pixel_size=pixel_size)
        clips.append({
            "id": f"clip_{i:05d}",
            "seed": int(rng.integers(0, 2 ** 31 - 1)),
            "spec": asdict(spec),
        })
    return {"version": 1, "seed": seed, "frames": frames, "pixel_size": pixel_size,
            "clips": clips}


def spec_from_dict(d: dict) -> ClipSpec:
    d = dict(d)
    d["start"] = tuple(d["start"])
    d["end"] = tuple(d["end"])
    return ClipSpec(**d)


def write_corpus(out_dir: str | Path, manifest: dict) -> Path:
    """Materialize every clip in the manifest. All specs are validated before
    anything is written, so an invalid spec leaves no partial output."""
    specs = [(entry["id"], spec_from_dict(entry["spec"]), entry["seed"])
             for entry in manifest["clips"]]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    for clip_id, spec, seed in specs:
        clip = synth_clip(spec, seed)
        d = out / clip_id
        d.mkdir(exist_ok=True)
        np.save(d / "video.npy", clip.video)
        np.save(d / "masks.npy", clip.masks.values.astype(np.uint8))
        save_box_sequence(clip.boxes, d / "boxes.txt")
        meta = {
            "caption": list(clip.caption),
            "subject_word": clip.subject_word,
            "seed": seed,
            "spec": asdict(spec),
        }
        (d / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    return out


def load_manifest(corpus_dir: str | Path) -> dict:
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"io-error: no manifest at {path}")
    return json.loads(path.read_text())


def load_clip(clip_dir: str | Path) -> ClipRecord:
    d = Path(clip_dir)
    meta = json.loads((d / "meta.json").read_text())
    video = np.load(d / "video.npy")
    masks = np.load(d / "masks.npy").astype(np.float64)
    return ClipRecord(
        video=video,
        boxes=load_box_sequence(d / "boxes.txt"),
        masks=MaskVideo(masks, PIXEL),
        caption=tuple(meta["caption"]),
        subject_word=meta["subject_word"],
        spec=spec_from_dict(meta["spec"]),
        seed=meta["seed"],
    )


def iter_corpus(corpus_dir: str | Path):
    """Yield (clip_id, ClipRecord) in manifest order."""
    manifest = load_manifest(corpus_dir)
    for entry in manifest["clips"]:
        yield entry["id"], load_clip(Path(corpus_dir) / entry["id"])

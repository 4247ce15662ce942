"""Box and mask math for trajectory conditioning.

Boxes live in normalized [0, 1] coordinates (top-left x1,y1 to bottom-right
x2,y2); pixel coordinates appear only at rasterization. Rasterization uses the
half-open pixel-center rule: pixel (r, c) of an HxW grid belongs to a box iff
its center ((c+0.5)/W, (r+0.5)/H) satisfies x1 <= cx < x2 and y1 <= cy < y2,
so degenerate boxes rasterize to empty frames. Down-resizing is exact area
averaging and requires divisible resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

PIXEL = "pixel"
LATENT = "latent"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in normalized coordinates, corners ordered."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(np.isfinite(c) for c in coords):
            raise ValueError(f"invalid-box: non-finite coordinates {coords}")
        if not all(0.0 <= c <= 1.0 for c in coords):
            raise ValueError(f"invalid-box: coordinates outside [0,1]: {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"invalid-box: corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def centroid(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def is_degenerate(self) -> bool:
        return self.area == 0.0


@dataclass(frozen=True)
class BoxSequence:
    """One box per frame; the trajectory conditioning signal."""

    boxes: tuple[Box, ...]

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if len(self.boxes) == 0:
            raise ValueError("invalid-box-sequence: empty")

    def __len__(self) -> int:
        return len(self.boxes)

    def __iter__(self) -> Iterator[Box]:
        return iter(self.boxes)

    def __getitem__(self, i: int) -> Box:
        return self.boxes[i]


def save_box_sequence(seq: BoxSequence, path: str | Path) -> None:
    """Write one `x1 y1 x2 y2` line per frame, four decimals, normalized."""
    lines = [f"{b.x1:.4f} {b.y1:.4f} {b.x2:.4f} {b.y2:.4f}" for b in seq]
    Path(path).write_text("\n".join(lines) + "\n")


def load_box_sequence(path: str | Path) -> BoxSequence:
    """Parse the box-sequence text format; errors carry the 1-based line number."""
    boxes = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(
                f"invalid-box-file: line {lineno}: expected 4 fields, got {len(parts)}"
            )
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ValueError(f"invalid-box-file: line {lineno}: non-numeric field") from None
        try:
            boxes.append(Box(*vals))
        except ValueError as exc:
            raise ValueError(f"invalid-box-file: line {lineno}: {exc}") from None
    if not boxes:
        raise ValueError("invalid-box-file: no boxes found")
    return BoxSequence(tuple(boxes))


@dataclass(frozen=True)
class MaskVideo:
    """Per-frame mask grid (F, H, W) with values in [0, 1] and a resolution tag."""

    values: np.ndarray
    resolution: str

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 3:
            raise ValueError(f"invalid-mask: expected (F, H, W), got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("invalid-mask: non-finite entries")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("invalid-mask: entries outside [0,1]")
        if self.resolution not in (PIXEL, LATENT):
            raise ValueError(f"invalid-mask: unknown resolution tag {self.resolution!r}")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))


def interpolate_trajectory(start: Box, end: Box, num_frames: int) -> BoxSequence:
    """Per-corner linear interpolation from `start` (frame 1) to `end` (frame F).

    Endpoints are exact, as are constant trajectories; interior frames clamp
    ulp-level rounding so every output satisfies the box invariants.
    """
    if num_frames < 2:
        raise ValueError(f"invalid-frame-count: need F >= 2, got {num_frames}")
    corners = np.stack(
        [np.linspace(getattr(start, k), getattr(end, k), num_frames)
         for k in ("x1", "y1", "x2", "y2")],
        axis=1,
    )
    corners = np.clip(corners, 0.0, 1.0)
    boxes = []
    for x1, y1, x2, y2 in corners:
        boxes.append(Box(float(x1), float(y1), float(max(x1, x2)), float(max(y1, y2))))
    return BoxSequence(tuple(boxes))


def rasterize_boxes(seq: BoxSequence, height: int, width: int) -> MaskVideo:
    """Binary pixel-resolution mask video: 1 inside each frame's box, 0 outside."""
    if height < 1 or width < 1:
        raise ValueError(f"invalid-resolution: {height}x{width}")
    cx = (np.arange(width) + 0.5) / width
    cy = (np.arange(height) + 0.5) / height
    frames = np.zeros((len(seq), height, width), dtype=np.float64)
    for i, b in enumerate(seq):
        in_x = (b.x1 <= cx) & (cx < b.x2)
        in_y = (b.y1 <= cy) & (cy < b.y2)
        frames[i] = np.outer(in_y, in_x)
    return MaskVideo(frames, PIXEL)


def invert_mask(mask: MaskVideo) -> MaskVideo:
    """Entrywise complement 1 - v; this turns a box mask into the motion signal."""
    return MaskVideo(1.0 - mask.values, mask.resolution)


def resize_to_latent(mask: MaskVideo, height: int, width: int) -> MaskVideo:
    """Area-average a pixel mask down to a latent grid; resolutions must divide."""
    if height > mask.height or width > mask.width:
        raise ValueError(
            f"invalid-resize: target {height}x{width} exceeds source "
            f"{mask.height}x{mask.width}"
        )
    if mask.height % height != 0 or mask.width % width != 0:
        raise ValueError(
            f"invalid-resize: {mask.height}x{mask.width} not divisible by {height}x{width}"
        )
    bh = mask.height // height
    bw = mask.width // width
    v = mask.values.reshape(mask.frames, height, bh, width, bw)
    return MaskVideo(v.mean(axis=(2, 4)), LATENT)


def blend_mask(mask: MaskVideo, background_weight: float) -> MaskVideo:
    """Soften the background: M + w * (1 - M), so 1 stays 1 and 0 becomes w."""
    if not (0.0 <= background_weight <= 1.0):
        raise ValueError(f"invalid-weight: background weight {background_weight} not in [0,1]")
    v = mask.values
    return MaskVideo(v + background_weight * (1.0 - v), mask.resolution)

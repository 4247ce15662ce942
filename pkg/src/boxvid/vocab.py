"""Closed caption vocabulary: shapes, colors, motion directions, filler.

Captions are short token lists like ["a", "red", "circle", "moving", "right"],
padded to a fixed length with the pad token. Token ids index the frozen text
embedding table inside the base model.
"""

from __future__ import annotations

import math

PAD = "<pad>"
SHAPES = ("circle", "square", "triangle")
COLORS = ("red", "green", "blue", "yellow", "magenta", "cyan")
DIRECTIONS = ("right", "left", "up", "down",
              "up-right", "up-left", "down-right", "down-left", "still")
FILLER = ("a", "moving")

VOCAB: tuple[str, ...] = (PAD,) + FILLER + SHAPES + COLORS + DIRECTIONS
TOKEN_TO_ID = {tok: i for i, tok in enumerate(VOCAB)}
PAD_ID = TOKEN_TO_ID[PAD]

COLOR_RGB = {
    "red": (220, 40, 40),
    "green": (40, 190, 60),
    "blue": (50, 80, 230),
    "yellow": (235, 220, 50),
    "magenta": (215, 50, 200),
    "cyan": (60, 210, 220),
}


def encode_caption(tokens, length: int) -> list[int]:
    """Token list to fixed-length id list, right-padded with the pad id."""
    if len(tokens) > length:
        raise ValueError(f"invalid-caption: {len(tokens)} tokens exceed length {length}")
    ids = []
    for tok in tokens:
        if tok not in TOKEN_TO_ID:
            raise ValueError(f"invalid-caption: unknown token {tok!r}")
        ids.append(TOKEN_TO_ID[tok])
    ids.extend([PAD_ID] * (length - len(ids)))
    return ids


def direction_token(start: tuple[float, float], end: tuple[float, float],
                    still_threshold: float = 1e-3) -> str:
    """Nearest 8-way compass direction of the centroid displacement."""
    dx = end[0] - start[0]
    dy = end[1] - start[1]
    if math.hypot(dx, dy) < still_threshold:
        return "still"
    # y grows downward in image coordinates
    angle = math.degrees(math.atan2(-dy, dx)) % 360.0
    compass = ("right", "up-right", "up", "up-left",
               "left", "down-left", "down", "down-right")
    return compass[int((angle + 22.5) // 45) % 8]


def caption_for(shape: str, color: str, direction: str) -> tuple[str, ...]:
    if direction == "still":
        return ("a", color, shape, "still")
    return ("a", color, shape, "moving", direction)

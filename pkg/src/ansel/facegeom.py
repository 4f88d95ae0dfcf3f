"""Crop geometry around detected faces.

The crop is built from the union of all face boxes, expanded outward by a
margin (10% of the union's own width/height on each side), then extended
down to the bottom of the image as a stand-in for body extent, and finally
clamped to the image bounds. Rounding is always outward so a detected face
is never cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core import CropRect, FaceBox
from .errors import NoFaces, ValidationError


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"image dims must be positive, got {self.width}x{self.height}")


def union_box(faces: Sequence[FaceBox]) -> tuple[int, int, int, int]:
    """Smallest (x, y, w, h) rectangle containing every face box."""
    if not faces:
        raise NoFaces("union_box needs at least one face")
    x0 = min(f.x for f in faces)
    y0 = min(f.y for f in faces)
    x1 = max(f.x + f.w for f in faces)
    y1 = max(f.y + f.h for f in faces)
    return (x0, y0, x1 - x0, y1 - y0)


def face_crop_rect(
    faces: Sequence[FaceBox], dims: ImageDims, margin: float = 0.10
) -> CropRect:
    """Margin-expanded union of faces, extended to the image bottom, clamped."""
    if not faces:
        raise NoFaces("face_crop_rect needs at least one face")
    if margin < 0:
        raise ValidationError(f"margin must be >= 0, got {margin}")
    ux, uy, uw, uh = union_box(faces)
    dx, dy = margin * uw, margin * uh
    x0 = math.floor(ux - dx)
    x1 = math.ceil(ux + uw + dx)
    y0 = math.floor(uy - dy)
    y1 = dims.height  # body-extent proxy: always run to the bottom edge
    # Clamp to bounds; stays non-empty even for boxes grazing an edge.
    x0 = max(0, min(x0, dims.width - 1))
    x1 = max(x0 + 1, min(dims.width, x1))
    y0 = max(0, min(y0, dims.height - 1))
    return CropRect(x0=x0, y0=y0, x1=x1, y1=y1)

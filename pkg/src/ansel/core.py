"""Shared domain types.

Every type validates its invariants at construction and is immutable
afterwards, so instances can be passed between workers freely. Embedding
payloads are numpy arrays with the writeable flag cleared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue, ValidationError

NORM_TOL = 1e-6


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension real vector, optionally carrying a unit-norm guarantee."""

    values: np.ndarray
    dim: int
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise DimensionMismatch(f"expected a 1-d vector, got shape {arr.shape}")
        if self.dim < 1:
            raise DimensionMismatch(f"dim must be >= 1, got {self.dim}")
        if arr.shape[0] != self.dim:
            raise DimensionMismatch(
                f"got {arr.shape[0]} values for declared dim {self.dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue("embedding contains NaN or infinite entries")
        if self.normalized:
            norm = float(np.linalg.norm(arr))
            if abs(norm - 1.0) > NORM_TOL:
                raise ValidationError(
                    f"normalized flag set but norm is {norm!r}"
                )
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.dim


def validate_embedding(values: Sequence[float], dim: int) -> EmbeddingVector:
    """Construct an unnormalized EmbeddingVector, checking length and finiteness."""
    return EmbeddingVector(values=np.asarray(values, dtype=np.float64), dim=dim)


@dataclass(frozen=True)
class FaceBox:
    """Pixel-space face bounding box, top-left origin."""

    x: int
    y: int
    w: int
    h: int
    confidence: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"face box must have positive size, got {self.w}x{self.h}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence must be in [0,1], got {self.confidence}")


@dataclass(frozen=True)
class FrameRecord:
    """One sampled video frame and everything known about it so far.

    faces is None until a detector has run; an empty tuple means the detector
    ran and found nothing.
    """

    frame_id: int
    timestamp_s: float
    image_ref: str
    faces: Optional[tuple[FaceBox, ...]] = None
    embedding: Optional[EmbeddingVector] = None

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValidationError(f"frame_id must be >= 0, got {self.frame_id}")
        if self.timestamp_s < 0:
            raise ValidationError(f"timestamp must be >= 0, got {self.timestamp_s}")
        if self.faces is not None:
            object.__setattr__(self, "faces", tuple(self.faces))


def check_frame_order(frames: Sequence[FrameRecord]) -> None:
    """Corpus invariant: unique frame_ids, timestamps non-decreasing in id order."""
    seen: set[int] = set()
    prev_id, prev_ts = -1, -1.0
    for f in sorted(frames, key=lambda r: r.frame_id):
        if f.frame_id in seen:
            raise ValidationError(f"duplicate frame_id {f.frame_id}")
        seen.add(f.frame_id)
        if f.frame_id > prev_id and f.timestamp_s < prev_ts:
            raise ValidationError(
                f"timestamps decrease at frame {f.frame_id}: "
                f"{f.timestamp_s} < {prev_ts}"
            )
        prev_id, prev_ts = f.frame_id, f.timestamp_s


@dataclass(frozen=True)
class PhotoIdea:
    """A single photo description proposed for the event, 1-based ordinal."""

    index: int
    text: str

    def __post_init__(self):
        if self.index < 1:
            raise ValidationError(f"idea index must be >= 1, got {self.index}")
        if not self.text.strip():
            raise ValidationError("idea text must be non-empty")


@dataclass(frozen=True)
class LmParams:
    """Completion-call parameters; defaults match the production configuration."""

    model_id: str = "text-davinci-002"
    temperature: float = 0.7
    max_tokens: int = 2000
    top_p: float = 1.0
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValidationError(f"max_tokens must be positive, got {self.max_tokens}")
        if not (0.0 < self.top_p <= 1.0):
            raise ValidationError(f"top_p must be in (0,1], got {self.top_p}")

    def as_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "top_p": self.top_p,
            "frequency_penalty": self.frequency_penalty,
            "presence_penalty": self.presence_penalty,
        }


@dataclass(frozen=True)
class Provenance:
    """How a shot list came to be: the exact prompt, LM params, and retry count."""

    prompt_text: str
    lm_params: LmParams
    attempt_count: int


@dataclass(frozen=True)
class ShotList:
    """Ordered photo ideas for one event, with generation provenance."""

    event_name: str
    ideas: tuple[PhotoIdea, ...]
    provenance: Provenance

    def __post_init__(self):
        object.__setattr__(self, "ideas", tuple(self.ideas))
        ordinals = [i.index for i in self.ideas]
        if ordinals != list(range(1, len(self.ideas) + 1)):
            raise ValidationError(f"idea ordinals must be 1..n with no gaps, got {ordinals}")


@dataclass(frozen=True)
class CropRect:
    """Half-open pixel rectangle [x0,x1) x [y0,y1), top-left origin."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1):
            raise ValidationError(f"need 0 <= x0 < x1, got x0={self.x0}, x1={self.x1}")
        if not (0 <= self.y0 < self.y1):
            raise ValidationError(f"need 0 <= y0 < y1, got y0={self.y0}, y1={self.y1}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class PortfolioEntry:
    """One selected (phrase, frame) pair; crop is attached later in the pipeline."""

    idea_index: int
    frame_id: int
    score: float
    crop: Optional[CropRect] = None

    def __post_init__(self):
        if self.idea_index < 1:
            raise ValidationError(f"idea_index must be >= 1, got {self.idea_index}")
        if self.frame_id < 0:
            raise ValidationError(f"frame_id must be >= 0, got {self.frame_id}")
        if not (-1.0 - NORM_TOL <= self.score <= 1.0 + NORM_TOL):
            raise ValidationError(f"cosine score out of range: {self.score}")

"""Phrase-to-frame retrieval.

Frames without a detected face are dropped from the candidate pool before
any similarity work. Scores are plain dot products of unit-norm embeddings
(cosine similarity), and the portfolio is the per-phrase argmax over frames.
An optional unique-assignment mode greedily prevents one frame from serving
several phrases.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import NORM_TOL, EmbeddingVector, FrameRecord, PortfolioEntry
from .errors import (
    EmptyInput,
    MixedDimensions,
    NoCandidates,
    NotEnoughFrames,
    ValidationError,
)


class SelectionMode(enum.Enum):
    ALLOW_DUPLICATES = "dup"
    UNIQUE_GREEDY = "unique"


@dataclass(frozen=True)
class SimilarityMatrix:
    """Cosine scores, rows indexed by phrase ordinal 1..P, columns by frame_id."""

    scores: np.ndarray  # (P, F)
    frame_ids: tuple[int, ...]

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise ValidationError(f"scores must be a non-empty 2-d matrix, got shape {s.shape}")
        if s.shape[1] != len(self.frame_ids):
            raise ValidationError(
                f"{s.shape[1]} columns but {len(self.frame_ids)} frame ids"
            )
        if list(self.frame_ids) != sorted(set(self.frame_ids)):
            raise ValidationError("frame_ids must be strictly ascending")
        if np.any(s < -1.0 - NORM_TOL) or np.any(s > 1.0 + NORM_TOL):
            raise ValidationError("cosine scores outside [-1, 1] tolerance band")
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "frame_ids", tuple(self.frame_ids))

    @property
    def num_phrases(self) -> int:
        return int(self.scores.shape[0])

    @property
    def num_frames(self) -> int:
        return int(self.scores.shape[1])


def candidate_pool(frames: Sequence[FrameRecord]) -> list[FrameRecord]:
    """Keep only frames where the detector found at least one face."""
    for f in frames:
        if f.faces is None:
            raise ValidationError(f"frame {f.frame_id} has not been through face detection")
    pool = [f for f in sorted(frames, key=lambda r: r.frame_id) if len(f.faces) >= 1]
    if not pool:
        raise NoCandidates("every frame was filtered out (no faces anywhere)")
    return pool


def similarity_matrix(
    phrases: Sequence[EmbeddingVector],
    frames: Sequence[tuple[int, EmbeddingVector]],
) -> SimilarityMatrix:
    """scores[p][f] = dot(phrase_p, frame_f) for unit-norm, hygiene-processed inputs."""
    if len(phrases) == 0 or len(frames) == 0:
        raise EmptyInput("need at least one phrase and one frame")
    dims = {v.dim for v in phrases} | {v.dim for _, v in frames}
    if len(dims) != 1:
        raise MixedDimensions(f"inputs mix dimensions {sorted(dims)}")
    for v in phrases:
        if not v.normalized:
            raise ValidationError("phrase embeddings must be normalized")
    for fid, v in frames:
        if not v.normalized:
            raise ValidationError(f"frame {fid} embedding must be normalized")
    p_mat = np.stack([v.values for v in phrases])
    f_mat = np.stack([v.values for _, v in frames])
    scores = p_mat @ f_mat.T
    return SimilarityMatrix(scores=scores, frame_ids=tuple(fid for fid, _ in frames))


def select_portfolio(
    m: SimilarityMatrix, mode: SelectionMode = SelectionMode.ALLOW_DUPLICATES
) -> list[PortfolioEntry]:
    """Pick one frame per phrase; crops are attached downstream.

    ALLOW_DUPLICATES takes each row's argmax (ties to the lowest frame_id).
    UNIQUE_GREEDY repeatedly gives the phrase with the best still-available
    score its best unclaimed frame, then reorders the result by phrase ordinal.
    """
    P, F = m.num_phrases, m.num_frames
    if mode is SelectionMode.ALLOW_DUPLICATES:
        entries = []
        for p in range(P):
            col = int(np.argmax(m.scores[p]))  # first max = lowest frame_id
            entries.append(
                PortfolioEntry(
                    idea_index=p + 1,
                    frame_id=m.frame_ids[col],
                    score=float(m.scores[p, col]),
                )
            )
        return entries

    if F < P:
        raise NotEnoughFrames(f"unique assignment needs F >= P, got F={F}, P={P}")
    unassigned = set(range(P))
    unclaimed = set(range(F))
    chosen: dict[int, tuple[int, float]] = {}
    while unassigned:
        best = None  # (score, phrase, col), maximal score then lowest ordinals
        for p in sorted(unassigned):
            for c in sorted(unclaimed):
                s = float(m.scores[p, c])
                if best is None or s > best[0]:
                    best = (s, p, c)
        assert best is not None
        s, p, c = best
        chosen[p] = (c, s)
        unassigned.remove(p)
        unclaimed.remove(c)
    return [
        PortfolioEntry(idea_index=p + 1, frame_id=m.frame_ids[chosen[p][0]], score=chosen[p][1])
        for p in range(P)
    ]

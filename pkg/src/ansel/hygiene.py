"""Embedding hygiene: normalization, outlier-dimension suppression, diagnostics.

A small number of embedding dimensions can carry values far larger than the
rest, which makes a handful of low-quality frames dominate every cosine
lookup. The fix applied here is value-wise: normalize, zero any dimension
whose magnitude exceeds the threshold, renormalize once. Corpus-level
reports (per-dimension stats, dominant dimensions, worst frame) are provided
separately as diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EmbeddingVector, FrameRecord
from .errors import DegenerateEmbedding, EmptyCorpus, MixedDimensions, ValidationError


@dataclass(frozen=True)
class HygienePolicy:
    """Suppression threshold and the norm floor below which a vector is degenerate."""

    threshold: float = 0.3
    epsilon_norm: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ValidationError(f"threshold must be in (0,1), got {self.threshold}")
        if self.epsilon_norm <= 0:
            raise ValidationError(f"epsilon_norm must be > 0, got {self.epsilon_norm}")


DEFAULT_POLICY = HygienePolicy()


def l2_normalize(v: EmbeddingVector, epsilon_norm: float = 1e-8) -> EmbeddingVector:
    """Scale v to unit L2 norm, preserving direction."""
    norm = float(np.linalg.norm(v.values))
    if norm < epsilon_norm:
        raise DegenerateEmbedding(f"norm {norm!r} is below the degeneracy floor")
    return EmbeddingVector(values=v.values / norm, dim=v.dim, normalized=True)


def suppress_outlier_dims(
    v: EmbeddingVector, policy: HygienePolicy = DEFAULT_POLICY
) -> EmbeddingVector:
    """Normalize, zero every dimension with magnitude above the threshold, renormalize.

    Single pass by contract: no iteration even if renormalization pushes a
    surviving dimension back above the threshold. Zeroed dimensions are
    exactly 0.0 in the output.
    """
    unit = l2_normalize(v, policy.epsilon_norm)
    vals = np.array(unit.values)  # writable copy
    mask = np.abs(vals) > policy.threshold
    if not mask.any():
        return unit  # nothing suppressed: bit-identical to plain normalization
    vals[mask] = 0.0
    norm = float(np.linalg.norm(vals))
    if norm < policy.epsilon_norm:
        raise DegenerateEmbedding("all mass was suppressed; nothing left to renormalize")
    out = vals / norm
    out[mask] = 0.0  # keep suppressed coordinates exactly zero after the divide
    return EmbeddingVector(values=out, dim=v.dim, normalized=True)


@dataclass(frozen=True)
class DimensionStats:
    """Per-dimension min/max/mean and histograms over one embedding corpus.

    All histograms share global equal-width bin edges so per-dimension counts
    can be compared and summed into a corpus-wide histogram.
    """

    kind: str
    count: int
    mins: np.ndarray
    maxs: np.ndarray
    means: np.ndarray
    bin_edges: np.ndarray
    counts: np.ndarray  # shape (dim, bins)

    @property
    def dim(self) -> int:
        return int(self.mins.shape[0])


def dimension_stats(
    corpus: Sequence[EmbeddingVector], kind: str, bins: int = 100
) -> DimensionStats:
    """Exact per-dimension min/max/mean plus histograms over [global min, global max]."""
    if len(corpus) == 0:
        raise EmptyCorpus("cannot compute stats over an empty corpus")
    if bins < 1:
        raise ValidationError(f"bins must be >= 1, got {bins}")
    dims = {v.dim for v in corpus}
    if len(dims) != 1:
        raise MixedDimensions(f"corpus mixes dimensions {sorted(dims)}")
    mat = np.stack([v.values for v in corpus])  # (count, dim)
    gmin, gmax = float(mat.min()), float(mat.max())
    if gmin == gmax:
        # Degenerate range: widen so the histogram is well defined.
        gmin, gmax = gmin - 0.5, gmax + 0.5
    edges = np.linspace(gmin, gmax, bins + 1)
    counts = np.stack(
        [np.histogram(mat[:, d], bins=edges)[0] for d in range(mat.shape[1])]
    )
    # exact per-dimension sums keep the means bitwise order-independent
    means = np.array([math.fsum(mat[:, d]) for d in range(mat.shape[1])]) / mat.shape[0]
    return DimensionStats(
        kind=kind,
        count=mat.shape[0],
        mins=mat.min(axis=0),
        maxs=mat.max(axis=0),
        means=means,
        bin_edges=edges,
        counts=counts,
    )


def dominant_dims(stats: DimensionStats, threshold: float) -> list[int]:
    """Dimensions whose max magnitude over the corpus exceeds threshold.

    Sorted descending by that max magnitude, so the worst offender comes first.
    """
    peak = np.maximum(np.abs(stats.mins), np.abs(stats.maxs))
    hits = [d for d in range(stats.dim) if peak[d] > threshold]
    return sorted(hits, key=lambda d: (-peak[d], d))


def max_magnitude_frame(corpus: Sequence[FrameRecord], dim: int) -> int:
    """Frame whose |embedding[dim]| is maximal; ties go to the lowest frame_id."""
    if len(corpus) == 0:
        raise EmptyCorpus("no frames")
    best_id, best_mag = None, -1.0
    for f in sorted(corpus, key=lambda r: r.frame_id):
        if f.embedding is None:
            raise ValidationError(f"frame {f.frame_id} has no embedding")
        mag = abs(float(f.embedding.values[dim]))
        if mag > best_mag:
            best_id, best_mag = f.frame_id, mag
    assert best_id is not None
    return best_id

"""Inference-level video-summarization baseline.

Pipeline: Gram matrix over frame features -> change-point segmentation by
exact dynamic programming (minimum within-segment scatter) -> per-frame
scores from attention-row entropy (uniqueness) and cross-block cosine
similarity (diversity) -> per-segment mean scores -> either a 0/1 knapsack
under a 15% frame budget or the top-k segments' center frames.

The learned parts of the original summarizer (trained projections, score
head) are out of scope; everything here is deterministic and training-free.
The default attention matrix, when none is supplied, is a row softmax of
feature dot products and is a stand-in, not a re-creation of any trained
attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import EmbeddingVector
from .errors import (
    CoverageGap,
    InvalidK,
    InvalidSegmentCount,
    LengthMismatch,
    MixedDimensions,
    SingleBlock,
    ValidationError,
)


@dataclass(frozen=True)
class Segment:
    """Half-open frame range [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValidationError(f"need 0 <= start < end, got [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    @property
    def center(self) -> int:
        """Lower-median frame index of the segment."""
        return self.start + (len(self) - 1) // 2


def check_segmentation(segments: Sequence[Segment], n: int) -> None:
    """Segments must be disjoint, ordered, and cover [0, n) exactly."""
    pos = 0
    for s in segments:
        if s.start != pos:
            raise CoverageGap(f"expected segment starting at {pos}, got [{s.start},{s.end})")
        pos = s.end
    if pos != n:
        raise CoverageGap(f"segments cover [0,{pos}) but corpus has {n} frames")


@dataclass(frozen=True)
class AttentionMatrix:
    """Row-stochastic attention with the block size used for diversity."""

    a: np.ndarray
    block_size: int

    def __post_init__(self):
        mat = np.asarray(self.a, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise ValidationError(f"attention must be square and non-empty, got {mat.shape}")
        n = mat.shape[0]
        if np.any(mat < 0):
            raise ValidationError("attention entries must be >= 0")
        row_sums = mat.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-9):
            raise ValidationError("attention rows must sum to 1 within 1e-9")
        if not (1 <= self.block_size <= n):
            raise ValidationError(f"block_size must be in [1, {n}], got {self.block_size}")
        mat.flags.writeable = False
        object.__setattr__(self, "a", mat)

    @property
    def n(self) -> int:
        return int(self.a.shape[0])


@dataclass(frozen=True)
class ScoreWeights:
    """Relative weight of uniqueness vs (1 - diversity) in the frame score."""

    w_u: float = 0.5
    w_d: float = 0.5

    def __post_init__(self):
        if self.w_u < 0 or self.w_d < 0:
            raise ValidationError("weights must be >= 0")
        if self.w_u + self.w_d <= 0:
            raise ValidationError("weights must not both be zero")


def _feature_matrix(features: Sequence[EmbeddingVector]) -> np.ndarray:
    if len(features) == 0:
        raise ValidationError("need at least one feature vector")
    dims = {v.dim for v in features}
    if len(dims) != 1:
        raise MixedDimensions(f"features mix dimensions {sorted(dims)}")
    return np.stack([v.values for v in features])


def kernel_matrix(features: Sequence[EmbeddingVector]) -> np.ndarray:
    """Gram matrix K[i][j] = dot(x_i, x_j)."""
    x = _feature_matrix(features)
    return x @ x.T


def _segment_scatters(K: np.ndarray) -> np.ndarray:
    """scatter[a, b] = within-segment scatter of [a, b) for all 0 <= a < b <= n.

    scatter([a,b)) = sum_i K[i][i] - (1/(b-a)) * sum_{i,j} K[i][j], both sums
    over the segment. Cumulative sums give every segment in O(n^2).
    """
    n = K.shape[0]
    diag_cum = np.concatenate([[0.0], np.cumsum(np.diag(K))])
    block = np.zeros((n + 1, n + 1))
    block[1:, 1:] = np.cumsum(np.cumsum(K, axis=0), axis=1)

    scatter = np.full((n + 1, n + 1), np.nan)
    for a in range(n):
        b = np.arange(a + 1, n + 1)
        lengths = (b - a).astype(np.float64)
        box = block[b, b] - block[a, b] - block[b, a] + block[a, a]
        scatter[a, a + 1:] = (diag_cum[b] - diag_cum[a]) - box / lengths
    return scatter


def kts_segment(features: Sequence[EmbeddingVector], m: int) -> list[Segment]:
    """Split n frames into m+1 segments minimizing total within-segment scatter.

    Exact DP over cut positions; among equal-cost solutions the
    lexicographically smallest change-point sequence wins.
    """
    x = _feature_matrix(features)
    n = x.shape[0]
    if not (0 <= m <= n - 1):
        raise InvalidSegmentCount(f"need 0 <= m <= n-1, got m={m} for n={n}")
    if m == 0:
        return [Segment(0, n)]

    K = x @ x.T
    scatter = _segment_scatters(K)

    # G[j][s] = minimal cost of partitioning [s, n) into j segments,
    # accumulated right-to-left: cost = scatter(s, c) + G[j-1][c].
    G = np.full((m + 2, n + 1), np.inf)
    G[1, :n] = scatter[:n, n]
    for j in range(2, m + 2):
        # segment [s, c): s <= n-j, c in [s+1, n-(j-1)]
        for s in range(n - j + 1):
            c_lo, c_hi = s + 1, n - (j - 1)
            cand = scatter[s, c_lo : c_hi + 1] + G[j - 1, c_lo : c_hi + 1]
            G[j, s] = np.min(cand)

    # Leftmost-greedy extraction: the smallest feasible cut at each step
    # yields the lexicographically smallest optimal change-point sequence.
    cuts = []
    s = 0
    for i in range(1, m + 1):
        remaining = m + 1 - i  # segments still needed after this cut
        target = G[remaining + 1, s]
        for c in range(s + 1, n - remaining + 1):
            if scatter[s, c] + G[remaining, c] == target:
                cuts.append(c)
                s = c
                break
        else:  # pragma: no cover - DP and extraction always agree
            raise AssertionError("no cut reproduces the DP optimum")

    bounds = [0] + cuts + [n]
    return [Segment(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def uniqueness(a: AttentionMatrix) -> np.ndarray:
    """Normalized entropy of each attention row, in [0, 1] (0 log 0 := 0)."""
    n = a.n
    mat = a.a
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mat > 0, mat * np.log(mat), 0.0)
    raw = -terms.sum(axis=1)
    if n == 1:
        return np.zeros(1)
    u = raw / math.log(n)
    return np.clip(u, 0.0, 1.0)


def _block_index(t: int, block_size: int) -> int:
    return t // block_size


def block_diversity(features: Sequence[EmbeddingVector], block_size: int) -> np.ndarray:
    """d_t = mean cosine similarity of frame t to all frames outside its block.

    Blocks are consecutive runs [0,M), [M,2M), ...; the last block may be
    short. Features must be unit vectors so dot products are cosines.
    """
    for v in features:
        if not v.normalized:
            raise ValidationError("block diversity needs unit-norm features")
    x = _feature_matrix(features)
    n = x.shape[0]
    if block_size < 1:
        raise ValidationError(f"block_size must be >= 1, got {block_size}")
    if block_size >= n:
        raise SingleBlock(f"block_size {block_size} leaves no frames outside the block (n={n})")
    sims = x @ x.T
    d = np.empty(n)
    for t in range(n):
        b = _block_index(t, block_size)
        lo, hi = b * block_size, min((b + 1) * block_size, n)
        outside = np.concatenate([sims[t, :lo], sims[t, hi:]])
        d[t] = outside.mean()
    return d


def frame_scores(
    u: np.ndarray, d: np.ndarray, w: ScoreWeights = ScoreWeights()
) -> np.ndarray:
    """s_t = (w_u * u_t + w_d * clamp(1 - d_t, 0, 1)) / (w_u + w_d)."""
    u = np.asarray(u, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if u.shape != d.shape:
        raise LengthMismatch(f"uniqueness has shape {u.shape}, diversity {d.shape}")
    inv = np.clip(1.0 - d, 0.0, 1.0)
    return (w.w_u * u + w.w_d * inv) / (w.w_u + w.w_d)


def segment_scores(s: np.ndarray, segments: Sequence[Segment]) -> np.ndarray:
    """Mean frame score within each segment."""
    s = np.asarray(s, dtype=np.float64)
    check_segmentation(segments, len(s))
    return np.array([s[seg.start : seg.end].mean() for seg in segments])


def knapsack_select(
    values: Sequence[float], weights: Sequence[int], budget: int
) -> set[int]:
    """Exact 0/1 knapsack: maximize total value with total weight <= budget.

    Ties break to the fewest total frames, then to the lexicographically
    smallest index set.
    """
    if len(values) != len(weights):
        raise LengthMismatch(f"{len(values)} values vs {len(weights)} weights")
    for w in weights:
        if int(w) != w or w <= 0:
            raise ValidationError(f"weights must be positive integers, got {w}")
    if budget < 0:
        raise ValidationError(f"budget must be >= 0, got {budget}")

    # best[w] = (value, weight_used, chosen) for capacity w, compared by
    # value desc, weight asc, index tuple lex asc.
    def better(a, b):
        av, aw, at = a
        bv, bw, bt = b
        if av != bv:
            return av > bv
        if aw != bw:
            return aw < bw
        return at < bt

    best: list[tuple[float, int, tuple[int, ...]]] = [
        (0.0, 0, ()) for _ in range(budget + 1)
    ]
    for i, (v, w) in enumerate(zip(values, weights)):
        w = int(w)
        nxt = list(best)
        for cap in range(w, budget + 1):
            base = best[cap - w]
            cand = (base[0] + v, base[1] + w, base[2] + (i,))
            if better(cand, nxt[cap]):
                nxt[cap] = cand
        best = nxt
    return set(best[budget][2])


def default_attention(features: Sequence[EmbeddingVector], block_size: int,
                      temperature: float = 1.0) -> AttentionMatrix:
    """Training-free stand-in attention: row softmax of feature dot products."""
    x = _feature_matrix(features)
    logits = (x @ x.T) / temperature
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    a = e / e.sum(axis=1, keepdims=True)
    return AttentionMatrix(a=a, block_size=block_size)


def default_segment_count(n: int, fps: float, target_seconds: float = 2.0) -> int:
    """Number of cuts m such that mean segment length is about target_seconds."""
    if fps <= 0:
        raise ValidationError(f"fps must be > 0, got {fps}")
    segments = max(1, round(n / (target_seconds * fps)))
    return min(max(segments - 1, 0), n - 1)


def summarize(
    features: Sequence[EmbeddingVector],
    attention: Optional[AttentionMatrix] = None,
    mode: str = "top_k_centers",
    k: int = 9,
    block_size: int = 8,
    weights: ScoreWeights = ScoreWeights(),
    num_cuts: Optional[int] = None,
    fps: float = 1.0,
) -> list[int]:
    """Run the full baseline and return selected frame indices, ascending.

    mode "budget_15pct" returns every frame of the knapsack-chosen segments
    under a floor(0.15 * n) frame budget; mode "top_k_centers" returns the
    center frame of each of the k best-scoring segments.
    """
    x = _feature_matrix(features)
    n = x.shape[0]
    m = default_segment_count(n, fps) if num_cuts is None else num_cuts
    segments = kts_segment(features, m)

    if attention is None:
        attention = default_attention(features, block_size=block_size)
    elif attention.n != n:
        raise LengthMismatch(f"attention is {attention.n}x{attention.n} but n={n}")

    u = uniqueness(attention)
    d = block_diversity(features, attention.block_size)
    s = frame_scores(u, d, weights)
    seg_scores = segment_scores(s, segments)

    if mode == "budget_15pct":
        budget = math.floor(0.15 * n)
        chosen = knapsack_select(
            seg_scores.tolist(), [len(seg) for seg in segments], budget
        )
        frames: list[int] = []
        for idx in sorted(chosen):
            frames.extend(range(segments[idx].start, segments[idx].end))
        return frames
    if mode == "top_k_centers":
        if k > len(segments):
            raise InvalidK(f"k={k} exceeds segment count {len(segments)}")
        order = sorted(range(len(segments)), key=lambda i: (-seg_scores[i], i))
        picked = order[:k]
        return sorted(segments[i].center for i in picked)
    raise ValidationError(f"unknown mode {mode!r}")

"""Study bookkeeping: pairwise A/B comparison sheets, vote tallies, score stats.

Raters see two collages side by side without knowing which method produced
which; the (event, side) -> method key is kept in a separate file. Votes
arrive as a CSV of rater_id,event,choice rows.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import (
    DuplicateVote,
    MethodCountInvalid,
    OutOfRangeScore,
    UnknownEvent,
    ValidationError,
)


@dataclass(frozen=True)
class ComparisonSheet:
    """What a rater sees for one event; method identities live in the key."""

    event: str
    left_collage: str
    right_collage: str
    seed: int


@dataclass(frozen=True)
class SheetKey:
    """Hidden side assignment for one event."""

    event: str
    left_method: str
    right_method: str


@dataclass(frozen=True)
class VoteRecord:
    rater_id: str
    event: str
    choice: str  # "left" | "right"

    def __post_init__(self):
        if self.choice not in ("left", "right"):
            raise ValidationError(f"choice must be left/right, got {self.choice!r}")


def make_sheets(
    collages: Mapping[str, Mapping[str, str]], seed: int
) -> tuple[list[ComparisonSheet], list[SheetKey]]:
    """Build one sheet per event with seeded side randomization.

    collages maps event -> {method: collage path}; each event needs exactly
    two methods. Deterministic for a fixed seed.
    """
    rng = random.Random(seed)
    sheets, keys = [], []
    for event in sorted(collages):
        methods = sorted(collages[event])
        if len(methods) != 2:
            raise MethodCountInvalid(
                f"event {event!r} has {len(methods)} methods, need exactly 2"
            )
        if rng.random() < 0.5:
            methods = [methods[1], methods[0]]
        left, right = methods
        sheets.append(
            ComparisonSheet(
                event=event,
                left_collage=collages[event][left],
                right_collage=collages[event][right],
                seed=seed,
            )
        )
        keys.append(SheetKey(event=event, left_method=left, right_method=right))
    return sheets, keys


def tally(
    votes: Iterable[VoteRecord], keys: Sequence[SheetKey]
) -> dict:
    """Wins per method per event plus the aggregate across events.

    An event where both methods hold equal counts is a tie.
    """
    by_event = {k.event: k for k in keys}
    methods = sorted({k.left_method for k in keys} | {k.right_method for k in keys})
    wins: dict[str, dict[str, int]] = {
        e: {m: 0 for m in methods} for e in by_event
    }
    seen: set[tuple[str, str]] = set()
    for vote in votes:
        if vote.event not in by_event:
            raise UnknownEvent(f"vote references unknown event {vote.event!r}")
        pair = (vote.rater_id, vote.event)
        if pair in seen:
            raise DuplicateVote(f"rater {vote.rater_id!r} voted twice on {vote.event!r}")
        seen.add(pair)
        key = by_event[vote.event]
        method = key.left_method if vote.choice == "left" else key.right_method
        wins[vote.event][method] += 1
    aggregate = {m: sum(wins[e][m] for e in wins) for m in methods}
    events = {
        e: {
            "wins": wins[e],
            "tie": len(set(wins[e].values())) == 1,
            "votes": sum(wins[e].values()),
        }
        for e in sorted(wins)
    }
    return {"events": events, "aggregate": aggregate}


def score_stats(scores: Mapping[str, tuple[float, float]]) -> dict:
    """Mean and sample standard deviation of rater-vs-LM caption scores.

    scores maps rater -> (score for their own captions, score for the LM's),
    both on a 0-10 scale. Output feeds a bar-with-error-bars plot.
    """
    if not scores:
        raise ValidationError("need at least one rater")
    own = [pair[0] for pair in scores.values()]
    lm = [pair[1] for pair in scores.values()]
    for value in own + lm:
        if not (0.0 <= value <= 10.0):
            raise OutOfRangeScore(f"score {value} outside [0, 10]")
    return {
        "human": {"mean": _mean(own), "std": _sample_std(own), "n": len(own)},
        "lm": {"mean": _mean(lm), "std": _sample_std(lm), "n": len(lm)},
    }


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs)


def _sample_std(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        return 0.0
    mu = _mean(xs)
    return math.sqrt(sum((x - mu) ** 2 for x in xs) / (len(xs) - 1))

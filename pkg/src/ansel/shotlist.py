"""Shot-list generation: prompt construction, response parsing, rejection filter.

The prompt template is fixed here, in one place, so runs are reproducible.
It always names the exact number of ideas wanted, uses the phrase "photos of
the event" (plain "photos" makes models wander into styles instead of
subjects), and tells the model to describe content rather than composition.
Composition terms in the reply reject the whole set and another sample is
drawn, up to a retry cap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .core import LmParams, PhotoIdea, Provenance, ShotList
from .errors import (
    CountMismatch,
    MalformedLine,
    RetriesExhausted,
    ValidationError,
)

DEFAULT_REJECTED_TERMS = ("close-up", "closeup", "close up", "wide shot")

# One enumerated request. {n} and {event} vary; everything else is fixed.
_REQUEST_TEMPLATE = (
    "Suggest a list of {n} photos of the event that a photographer "
    "should capture at {event}. Describe the content of each photo, "
    "not its composition or framing. Answer as a numbered list with "
    "exactly {n} items.\n"
)


@dataclass(frozen=True)
class Priming:
    """Optional worked example prepended to the real request."""

    example_event_name: str
    example_ideas: tuple[str, ...]

    def __post_init__(self):
        if not self.example_event_name.strip():
            raise ValidationError("example event name must be non-empty")
        if len(self.example_ideas) == 0:
            raise ValidationError("priming needs at least one example idea")
        object.__setattr__(self, "example_ideas", tuple(self.example_ideas))


@dataclass(frozen=True)
class PromptSpec:
    event_name: str
    n: int = 9
    priming: Optional[Priming] = None

    def __post_init__(self):
        if not self.event_name.strip():
            raise ValidationError("event name must be non-empty")
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class RejectionPolicy:
    """Composition terms that reject an entire phrase set, plus the retry cap."""

    terms: tuple[str, ...] = DEFAULT_REJECTED_TERMS
    max_retries: int = 5

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ValidationError("rejection policy needs at least one term")
        object.__setattr__(self, "terms", tuple(t.lower() for t in self.terms))
        if self.max_retries < 1:
            raise ValidationError(f"max_retries must be >= 1, got {self.max_retries}")


def render_enumerated(ideas: Sequence[str]) -> str:
    """Render ideas in the same enumerated format the model is asked for."""
    return "\n".join(f"{i}. {text}" for i, text in enumerate(ideas, start=1))


def build_prompt(spec: PromptSpec) -> str:
    """Deterministic prompt text for a spec; equal specs give identical bytes."""
    request = _REQUEST_TEMPLATE.format(n=spec.n, event=spec.event_name)
    if spec.priming is None:
        return request
    example_request = _REQUEST_TEMPLATE.format(
        n=len(spec.priming.example_ideas), event=spec.priming.example_event_name
    )
    example_answer = render_enumerated(spec.priming.example_ideas)
    return f"{example_request}{example_answer}\n\n{request}"


_ITEM_RE = re.compile(r"^(\d+)[.)]\s*(.*\S)\s*$")


def parse_shotlist(completion: str, n: int) -> list[PhotoIdea]:
    """Parse "<k>. <phrase>" / "<k>) <phrase>" lines into ideas ordered 1..n.

    Blank lines are skipped, and a single non-enumerated preamble line before
    item 1 is tolerated (models like to say "Here are ..."). Anything else
    that is not an enumerated item is malformed.
    """
    ideas: list[PhotoIdea] = []
    expected = 1
    preamble_budget = 1
    for raw in completion.splitlines():
        line = raw.strip()
        if not line:
            continue
        match = _ITEM_RE.match(line)
        if match is None:
            if expected == 1 and not ideas and preamble_budget > 0:
                preamble_budget -= 1
                continue
            raise MalformedLine(f"not an enumerated item: {line!r}")
        ordinal = int(match.group(1))
        if ordinal != expected:
            raise MalformedLine(f"expected item {expected}, got {ordinal}")
        ideas.append(PhotoIdea(index=ordinal, text=match.group(2)))
        expected += 1
    if len(ideas) != n:
        raise CountMismatch(f"asked for {n} ideas, parsed {len(ideas)}")
    return ideas


def find_rejected_terms(
    ideas: Sequence[PhotoIdea], policy: RejectionPolicy
) -> list[tuple[int, str]]:
    """Every (idea index, term) hit under case-insensitive substring match."""
    if len(ideas) == 0:
        raise ValidationError("cannot screen an empty idea list")
    hits = []
    for idea in ideas:
        lowered = idea.text.lower()
        for term in policy.terms:
            if term in lowered:
                hits.append((idea.index, term))
    return hits


LmCall = Callable[[str, LmParams], str]


def generate_shotlist(
    spec: PromptSpec,
    policy: RejectionPolicy,
    lm: LmCall,
    params: LmParams = LmParams(),
) -> ShotList:
    """Sample the LM until a clean set arrives, at most max_retries times.

    A failed parse and a rejected set both count as a failed attempt; the
    error raised after the last attempt carries the last failure reason.
    """
    prompt = build_prompt(spec)
    last_reason = "no attempts made"
    for attempt in range(1, policy.max_retries + 1):
        completion = lm(prompt, params)
        try:
            ideas = parse_shotlist(completion, spec.n)
        except (CountMismatch, MalformedLine) as exc:
            last_reason = f"unparseable reply: {exc}"
            continue
        hits = find_rejected_terms(ideas, policy)
        if hits:
            described = ", ".join(f"idea {i}: {t!r}" for i, t in hits)
            last_reason = f"rejected terms present ({described})"
            continue
        return ShotList(
            event_name=spec.event_name,
            ideas=tuple(ideas),
            provenance=Provenance(
                prompt_text=prompt, lm_params=params, attempt_count=attempt
            ),
        )
    raise RetriesExhausted(policy.max_retries, last_reason)

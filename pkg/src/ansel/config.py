"""Declarative configuration for the CLI.

One YAML file covers providers, hygiene, selection, collage, and baseline
parameters; every field has a default so an empty file (or none at all) is
valid. Secrets never appear here: the LM bearer token comes only from the
ANSEL_LM_TOKEN environment variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .baseline import ScoreWeights
from .core import LmParams
from .errors import ValidationError
from .hygiene import HygienePolicy
from .media import CollageSpec
from .providers import LM_TOKEN_ENV, MockLm, ProviderEndpoint
from .providers import detect_faces as http_detect_faces
from .providers import embed_image as http_embed_image
from .providers import embed_text as http_embed_text
from .providers import lm_complete as http_lm_complete
from .providers import mock_detect_faces, mock_embedding
from .shotlist import RejectionPolicy


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"  # "mock" | "http"
    base_url: str = ""
    timeout_s: float = 30.0
    model_id: str = ""
    dim: int = 64  # embedding width served by this provider
    auth: bool = False  # http LM endpoints that require the bearer token

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ValidationError(f"provider kind must be mock/http, got {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ValidationError("http providers need a base_url")

    def endpoint(self) -> ProviderEndpoint:
        return ProviderEndpoint(
            base_url=self.base_url,
            timeout_s=self.timeout_s,
            auth_env=LM_TOKEN_ENV if self.auth else None,
            model_id=self.model_id,
            dim=self.dim,
        )


@dataclass(frozen=True)
class Config:
    lm: ProviderConfig = field(default_factory=ProviderConfig)
    text_embed: ProviderConfig = field(default_factory=ProviderConfig)
    image_embed: ProviderConfig = field(default_factory=ProviderConfig)
    faces: ProviderConfig = field(default_factory=ProviderConfig)
    lm_params: LmParams = field(default_factory=LmParams)
    hygiene: HygienePolicy = field(default_factory=HygienePolicy)
    rejection: RejectionPolicy = field(default_factory=RejectionPolicy)
    collage: CollageSpec = field(default_factory=CollageSpec)
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    portfolio_size: int = 9
    selection_mode: str = "dup"
    baseline_mode: str = "top_k_centers"
    baseline_k: int = 9
    block_size: int = 8
    num_cuts: Optional[int] = None


def _provider(doc: dict, name: str) -> ProviderConfig:
    sub = doc.get(name, {}) or {}
    return ProviderConfig(
        kind=sub.get("kind", "mock"),
        base_url=sub.get("base_url", ""),
        timeout_s=float(sub.get("timeout_s", 30.0)),
        model_id=sub.get("model_id", ""),
        dim=int(sub.get("dim", 64)),
        auth=bool(sub.get("auth", False)),
    )


def load_config(path: Optional[str | Path]) -> Config:
    """Load YAML config; missing file or empty sections fall back to defaults."""
    doc: dict = {}
    if path is not None:
        text = Path(path).read_text("utf-8")
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValidationError(f"config root must be a mapping, got {type(loaded).__name__}")
        doc = loaded

    providers = doc.get("providers", {}) or {}
    lm_params_doc = doc.get("lm_params", {}) or {}
    hygiene_doc = doc.get("hygiene", {}) or {}
    rejection_doc = doc.get("rejection", {}) or {}
    collage_doc = doc.get("collage", {}) or {}
    baseline_doc = doc.get("baseline", {}) or {}
    selection_doc = doc.get("selection", {}) or {}

    lm_cfg = _provider(providers, "lm")
    return Config(
        lm=lm_cfg,
        text_embed=_provider(providers, "text_embed"),
        image_embed=_provider(providers, "image_embed"),
        faces=_provider(providers, "faces"),
        lm_params=LmParams(
            model_id=lm_params_doc.get("model_id", lm_cfg.model_id or "text-davinci-002"),
            temperature=float(lm_params_doc.get("temperature", 0.7)),
            max_tokens=int(lm_params_doc.get("max_tokens", 2000)),
            top_p=float(lm_params_doc.get("top_p", 1.0)),
            frequency_penalty=float(lm_params_doc.get("frequency_penalty", 0.0)),
            presence_penalty=float(lm_params_doc.get("presence_penalty", 0.0)),
        ),
        hygiene=HygienePolicy(
            threshold=float(hygiene_doc.get("threshold", 0.3)),
            epsilon_norm=float(hygiene_doc.get("epsilon_norm", 1e-8)),
        ),
        rejection=RejectionPolicy(
            terms=tuple(rejection_doc.get("terms", RejectionPolicy().terms)),
            max_retries=int(rejection_doc.get("max_retries", 5)),
        ),
        collage=CollageSpec(
            rows=int(collage_doc.get("rows", 3)),
            cols=int(collage_doc.get("cols", 3)),
            cell_width=int(collage_doc.get("cell_width", 336)),
            cell_height=int(collage_doc.get("cell_height", 336)),
            background=tuple(collage_doc.get("background", (0, 0, 0))),
        ),
        weights=ScoreWeights(
            w_u=float(baseline_doc.get("w_u", 0.5)),
            w_d=float(baseline_doc.get("w_d", 0.5)),
        ),
        portfolio_size=int(selection_doc.get("n", 9)),
        selection_mode=selection_doc.get("mode", "dup"),
        baseline_mode=baseline_doc.get("mode", "top_k_centers"),
        baseline_k=int(baseline_doc.get("k", 9)),
        block_size=int(baseline_doc.get("block_size", 8)),
        num_cuts=baseline_doc.get("num_cuts"),
    )


class Providers:
    """Callable provider surface the CLI uses, mock- or HTTP-backed per config."""

    def __init__(self, cfg: Config):
        self.cfg = cfg
        self._mock_lm = MockLm()

    def lm(self, prompt: str, params: LmParams) -> str:
        if self.cfg.lm.kind == "mock":
            return self._mock_lm(prompt, params)
        return http_lm_complete(self.cfg.lm.endpoint(), prompt, params)

    def embed_text(self, texts: list[str]):
        if self.cfg.text_embed.kind == "mock":
            return [mock_embedding(t, self.cfg.text_embed.dim, "text") for t in texts]
        return http_embed_text(self.cfg.text_embed.endpoint(), texts)

    def embed_image(self, images: list[bytes]):
        if self.cfg.image_embed.kind == "mock":
            return [mock_embedding(b, self.cfg.image_embed.dim, "image") for b in images]
        return http_embed_image(self.cfg.image_embed.endpoint(), images)

    def detect_faces(self, image: bytes):
        if self.cfg.faces.kind == "mock":
            return mock_detect_faces(image)
        return http_detect_faces(self.cfg.faces.endpoint(), image)

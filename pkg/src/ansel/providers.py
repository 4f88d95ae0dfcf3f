"""Provider contracts: LM completion, text/image embedding, face detection.

Three layers live here: deterministic mock providers good enough to run the
whole pipeline offline, an HTTP client for the real provider protocol, and
the binary embeddings file the pipeline stages hand to each other.

Wire protocol (JSON over HTTP, field names are load-bearing):
    POST /v1/complete    {"prompt": str, "params": {...}}   -> {"text": str}
    POST /v1/embed/text  {"texts": [str]}                   -> {"dim": int, "vectors": [[...]]}
    POST /v1/embed/image {"images_b64": [str]}              -> {"dim": int, "vectors": [[...]]}
    POST /v1/faces       {"image_b64": str}                 -> {"boxes": [{x,y,w,h,confidence}]}

The LM bearer token is only ever read from the ANSEL_LM_TOKEN environment
variable, never from config files.
"""

from __future__ import annotations

import base64
import io
import json
import math
import os
import re
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests
from PIL import Image, UnidentifiedImageError

from .core import EmbeddingVector, FaceBox, LmParams
from .errors import (
    AuthMissing,
    BadMagic,
    BudgetExceeded,
    EmbeddingDimMismatch,
    LmUnavailable,
    MixedDimensions,
    PayloadTooLarge,
    ProviderUnavailable,
    TruncatedPayload,
    UndecodableImage,
    ValidationError,
    VersionUnsupported,
)

LM_TOKEN_ENV = "ANSEL_LM_TOKEN"
MAX_RETRIES = 2  # retries on transient failures, after the first attempt


# ---------------------------------------------------------------------------
# Deterministic mock embeddings (portable PRNG, no platform dependence)
# ---------------------------------------------------------------------------

_U64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & _U64
    return h


def _splitmix64(x: int):
    while True:
        x = (x + 0x9E3779B97F4A7C15) & _U64
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
        yield (z ^ (z >> 31)) & _U64


class Xoshiro256StarStar:
    """xoshiro256** with splitmix64 seeding; bit-identical on every platform."""

    def __init__(self, seed: int):
        sm = _splitmix64(seed & _U64)
        self._s = [next(sm) for _ in range(4)]

    @staticmethod
    def _rotl(x: int, k: int) -> int:
        return ((x << k) | (x >> (64 - k))) & _U64

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (self._rotl((s1 * 5) & _U64, 7) * 9) & _U64
        t = (s1 << 17) & _U64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = self._rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * (2.0 ** -53)

    def normals(self, count: int) -> list[float]:
        """Standard normals via Box-Muller."""
        out: list[float] = []
        while len(out) < count:
            u1 = self.uniform()
            u2 = self.uniform()
            r = math.sqrt(-2.0 * math.log(u1))
            out.append(r * math.cos(2.0 * math.pi * u2))
            out.append(r * math.sin(2.0 * math.pi * u2))
        return out[:count]


def mock_embedding(content: bytes | str, dim: int, kind: str) -> EmbeddingVector:
    """Deterministic unit vector derived from content; same input, same vector."""
    if dim < 2:
        raise ValidationError(f"mock embeddings need dim >= 2, got {dim}")
    payload = content.encode("utf-8") if isinstance(content, str) else content
    seed = fnv1a64(kind.encode("utf-8") + b":" + payload)
    rng = Xoshiro256StarStar(seed)
    vals = np.array(rng.normals(dim))
    return EmbeddingVector(values=vals / np.linalg.norm(vals), dim=dim, normalized=True)


class MockLm:
    """Rule-based LM stand-in: answers our own prompt template deterministically.

    Reads the requested count out of the prompt and emits content-focused
    phrases (never composition terms), so full pipeline runs need no network.
    """

    _COUNT_RE = re.compile(r"a list of (\d+) photos of the event")
    _EVENT_RE = re.compile(r"capture at (.+?)\. Describe")

    _POOL = (
        "A photo of the guests arriving",
        "A photo of people talking together",
        "A photo of the decorations",
        "A photo of the food being served",
        "A photo of people laughing",
        "A photo of the venue",
        "A photo of the host greeting guests",
        "A photo of people raising a toast",
        "A photo of the main activity",
        "A photo of a group posing together",
        "A photo of the table setting",
        "A photo of people saying goodbye",
    )

    def __call__(self, prompt: str, params: LmParams) -> str:
        counts = self._COUNT_RE.findall(prompt)
        events = self._EVENT_RE.findall(prompt)
        if not counts:
            raise LmUnavailable("mock LM cannot answer this prompt shape")
        n = int(counts[-1])  # the last request in the prompt is the real one
        event = events[-1] if events else "the event"
        lines = []
        for i in range(n):
            base = self._POOL[i % len(self._POOL)]
            suffix = f" at {event}" if i == 0 else ""
            repeat = f" ({i // len(self._POOL) + 1})" if i >= len(self._POOL) else ""
            lines.append(f"{i + 1}. {base}{suffix}{repeat}")
        return "\n".join(lines)


class ScriptedLm:
    """LM mock that plays back a fixed transcript; raises when it runs dry."""

    def __init__(self, replies: Sequence[str]):
        self.replies = list(replies)
        self.calls: list[str] = []

    def __call__(self, prompt: str, params: LmParams) -> str:
        self.calls.append(prompt)
        if len(self.calls) > len(self.replies):
            raise LmUnavailable("scripted LM transcript exhausted")
        return self.replies[len(self.calls) - 1]


MARKER_COLOR = (255, 0, 255)  # synthetic fixtures paint faces this color


def mock_detect_faces(
    image_bytes: bytes,
    marker: tuple[int, int, int] = MARKER_COLOR,
    tolerance: int = 30,
) -> list[FaceBox]:
    """Face detector stand-in: the bounding box of marker-colored pixels.

    Deterministic and content-driven, so synthetic corpora exercise the real
    filter/crop pipeline. Returns [] when no marker pixels exist.
    """
    arr = np.asarray(_decode_image(image_bytes).convert("RGB"), dtype=np.int16)
    mask = np.all(np.abs(arr - np.array(marker, dtype=np.int16)) <= tolerance, axis=2)
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return []
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return [FaceBox(x=x0, y=y0, w=x1 - x0 + 1, h=y1 - y0 + 1, confidence=0.99)]


def _decode_image(image_bytes: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(image_bytes))
        img.load()
        return img
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise UndecodableImage(f"cannot decode image: {exc}") from exc


# ---------------------------------------------------------------------------
# Embeddings file (binary, bit-exact round trip)
# ---------------------------------------------------------------------------

MAGIC = b"ANSL"
VERSION = 1
_HEADER = struct.Struct("<4sIB3xIQ8x")  # magic, version, kind, pad, dim, count, reserved
_KIND_CODES = {"text": 0, "image": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def write_embeddings(
    path: str | Path,
    vectors: Sequence[EmbeddingVector],
    kind: str,
    manifest: dict,
    dim: Optional[int] = None,
) -> None:
    """Write vectors as little-endian float32 rows plus a companion JSON manifest.

    The companion file lives at <path>.json. Vectors are stored at float32
    precision; reading back reproduces those 32-bit floats bit-exactly.
    """
    if kind not in _KIND_CODES:
        raise ValidationError(f"kind must be one of {sorted(_KIND_CODES)}, got {kind!r}")
    if vectors:
        dims = {v.dim for v in vectors}
        if len(dims) != 1:
            raise MixedDimensions(f"vectors mix dimensions {sorted(dims)}")
        dim = dims.pop()
        payload = np.stack([v.values for v in vectors]).astype("<f4").tobytes()
    else:
        if dim is None:
            raise ValidationError("dim is required when writing an empty corpus")
        payload = b""
    header = _HEADER.pack(MAGIC, VERSION, _KIND_CODES[kind], dim, len(vectors))
    path = Path(path)
    _atomic_write_bytes(path, header + payload)
    _atomic_write_bytes(
        manifest_path(path),
        json.dumps(
            {"kind": kind, "dim": dim, "count": len(vectors), "manifest": manifest},
            indent=2,
            sort_keys=True,
        ).encode("utf-8"),
    )


def read_embeddings(path: str | Path) -> tuple[list[EmbeddingVector], str, dict]:
    """Read back (vectors, kind, manifest); floats match the file bit-for-bit."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedPayload(f"file is {len(blob)} bytes, header needs {_HEADER.size}")
    magic, version, kind_code, dim, count = _HEADER.unpack(blob[: _HEADER.size])
    if magic != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise VersionUnsupported(f"file version {version}, supported {VERSION}")
    if kind_code not in _KIND_NAMES:
        raise ValidationError(f"unknown kind code {kind_code}")
    expected = count * dim * 4
    payload = blob[_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedPayload(f"payload is {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise ValidationError(f"{len(payload) - expected} trailing bytes after payload")
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim) if count else np.zeros((0, dim))
    vectors = [
        EmbeddingVector(values=rows[i].astype(np.float64), dim=dim) for i in range(count)
    ]
    meta = json.loads(manifest_path(path).read_text("utf-8"))
    return vectors, _KIND_NAMES[kind_code], meta["manifest"]


def manifest_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# HTTP provider client
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProviderEndpoint:
    """Where a provider lives and what model it claims to serve."""

    base_url: str
    timeout_s: float = 30.0
    auth_env: Optional[str] = None
    model_id: str = ""
    dim: int = 0  # expected embedding width; 0 means unknown/don't check
    backoff_s: float = 0.5

    def token(self) -> Optional[str]:
        if self.auth_env is None:
            return None
        token = os.environ.get(self.auth_env)
        if not token:
            raise AuthMissing(f"environment variable {self.auth_env} is not set")
        return token


def _post(
    endpoint: ProviderEndpoint,
    route: str,
    payload: dict,
    unavailable_error: type[Exception],
) -> dict:
    """POST with up to MAX_RETRIES retries on transient failures."""
    headers = {}
    token = endpoint.token()
    if token:
        headers["Authorization"] = f"Bearer {token}"
    url = endpoint.base_url.rstrip("/") + route
    last_exc: Exception | None = None
    for attempt in range(MAX_RETRIES + 1):
        if attempt:
            time.sleep(endpoint.backoff_s * (2 ** (attempt - 1)))
        try:
            resp = requests.post(
                url, json=payload, headers=headers, timeout=endpoint.timeout_s
            )
        except requests.RequestException as exc:
            last_exc = unavailable_error(f"{url}: {exc}")
            continue
        if resp.status_code >= 500:
            last_exc = unavailable_error(f"{url}: server error {resp.status_code}")
            continue
        if resp.status_code in (402, 429):
            raise BudgetExceeded(f"{url}: quota exhausted ({resp.status_code})")
        if resp.status_code == 413:
            raise PayloadTooLarge(f"{url}: batch too large, split and retry")
        if resp.status_code >= 400:
            raise unavailable_error(f"{url}: {resp.status_code} {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise unavailable_error(f"{url}: non-JSON response: {exc}") from exc
    assert last_exc is not None
    raise last_exc


def lm_complete(endpoint: ProviderEndpoint, prompt: str, params: LmParams) -> str:
    """Request a completion; returns the text verbatim."""
    body = _post(
        endpoint,
        "/v1/complete",
        {"prompt": prompt, "params": params.as_dict()},
        LmUnavailable,
    )
    if "text" not in body or not isinstance(body["text"], str):
        raise LmUnavailable("completion response is missing a 'text' field")
    return body["text"]


def _parse_vectors(body: dict, endpoint: ProviderEndpoint, batch: int) -> list[EmbeddingVector]:
    dim = body.get("dim")
    vectors = body.get("vectors")
    if not isinstance(dim, int) or not isinstance(vectors, list):
        raise ProviderUnavailable("embedding response missing 'dim'/'vectors'")
    if endpoint.dim and dim != endpoint.dim:
        raise EmbeddingDimMismatch(
            f"provider returned dim {dim}, endpoint metadata says {endpoint.dim}"
        )
    if len(vectors) != batch:
        raise ProviderUnavailable(f"sent {batch} inputs, got {len(vectors)} vectors")
    out = []
    for row in vectors:
        if len(row) != dim:
            raise EmbeddingDimMismatch(f"vector of length {len(row)} against dim {dim}")
        out.append(EmbeddingVector(values=np.asarray(row, dtype=np.float64), dim=dim))
    return out


def embed_text(endpoint: ProviderEndpoint, texts: Sequence[str]) -> list[EmbeddingVector]:
    """Embed a batch of texts; one raw (unnormalized) vector per input, in order."""
    if len(texts) == 0:
        raise ValidationError("embed_text needs a non-empty batch")
    body = _post(endpoint, "/v1/embed/text", {"texts": list(texts)}, ProviderUnavailable)
    return _parse_vectors(body, endpoint, len(texts))


def embed_image(endpoint: ProviderEndpoint, images: Sequence[bytes]) -> list[EmbeddingVector]:
    """Embed a batch of encoded images; one raw vector per input, in order."""
    if len(images) == 0:
        raise ValidationError("embed_image needs a non-empty batch")
    payload = {"images_b64": [base64.b64encode(b).decode("ascii") for b in images]}
    body = _post(endpoint, "/v1/embed/image", payload, ProviderUnavailable)
    return _parse_vectors(body, endpoint, len(images))


def detect_faces(endpoint: ProviderEndpoint, image: bytes) -> list[FaceBox]:
    """Detect faces in one encoded image; boxes come back clamped to its bounds."""
    img = _decode_image(image)  # validate locally before spending a network call
    width, height = img.size
    payload = {"image_b64": base64.b64encode(image).decode("ascii")}
    body = _post(endpoint, "/v1/faces", payload, ProviderUnavailable)
    boxes = body.get("boxes")
    if not isinstance(boxes, list):
        raise ProviderUnavailable("faces response missing 'boxes'")
    out = []
    for b in boxes:
        box = clamp_box(
            int(b["x"]), int(b["y"]), int(b["w"]), int(b["h"]),
            float(b["confidence"]), width, height,
        )
        if box is not None:
            out.append(box)
    return out


def clamp_box(
    x: int, y: int, w: int, h: int, confidence: float, width: int, height: int
) -> Optional[FaceBox]:
    """Clamp a raw detection to image bounds; None if nothing remains."""
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(width, x + w), min(height, y + h)
    if x1 <= x0 or y1 <= y0:
        return None
    return FaceBox(x=x0, y=y0, w=x1 - x0, h=y1 - y0, confidence=confidence)

"""Frame-corpus ingestion, crop application, and collage assembly.

Frames live on disk as ordinary PNG/JPEG files described by a frames.json
manifest; video decoding is delegated to an external ffmpeg invocation so
the rest of the pipeline can be driven entirely from synthetic image
directories.
"""

from __future__ import annotations

import json
import os
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from PIL import Image

from .core import CropRect
from .errors import (
    CropOutOfBounds,
    ManifestInvalid,
    SourceUnreadable,
    TooManyImages,
    ValidationError,
)

MANIFEST_NAME = "frames.json"


@dataclass(frozen=True)
class ManifestEntry:
    frame_id: int
    timestamp_s: float
    path: str  # relative to the manifest directory


@dataclass(frozen=True)
class FrameManifest:
    """Ordered frame index for one capture; frame ids are dense from 0."""

    entries: tuple[ManifestEntry, ...]
    source: str
    sample_rate_fps: float
    root: Path  # directory the relative paths resolve against

    def __post_init__(self):
        if self.sample_rate_fps <= 0:
            raise ValidationError(f"fps must be > 0, got {self.sample_rate_fps}")
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "root", Path(self.root))

    def image_path(self, frame_id: int) -> Path:
        return self.root / self.entries[frame_id].path

    def __len__(self) -> int:
        return len(self.entries)


def _validate_entries(entries: Sequence[ManifestEntry], root: Path) -> None:
    ids = [e.frame_id for e in entries]
    if ids != list(range(len(entries))):
        raise ManifestInvalid(f"frame ids must be dense from 0, got {ids[:10]}...")
    prev = -1.0
    for e in entries:
        if e.timestamp_s < prev:
            raise ManifestInvalid(f"timestamps decrease at frame {e.frame_id}")
        prev = e.timestamp_s
        full = root / e.path
        if not full.is_file():
            raise ManifestInvalid(f"missing frame image: {full}")


def write_manifest(manifest: FrameManifest) -> Path:
    doc = {
        "source": manifest.source,
        "sample_rate_fps": manifest.sample_rate_fps,
        "entries": [
            {"frame_id": e.frame_id, "timestamp_s": e.timestamp_s, "path": e.path}
            for e in manifest.entries
        ],
    }
    out = manifest.root / MANIFEST_NAME
    tmp = out.with_suffix(".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True), "utf-8")
    os.replace(tmp, out)
    return out


def load_manifest(directory: str | Path) -> FrameManifest:
    """Load and validate frames.json from a frame directory."""
    root = Path(directory)
    doc_path = root / MANIFEST_NAME
    if not doc_path.is_file():
        raise SourceUnreadable(f"no {MANIFEST_NAME} in {root}")
    try:
        doc = json.loads(doc_path.read_text("utf-8"))
        entries = tuple(
            ManifestEntry(
                frame_id=int(e["frame_id"]),
                timestamp_s=float(e["timestamp_s"]),
                path=str(e["path"]),
            )
            for e in doc["entries"]
        )
        manifest = FrameManifest(
            entries=entries,
            source=str(doc["source"]),
            sample_rate_fps=float(doc["sample_rate_fps"]),
            root=root,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestInvalid(f"bad manifest {doc_path}: {exc}") from exc
    _validate_entries(manifest.entries, root)
    return manifest


def extract_video_frames(
    video: str | Path, out_dir: str | Path, fps: float
) -> FrameManifest:
    """Decode a video into PNG frames at the given rate via ffmpeg."""
    video = Path(video)
    out_dir = Path(out_dir)
    if not video.is_file():
        raise SourceUnreadable(f"video not found: {video}")
    out_dir.mkdir(parents=True, exist_ok=True)
    pattern = out_dir / "frame_%06d.png"
    cmd = [
        "ffmpeg", "-hide_banner", "-loglevel", "error", "-y",
        "-i", str(video), "-vf", f"fps={fps}", str(pattern),
    ]
    try:
        subprocess.run(cmd, check=True, capture_output=True)
    except FileNotFoundError as exc:
        raise SourceUnreadable("ffmpeg is not installed; pre-extract frames instead") from exc
    except subprocess.CalledProcessError as exc:
        raise SourceUnreadable(f"ffmpeg failed: {exc.stderr.decode()[:300]}") from exc
    files = sorted(out_dir.glob("frame_*.png"))
    entries = tuple(
        ManifestEntry(frame_id=i, timestamp_s=i / fps, path=f.name)
        for i, f in enumerate(files)
    )
    manifest = FrameManifest(
        entries=entries, source=str(video), sample_rate_fps=fps, root=out_dir
    )
    write_manifest(manifest)
    return manifest


def ingest_frames(
    source: str | Path, fps: float, out_dir: Optional[str | Path] = None
) -> FrameManifest:
    """Load a pre-extracted frame directory, or decode a video file into one."""
    source = Path(source)
    if source.is_dir():
        return load_manifest(source)
    if source.is_file():
        if out_dir is None:
            out_dir = source.parent / (source.stem + "_frames")
        return extract_video_frames(source, out_dir, fps)
    raise SourceUnreadable(f"source does not exist: {source}")


# ---------------------------------------------------------------------------
# Crops and collage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CollageSpec:
    rows: int = 3
    cols: int = 3
    cell_width: int = 336
    cell_height: int = 336
    background: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError("collage grid must be at least 1x1")
        if self.cell_width < 1 or self.cell_height < 1:
            raise ValidationError("collage cells must have positive size")


def apply_crop(
    image: Image.Image,
    crop: CropRect,
    output_size: tuple[int, int],
    background: tuple[int, int, int] = (0, 0, 0),
) -> Image.Image:
    """Cut the crop rect out and letterbox it into output_size."""
    width, height = image.size
    if crop.x1 > width or crop.y1 > height:
        raise CropOutOfBounds(
            f"crop {crop} exceeds image bounds {width}x{height}"
        )
    region = image.convert("RGB").crop((crop.x0, crop.y0, crop.x1, crop.y1))
    return letterbox(region, output_size, background)


def letterbox(
    image: Image.Image,
    output_size: tuple[int, int],
    background: tuple[int, int, int] = (0, 0, 0),
) -> Image.Image:
    """Fit image inside output_size preserving aspect, padding with background."""
    ow, oh = output_size
    if ow < 1 or oh < 1:
        raise ValidationError(f"output size must be positive, got {output_size}")
    iw, ih = image.size
    scale = min(ow / iw, oh / ih)
    nw, nh = max(1, round(iw * scale)), max(1, round(ih * scale))
    resized = image.convert("RGB").resize((nw, nh), Image.LANCZOS)
    canvas = Image.new("RGB", (ow, oh), background)
    canvas.paste(resized, ((ow - nw) // 2, (oh - nh) // 2))
    return canvas


def make_collage(images: Sequence[Image.Image], spec: CollageSpec) -> Image.Image:
    """Place images row-major into the grid; missing cells stay background."""
    capacity = spec.rows * spec.cols
    if len(images) > capacity:
        raise TooManyImages(f"{len(images)} images for a {spec.rows}x{spec.cols} grid")
    canvas = Image.new(
        "RGB", (spec.cols * spec.cell_width, spec.rows * spec.cell_height), spec.background
    )
    for idx, img in enumerate(images):
        cell = letterbox(img, (spec.cell_width, spec.cell_height), spec.background)
        r, c = divmod(idx, spec.cols)
        canvas.paste(cell, (c * spec.cell_width, r * spec.cell_height))
    return canvas

"""Command-line pipeline: plan, ingest, faces, embed, select, baseline, collage.

Stages communicate only through files (shot list JSON, frame manifest,
binary embeddings, portfolio JSON), so every stage is re-runnable and
cacheable, and expensive provider calls happen exactly once. All outputs
are written atomically (temp file + rename).

Exit codes: 2 usage, 3 provider failure, 4 data validation.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import os
import sys
from pathlib import Path

import click
from PIL import Image

from . import baseline as baseline_mod
from . import evaluation, facegeom, hygiene, media, providers, retrieval, shotlist
from .config import Config, Providers, load_config
from .core import CropRect, FaceBox, FrameRecord
from .errors import AnselError, ProviderError, SourceUnreadable, ValidationError

EXIT_PROVIDER = 3
EXIT_VALIDATION = 4


def _fail(code: int, exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ProviderError as exc:
            _fail(EXIT_PROVIDER, exc)
        except AnselError as exc:
            _fail(EXIT_VALIDATION, exc)
        except FileNotFoundError as exc:
            _fail(EXIT_VALIDATION, exc)

    return wrapper


def _write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_json(path: Path, doc) -> None:
    _write_bytes(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _read_json(path: Path, what: str):
    if not path.is_file():
        raise SourceUnreadable(f"missing {what}: {path}")
    return json.loads(path.read_text("utf-8"))


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise SourceUnreadable(f"missing {what}: {path} (run the producing stage first)")
    return path


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML config file; defaults apply when omitted.")
@click.pass_context
def main(ctx, config_path):
    """Semantic event photography pipeline."""
    ctx.obj = load_config(config_path)


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

@main.command()
@click.option("--event", required=True, help="High-level event description.")
@click.option("--n", type=int, default=None, help="Number of photo ideas.")
@click.option("--out", type=click.Path(), default="shotlist.json")
@click.pass_obj
@handle_errors
def plan(cfg: Config, event: str, n: int | None, out: str):
    """Generate the shot list for an event via the LM provider."""
    prov = Providers(cfg)
    spec = shotlist.PromptSpec(event_name=event, n=n or cfg.portfolio_size)
    result = shotlist.generate_shotlist(spec, cfg.rejection, prov.lm, cfg.lm_params)
    _write_json(Path(out), {
        "event_name": result.event_name,
        "ideas": [{"index": i.index, "text": i.text} for i in result.ideas],
        "provenance": {
            "prompt_text": result.provenance.prompt_text,
            "lm_params": result.provenance.lm_params.as_dict(),
            "attempt_count": result.provenance.attempt_count,
        },
    })
    click.echo(f"wrote {out} ({len(result.ideas)} ideas, "
               f"{result.provenance.attempt_count} attempt(s))")


# ---------------------------------------------------------------------------
# ingest / faces
# ---------------------------------------------------------------------------

@main.command()
@click.option("--source", required=True, type=click.Path(),
              help="Frame directory with frames.json, or a video file.")
@click.option("--fps", type=float, default=1.0, show_default=True)
@click.option("--out-dir", type=click.Path(), default=None,
              help="Frame output directory when decoding a video.")
@handle_errors
def ingest(source: str, fps: float, out_dir: str | None):
    """Validate a frame directory or decode a video into one."""
    manifest = media.ingest_frames(source, fps, out_dir)
    click.echo(f"manifest ok: {len(manifest)} frames under {manifest.root}")


@main.command()
@click.option("--frames", "frames_dir", required=True, type=click.Path())
@click.option("--out", type=click.Path(), default="faces.json")
@click.pass_obj
@handle_errors
def faces(cfg: Config, frames_dir: str, out: str):
    """Run face detection over every manifest frame."""
    prov = Providers(cfg)
    manifest = media.load_manifest(frames_dir)
    doc = {}
    for entry in manifest.entries:
        image_bytes = manifest.image_path(entry.frame_id).read_bytes()
        boxes = prov.detect_faces(image_bytes)
        doc[str(entry.frame_id)] = [
            {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "confidence": b.confidence}
            for b in boxes
        ]
    _write_json(Path(out), {"frames": doc})
    with_faces = sum(1 for v in doc.values() if v)
    click.echo(f"wrote {out}: {with_faces}/{len(doc)} frames have faces")


def _load_faces(path: Path) -> dict[int, list[FaceBox]]:
    doc = _read_json(path, "face annotations")
    out: dict[int, list[FaceBox]] = {}
    for fid, boxes in doc["frames"].items():
        out[int(fid)] = [
            FaceBox(x=b["x"], y=b["y"], w=b["w"], h=b["h"], confidence=b["confidence"])
            for b in boxes
        ]
    return out


# ---------------------------------------------------------------------------
# embed
# ---------------------------------------------------------------------------

@main.command()
@click.option("--kind", type=click.Choice(["ideas", "frames"]), required=True)
@click.option("--shotlist", "shotlist_path", type=click.Path(), default="shotlist.json")
@click.option("--frames", "frames_dir", type=click.Path(), default=None)
@click.option("--faces", "faces_path", type=click.Path(), default="faces.json")
@click.option("--all-frames", is_flag=True,
              help="Embed every frame (for the baseline) instead of only face frames.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_obj
@handle_errors
def embed(cfg: Config, kind: str, shotlist_path: str, frames_dir: str | None,
          faces_path: str, all_frames: bool, out: str | None):
    """Embed shot-list ideas or video frames, apply hygiene, write the file."""
    prov = Providers(cfg)
    policy = cfg.hygiene

    if kind == "ideas":
        doc = _read_json(_require(Path(shotlist_path), "shot list"), "shot list")
        texts = [i["text"] for i in doc["ideas"]]
        raw = prov.embed_text(texts)
        vectors = [hygiene.suppress_outlier_dims(v, policy) for v in raw]
        rows = [
            {"row": r, "idea_index": doc["ideas"][r]["index"], "text": texts[r]}
            for r in range(len(texts))
        ]
        out_path = Path(out or "ideas.ansl")
        providers.write_embeddings(out_path, vectors, "text", {
            "rows": rows,
            "event_name": doc["event_name"],
            "hygiene": {"threshold": policy.threshold, "epsilon_norm": policy.epsilon_norm},
            "model_id": cfg.text_embed.model_id,
        })
        click.echo(f"wrote {out_path} ({len(vectors)} idea embeddings)")
        return

    if frames_dir is None:
        raise ValidationError("--frames is required with --kind frames")
    manifest = media.load_manifest(frames_dir)
    if all_frames:
        selected = [e.frame_id for e in manifest.entries]
    else:
        face_map = _load_faces(Path(faces_path))
        records = [
            FrameRecord(
                frame_id=e.frame_id, timestamp_s=e.timestamp_s, image_ref=e.path,
                faces=tuple(face_map.get(e.frame_id, [])),
            )
            for e in manifest.entries
        ]
        selected = [f.frame_id for f in retrieval.candidate_pool(records)]
    images = [manifest.image_path(fid).read_bytes() for fid in selected]
    raw = prov.embed_image(images)
    vectors = [hygiene.suppress_outlier_dims(v, policy) for v in raw]
    rows = [
        {"row": r, "frame_id": fid,
         "timestamp_s": manifest.entries[fid].timestamp_s}
        for r, fid in enumerate(selected)
    ]
    out_path = Path(out or ("frames_all.ansl" if all_frames else "frames.ansl"))
    providers.write_embeddings(out_path, vectors, "image", {
        "rows": rows,
        "pool": "all" if all_frames else "faces",
        "source_frames": str(frames_dir),
        "hygiene": {"threshold": policy.threshold, "epsilon_norm": policy.epsilon_norm},
        "model_id": cfg.image_embed.model_id,
    })
    click.echo(f"wrote {out_path} ({len(vectors)} frame embeddings, "
               f"pool={'all' if all_frames else 'faces'})")


# ---------------------------------------------------------------------------
# select
# ---------------------------------------------------------------------------

@main.command()
@click.option("--ideas", "ideas_path", type=click.Path(), default="ideas.ansl")
@click.option("--frame-embeddings", "frames_emb_path", type=click.Path(),
              default="frames.ansl")
@click.option("--frames", "frames_dir", required=True, type=click.Path())
@click.option("--faces", "faces_path", type=click.Path(), default="faces.json")
@click.option("--mode", type=click.Choice(["dup", "unique"]), default=None)
@click.option("--out", type=click.Path(), default="portfolio.json")
@click.pass_obj
@handle_errors
def select(cfg: Config, ideas_path: str, frames_emb_path: str, frames_dir: str,
           faces_path: str, mode: str | None, out: str):
    """Pick the best frame per idea and attach face-centric crops."""
    idea_vecs, idea_kind, idea_meta = providers.read_embeddings(
        _require(Path(ideas_path), "idea embeddings file"))
    frame_vecs, frame_kind, frame_meta = providers.read_embeddings(
        _require(Path(frames_emb_path), "frame embeddings file"))
    if idea_kind != "text" or frame_kind != "image":
        raise ValidationError(
            f"expected text+image embedding files, got {idea_kind}+{frame_kind}")

    phrases = [hygiene.l2_normalize(v) for v in idea_vecs]
    frame_rows = frame_meta["rows"]
    frames_norm = [
        (int(row["frame_id"]), hygiene.l2_normalize(vec))
        for row, vec in zip(frame_rows, frame_vecs)
    ]
    matrix = retrieval.similarity_matrix(phrases, frames_norm)
    sel_mode = (retrieval.SelectionMode.UNIQUE_GREEDY
                if (mode or cfg.selection_mode) == "unique"
                else retrieval.SelectionMode.ALLOW_DUPLICATES)
    entries = retrieval.select_portfolio(matrix, sel_mode)

    manifest = media.load_manifest(frames_dir)
    face_map = _load_faces(Path(faces_path))
    ts = {int(r["frame_id"]): float(r["timestamp_s"]) for r in frame_rows}
    idea_texts = {int(r["idea_index"]): r["text"] for r in idea_meta["rows"]}

    out_entries = []
    for e in entries:
        boxes = face_map.get(e.frame_id, [])
        crop = None
        if boxes:
            with Image.open(manifest.image_path(e.frame_id)) as img:
                dims = facegeom.ImageDims(width=img.width, height=img.height)
            crop = facegeom.face_crop_rect(boxes, dims)
        out_entries.append({
            "idea_index": e.idea_index,
            "idea_text": idea_texts[e.idea_index],
            "frame_id": e.frame_id,
            "timestamp_s": ts[e.frame_id],
            "score": e.score,
            "crop": None if crop is None else
                    {"x0": crop.x0, "y0": crop.y0, "x1": crop.x1, "y1": crop.y1},
        })
    _write_json(Path(out), {
        "event_name": idea_meta.get("event_name", ""),
        "mode": mode or cfg.selection_mode,
        "entries": out_entries,
    })
    click.echo(f"wrote {out} ({len(out_entries)} entries)")


# ---------------------------------------------------------------------------
# baseline
# ---------------------------------------------------------------------------

@main.command("baseline")
@click.option("--frame-embeddings", "frames_emb_path", type=click.Path(),
              default="frames_all.ansl")
@click.option("--mode", type=click.Choice(["budget", "topk"]), default=None)
@click.option("--k", type=int, default=None)
@click.option("--block-size", type=int, default=None)
@click.option("--weights", default=None, help="w_u,w_d (e.g. 0.5,0.5)")
@click.option("--num-cuts", type=int, default=None)
@click.option("--fps", type=float, default=1.0, show_default=True,
              help="Used to pick the default segment count.")
@click.option("--out", type=click.Path(), default="baseline.json")
@click.pass_obj
@handle_errors
def baseline_cmd(cfg: Config, frames_emb_path: str, mode: str | None, k: int | None,
                 block_size: int | None, weights: str | None, num_cuts: int | None,
                 fps: float, out: str):
    """Run the summarization baseline over frame embeddings."""
    vecs, kind, meta = providers.read_embeddings(
        _require(Path(frames_emb_path), "frame embeddings file"))
    if kind != "image":
        raise ValidationError(f"baseline needs an image embeddings file, got {kind}")
    features = [hygiene.l2_normalize(v) for v in vecs]

    if weights is not None:
        try:
            w_u, w_d = (float(p) for p in weights.split(","))
        except ValueError as exc:
            raise ValidationError(f"bad --weights {weights!r}, expected wu,wd") from exc
        score_weights = baseline_mod.ScoreWeights(w_u=w_u, w_d=w_d)
    else:
        score_weights = cfg.weights

    mode_name = {"budget": "budget_15pct", "topk": "top_k_centers"}[
        mode or ("budget" if cfg.baseline_mode == "budget_15pct" else "topk")]
    indices = baseline_mod.summarize(
        features,
        mode=mode_name,
        k=k or cfg.baseline_k,
        block_size=block_size or cfg.block_size,
        weights=score_weights,
        num_cuts=num_cuts if num_cuts is not None else cfg.num_cuts,
        fps=fps,
    )
    rows = meta["rows"]
    frame_ids = [int(rows[i]["frame_id"]) for i in indices]
    _write_json(Path(out), {
        "mode": mode_name,
        "k": k or cfg.baseline_k,
        "frame_ids": frame_ids,
    })
    click.echo(f"wrote {out} ({len(frame_ids)} frames)")


# ---------------------------------------------------------------------------
# collage
# ---------------------------------------------------------------------------

@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(),
              help="portfolio.json or baseline.json")
@click.option("--frames", "frames_dir", required=True, type=click.Path())
@click.option("--faces", "faces_path", type=click.Path(), default=None,
              help="Face annotations; lets baseline picks get face crops too.")
@click.option("--out", type=click.Path(), default="collage.png")
@click.pass_obj
@handle_errors
def collage(cfg: Config, input_path: str, frames_dir: str, faces_path: str | None,
            out: str):
    """Render selected frames (cropped) into the portfolio collage PNG."""
    doc = _read_json(_require(Path(input_path), "selection"), "selection")
    manifest = media.load_manifest(frames_dir)
    face_map = _load_faces(Path(faces_path)) if faces_path else {}

    # Portfolio entries carry crops; baseline picks get crops computed here
    # when faces are known, and pass through uncropped otherwise.
    items: list[tuple[int, CropRect | None]] = []
    if "entries" in doc:
        for e in sorted(doc["entries"], key=lambda d: d["idea_index"]):
            crop = e.get("crop")
            rect = None if crop is None else CropRect(
                x0=crop["x0"], y0=crop["y0"], x1=crop["x1"], y1=crop["y1"])
            items.append((int(e["frame_id"]), rect))
    else:
        for fid in doc["frame_ids"]:
            boxes = face_map.get(int(fid), [])
            rect = None
            if boxes:
                with Image.open(manifest.image_path(int(fid))) as img:
                    dims = facegeom.ImageDims(width=img.width, height=img.height)
                rect = facegeom.face_crop_rect(boxes, dims)
            items.append((int(fid), rect))

    spec = cfg.collage
    cells = []
    for fid, rect in items:
        with Image.open(manifest.image_path(fid)) as img:
            img = img.convert("RGB")
            if rect is None:
                rect = CropRect(x0=0, y0=0, x1=img.width, y1=img.height)
            cells.append(media.apply_crop(
                img, rect, (spec.cell_width, spec.cell_height), spec.background))
    result = media.make_collage(cells, spec)
    buf = io.BytesIO()
    result.save(buf, format="PNG")
    _write_bytes(Path(out), buf.getvalue())
    click.echo(f"wrote {out} ({result.width}x{result.height})")


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

@main.command()
@click.option("--embeddings", "emb_path", required=True, type=click.Path())
@click.option("--out-dir", type=click.Path(), default="diagnostics")
@click.option("--bins", type=int, default=100, show_default=True)
@click.option("--threshold", type=float, default=0.3, show_default=True)
@click.option("--plot", is_flag=True, help="Also write histogram PNGs (needs matplotlib).")
@handle_errors
def diagnose(emb_path: str, out_dir: str, bins: int, threshold: float, plot: bool):
    """Per-dimension stats, dominant-dimension report, optional histograms."""
    vecs, kind, meta = providers.read_embeddings(
        _require(Path(emb_path), "embeddings file"))
    stats = hygiene.dimension_stats(vecs, kind, bins=bins)
    dominant = hygiene.dominant_dims(stats, threshold)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    buf = io.StringIO()
    writer = csv.writer(buf)
    edge_cols = [f"edge_{i}" for i in range(bins + 1)]
    count_cols = [f"count_{i}" for i in range(bins)]
    writer.writerow(["dimension", "min", "max", "mean"] + edge_cols + count_cols)
    for d in range(stats.dim):
        writer.writerow(
            [d, repr(float(stats.mins[d])), repr(float(stats.maxs[d])),
             repr(float(stats.means[d]))]
            + [repr(float(e)) for e in stats.bin_edges]
            + [int(c) for c in stats.counts[d]]
        )
    _write_bytes(out / "stats.csv", buf.getvalue().encode("utf-8"))

    report: dict = {"kind": kind, "threshold": threshold, "dominant_dims": dominant}
    rows = meta.get("rows", [])
    if kind == "image" and rows and dominant:
        records = [
            FrameRecord(frame_id=int(r["frame_id"]),
                        timestamp_s=float(r.get("timestamp_s", 0.0)),
                        image_ref="", faces=(), embedding=vecs[i])
            for i, r in enumerate(rows)
        ]
        report["max_magnitude_frames"] = {
            str(d): hygiene.max_magnitude_frame(records, d) for d in dominant
        }
    _write_json(out / "dominant.json", report)

    if plot:
        _write_histograms(out, stats, dominant)
    click.echo(f"wrote {out}/stats.csv; dominant dims: {dominant or 'none'}")


def _write_histograms(out: Path, stats, dominant: list[int]) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    centers = (stats.bin_edges[:-1] + stats.bin_edges[1:]) / 2.0
    width = stats.bin_edges[1] - stats.bin_edges[0]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(centers, stats.counts.sum(axis=0), width=width)
    ax.set_yscale("log")
    ax.set_xlabel(f"{stats.kind} embedding element value")
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(out / "all_values.png", dpi=120)
    plt.close(fig)

    for d in dominant[:4]:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(centers, stats.counts[d], width=width)
        ax.set_yscale("log")
        ax.set_xlabel(f"dimension {d} value")
        ax.set_ylabel("count")
        fig.tight_layout()
        fig.savefig(out / f"dim_{d}.png", dpi=120)
        plt.close(fig)


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

@main.group()
def evaluate():
    """Study bookkeeping: sheets, tallies, and caption-score stats."""


@evaluate.command("make-sheets")
@click.option("--collages", "collages_path", required=True, type=click.Path(),
              help="JSON: {event: {method: collage path}}")
@click.option("--seed", type=int, required=True)
@click.option("--out-dir", type=click.Path(), default="sheets")
@handle_errors
def make_sheets_cmd(collages_path: str, seed: int, out_dir: str):
    doc = _read_json(_require(Path(collages_path), "collage index"), "collage index")
    sheets, keys = evaluation.make_sheets(doc, seed)
    out = Path(out_dir)
    _write_json(out / "sheets.json", [
        {"event": s.event, "left_collage": s.left_collage,
         "right_collage": s.right_collage, "seed": s.seed}
        for s in sheets
    ])
    _write_json(out / "key.json", [
        {"event": k.event, "left_method": k.left_method, "right_method": k.right_method}
        for k in keys
    ])
    click.echo(f"wrote {out}/sheets.json and {out}/key.json ({len(sheets)} events)")


@evaluate.command("tally")
@click.option("--votes", "votes_path", required=True, type=click.Path(),
              help="CSV: rater_id,event,choice")
@click.option("--key", "key_path", required=True, type=click.Path())
@click.option("--out", type=click.Path(), default="tally.json")
@handle_errors
def tally_cmd(votes_path: str, key_path: str, out: str):
    key_doc = _read_json(_require(Path(key_path), "sheet key"), "sheet key")
    keys = [
        evaluation.SheetKey(event=k["event"], left_method=k["left_method"],
                            right_method=k["right_method"])
        for k in key_doc
    ]
    votes = []
    with open(_require(Path(votes_path), "votes CSV"), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"rater_id", "event", "choice"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValidationError(
                f"votes CSV needs columns {sorted(required)}, got {reader.fieldnames}")
        for row in reader:
            votes.append(evaluation.VoteRecord(
                rater_id=row["rater_id"], event=row["event"], choice=row["choice"]))
    result = evaluation.tally(votes, keys)
    _write_json(Path(out), result)
    click.echo(json.dumps(result["aggregate"], sort_keys=True))


@evaluate.command("scores")
@click.option("--scores", "scores_path", required=True, type=click.Path(),
              help="CSV: rater_id,own_score,lm_score")
@click.option("--out", type=click.Path(), default="score_stats.csv")
@click.option("--plot", "plot_path", type=click.Path(), default=None,
              help="Also write a bar chart with std error bars to this PNG.")
@handle_errors
def scores_cmd(scores_path: str, out: str, plot_path: str | None):
    table: dict[str, tuple[float, float]] = {}
    with open(_require(Path(scores_path), "scores CSV"), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"rater_id", "own_score", "lm_score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValidationError(
                f"scores CSV needs columns {sorted(required)}, got {reader.fieldnames}")
        for row in reader:
            table[row["rater_id"]] = (float(row["own_score"]), float(row["lm_score"]))
    stats = evaluation.score_stats(table)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["source", "mean", "std", "n"])
    for source in ("human", "lm"):
        s = stats[source]
        writer.writerow([source, repr(s["mean"]), repr(s["std"]), s["n"]])
    _write_bytes(Path(out), buf.getvalue().encode("utf-8"))
    if plot_path:
        _write_score_plot(Path(plot_path), stats)
    click.echo(f"human {stats['human']['mean']:.3f}±{stats['human']['std']:.3f}  "
               f"lm {stats['lm']['mean']:.3f}±{stats['lm']['std']:.3f}")


def _write_score_plot(path: Path, stats: dict) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = ["human", "lm"]
    means = [stats[s]["mean"] for s in labels]
    stds = [stats[s]["std"] for s in labels]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.bar(labels, means, yerr=stds, capsize=6, color=["#4c72b0", "#dd8452"])
    ax.set_ylim(0, 10)
    ax.set_ylabel("caption score (0-10)")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)


if __name__ == "__main__":
    main()

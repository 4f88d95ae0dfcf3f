"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints an ACCEPTANCE <name>: PASS/FAIL line (see conftest). All
oracles here are deliberately naive re-implementations, independent of the
library code paths they check.
"""

import itertools
import json
import math
import random
import statistics
import time

import numpy as np
import pytest
from click.testing import CliRunner

from ansel.baseline import (
    AttentionMatrix,
    block_diversity,
    knapsack_select,
    kts_segment,
    uniqueness,
)
from ansel.cli import main
from ansel.core import FaceBox, LmParams, validate_embedding
from ansel.errors import DegenerateEmbedding, RetriesExhausted
from ansel.facegeom import ImageDims, face_crop_rect
from ansel.hygiene import l2_normalize, suppress_outlier_dims
from ansel.providers import ScriptedLm, read_embeddings, write_embeddings
from ansel.retrieval import SelectionMode, SimilarityMatrix, select_portfolio
from ansel.shotlist import PromptSpec, RejectionPolicy, find_rejected_terms, generate_shotlist

from fixture_corpus import build_corpus, frame_has_face


# ---------------------------------------------------------------------------
# Criterion: hygiene oracle
# ---------------------------------------------------------------------------

def _reference_suppress(xs, threshold=0.3, epsilon=1e-8):
    """Brute-force reference: plain Python lists, no vectorized shortcuts."""
    norm = math.sqrt(sum(x * x for x in xs))
    if norm < epsilon:
        raise DegenerateEmbedding("zero vector")
    unit = [x / norm for x in xs]
    mask = [abs(u) > threshold for u in unit]
    if not any(mask):
        return unit
    kept = [0.0 if m else u for m, u in zip(mask, unit)]
    knorm = math.sqrt(sum(x * x for x in kept))
    if knorm < epsilon:
        raise DegenerateEmbedding("all suppressed")
    return [0.0 if m else x / knorm for m, x in zip(mask, kept)]


def test_hygiene_oracle():
    rng = np.random.default_rng(1234)
    start = time.monotonic()
    cases = [(8, 4000), (64, 4000), (768, 2000)]  # 10^4 vectors total
    checked = 0
    for dim, count in cases:
        for _ in range(count):
            xs = rng.normal(scale=0.08, size=dim)
            n_spikes = int(rng.integers(0, 4))  # injected outliers
            for d in rng.choice(dim, size=n_spikes, replace=False):
                xs[d] = rng.choice([-1, 1]) * rng.uniform(0.5, 8.0)
            v = validate_embedding(xs, dim)
            try:
                expected = _reference_suppress(list(xs))
            except DegenerateEmbedding:
                with pytest.raises(DegenerateEmbedding):
                    suppress_outlier_dims(v)
                continue
            got = suppress_outlier_dims(v)
            assert abs(np.linalg.norm(got.values) - 1.0) <= 1e-6
            unit = v.values / np.linalg.norm(v.values)
            assert np.all(got.values[np.abs(unit) > 0.3] == 0.0)
            assert np.max(np.abs(got.values - np.array(expected))) <= 1e-9
            checked += 1
    elapsed = time.monotonic() - start
    assert checked > 9000
    assert elapsed < 5.0, f"hygiene oracle took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# Criterion: retrieval oracle
# ---------------------------------------------------------------------------

def test_retrieval_oracle():
    rng = np.random.default_rng(77)
    for _ in range(200):
        P = int(rng.integers(1, 21))
        F = int(rng.integers(P, 21))
        scores = rng.uniform(-1, 1, size=(P, F))
        if F >= 3 and rng.random() < 0.5:
            scores[:, 2] = scores[:, 0]  # exact column ties
        m = SimilarityMatrix(scores=scores, frame_ids=tuple(range(F)))

        # row-wise brute-force argmax with lowest-index tie-break
        expected_dup = []
        for p in range(P):
            best_c, best_s = 0, scores[p][0]
            for c in range(1, F):
                if scores[p][c] > best_s:
                    best_c, best_s = c, scores[p][c]
            expected_dup.append((best_c, float(best_s)))
        got_dup = [(e.frame_id, e.score) for e in select_portfolio(m, SelectionMode.ALLOW_DUPLICATES)]
        assert got_dup == expected_dup

        # reference greedy trace: best available phrase claims best unclaimed frame
        remaining, free, assign = list(range(P)), list(range(F)), {}
        while remaining:
            best = None
            for p in remaining:
                for c in free:
                    s = float(scores[p][c])
                    if best is None or s > best[0]:
                        best = (s, p, c)
            s, p, c = best
            assign[p] = (c, s)
            remaining.remove(p)
            free.remove(c)
        expected_uniq = [assign[p] for p in range(P)]
        got_uniq = [(e.frame_id, e.score) for e in select_portfolio(m, SelectionMode.UNIQUE_GREEDY)]
        assert got_uniq == expected_uniq


# ---------------------------------------------------------------------------
# Criterion: knapsack oracle
# ---------------------------------------------------------------------------

def test_knapsack_oracle():
    rng = np.random.default_rng(404)
    start = time.monotonic()
    for trial in range(100):
        n = int(rng.integers(1, 16))
        if trial % 2 == 0:
            values = [float(v) for v in rng.integers(0, 9, size=n)]  # exact ties
        else:
            values = rng.uniform(0.0, 4.0, size=n).tolist()
        weights = [int(w) for w in rng.integers(1, 7, size=n)]
        budget = int(rng.integers(0, sum(weights) + 2))

        best = (0.0, 0, ())
        for r in range(n + 1):
            for subset in itertools.combinations(range(n), r):
                wt = sum(weights[i] for i in subset)
                if wt > budget:
                    continue
                val = 0.0
                for i in subset:
                    val = val + values[i]
                if (val > best[0]
                        or (val == best[0] and wt < best[1])
                        or (val == best[0] and wt == best[1] and subset < best[2])):
                    best = (val, wt, subset)
        assert knapsack_select(values, weights, budget) == set(best[2])
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"knapsack oracle took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# Criterion: KTS oracle
# ---------------------------------------------------------------------------

def _scatter(K, a, b):
    diag = sum(K[i][i] for i in range(a, b))
    box = sum(K[i][j] for i in range(a, b) for j in range(a, b))
    return diag - box / (b - a)


def _exhaustive_cuts(features, m):
    x = np.stack([f.values for f in features])
    K = x @ x.T
    n = len(features)
    best_cuts, best_cost = None, None
    for cuts in itertools.combinations(range(1, n), m):
        bounds = [0] + list(cuts) + [n]
        total = 0.0
        for a, b in reversed(list(zip(bounds[:-1], bounds[1:]))):
            total = _scatter(K, a, b) + total
        if best_cost is None or total < best_cost:
            best_cuts, best_cost = list(cuts), total
    return best_cuts


def test_kts_oracle():
    # the step-signal case: exhaustive search puts the single cut at index 3
    step = [validate_embedding([x], 1) for x in [0.0, 0.0, 0.0, 5.0, 5.0, 5.0]]
    assert _exhaustive_cuts(step, 1) == [3]
    assert [s.start for s in kts_segment(step, 1)[1:]] == [3]

    rng = np.random.default_rng(31337)
    for trial in range(100):
        n = int(rng.integers(2, 21))
        m = int(rng.integers(0, min(4, n)))
        d = int(rng.integers(1, 4))
        feats = [validate_embedding(rng.normal(size=d), d) for _ in range(n)]
        expected = _exhaustive_cuts(feats, m)
        got = [s.start for s in kts_segment(feats, m)[1:]]
        assert got == expected, f"trial {trial}: {got} != {expected}"


# ---------------------------------------------------------------------------
# Criterion: entropy / diversity spot values
# ---------------------------------------------------------------------------

def test_entropy_and_diversity_checks():
    for n in (2, 4, 16):
        a = AttentionMatrix(a=np.full((n, n), 1.0 / n), block_size=1)
        assert np.all(np.abs(uniqueness(a) - 1.0) <= 1e-9)
    one_hot = AttentionMatrix(a=np.eye(4), block_size=1)
    assert np.all(uniqueness(one_hot) == 0.0)
    same = [l2_normalize(validate_embedding([2.0, 1.0, 2.0], 3))] * 9
    assert np.all(np.abs(block_diversity(same, 3) - 1.0) <= 1e-9)


# ---------------------------------------------------------------------------
# Criterion: crop geometry property
# ---------------------------------------------------------------------------

def test_geometry_property():
    rect = face_crop_rect(
        [FaceBox(x=40, y=40, w=20, h=20, confidence=0.9)], ImageDims(100, 100)
    )
    assert (rect.x0, rect.y0, rect.x1, rect.y1) == (38, 38, 62, 100)

    rng = random.Random(987654321)
    for _ in range(10_000):
        width, height = rng.randint(4, 1920), rng.randint(4, 1080)
        boxes = []
        for _ in range(rng.randint(1, 8)):
            x, y = rng.randint(0, width - 2), rng.randint(0, height - 2)
            w = rng.randint(1, width - x - 1)
            h = rng.randint(1, height - y - 1)
            boxes.append(FaceBox(x=x, y=y, w=w, h=h, confidence=rng.random()))
        margin = rng.random() * 0.5
        rect = face_crop_rect(boxes, ImageDims(width, height), margin)
        assert 0 <= rect.x0 < rect.x1 <= width
        assert 0 <= rect.y0 < rect.y1 <= height
        assert rect.y1 == height
        ux = min(b.x for b in boxes)
        uy = min(b.y for b in boxes)
        ux1 = max(b.x + b.w for b in boxes)
        assert rect.x0 <= max(0, ux)
        assert rect.x1 >= min(width, ux1)
        assert rect.y0 <= max(0, uy)


# ---------------------------------------------------------------------------
# Criterion: shot-list contract
# ---------------------------------------------------------------------------

def test_shotlist_contract():
    clean = "\n".join(f"{i}. A photo of subject {i}" for i in range(1, 10))
    rejected = clean.replace("subject 4", "a close up of subject 4")
    policy = RejectionPolicy(max_retries=5)
    spec = PromptSpec(event_name="a birthday party", n=9)

    lm = ScriptedLm([clean])
    got = generate_shotlist(spec, policy, lm, LmParams())
    assert got.provenance.attempt_count == 1
    assert len(got.ideas) == 9
    assert find_rejected_terms(got.ideas, policy) == []

    lm = ScriptedLm([rejected, clean])
    got = generate_shotlist(spec, policy, lm, LmParams())
    assert got.provenance.attempt_count == 2
    assert len(got.ideas) == 9
    assert find_rejected_terms(got.ideas, policy) == []

    always_bad = ScriptedLm([clean.replace("subject 7", "wide shot of it")] * 5)
    with pytest.raises(RetriesExhausted):
        generate_shotlist(spec, policy, always_bad, LmParams())
    assert len(always_bad.calls) == 5


# ---------------------------------------------------------------------------
# Criterion: end-to-end determinism on the bundled synthetic fixture
# ---------------------------------------------------------------------------

def _run_pipeline(runner, frames_dir, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    shot = str(out_dir / "shotlist.json")
    faces = str(out_dir / "faces.json")
    ideas = str(out_dir / "ideas.ansl")
    femb = str(out_dir / "frames.ansl")
    portfolio = str(out_dir / "portfolio.json")
    collage = str(out_dir / "collage.png")
    steps = [
        ["plan", "--event", "a birthday party", "--out", shot],
        ["ingest", "--source", str(frames_dir), "--fps", "1"],
        ["faces", "--frames", str(frames_dir), "--out", faces],
        ["embed", "--kind", "ideas", "--shotlist", shot, "--out", ideas],
        ["embed", "--kind", "frames", "--frames", str(frames_dir),
         "--faces", faces, "--out", femb],
        ["select", "--ideas", ideas, "--frame-embeddings", femb,
         "--frames", str(frames_dir), "--faces", faces, "--out", portfolio],
        ["collage", "--input", portfolio, "--frames", str(frames_dir),
         "--out", collage],
    ]
    for step in steps:
        result = runner.invoke(main, step, catch_exceptions=False)
        assert result.exit_code == 0, f"{step}: {result.output}"
    return out_dir


def test_end_to_end_determinism(tmp_path):
    start = time.monotonic()
    frames_dir = build_corpus(tmp_path / "frames", frames=60)
    runner = CliRunner()
    run_a = _run_pipeline(runner, frames_dir, tmp_path / "a")
    run_b = _run_pipeline(runner, frames_dir, tmp_path / "b")

    portfolio_a = (run_a / "portfolio.json").read_bytes()
    portfolio_b = (run_b / "portfolio.json").read_bytes()
    assert portfolio_a == portfolio_b
    assert (run_a / "collage.png").read_bytes() == (run_b / "collage.png").read_bytes()

    doc = json.loads(portfolio_a)
    assert len(doc["entries"]) == 9
    pool = {i for i in range(60) if frame_has_face(i)}
    for entry in doc["entries"]:
        assert entry["frame_id"] in pool

    # embeddings file round-trips bit-exactly
    vecs, kind, meta = read_embeddings(run_a / "frames.ansl")
    copy = tmp_path / "copy.ansl"
    write_embeddings(copy, vecs, kind, meta)
    assert copy.read_bytes() == (run_a / "frames.ansl").read_bytes()

    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"end-to-end run took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# Criterion: figure bookkeeping (tally and caption-score stats)
# ---------------------------------------------------------------------------

def test_figure_bookkeeping(tmp_path):
    runner = CliRunner()
    key = [
        {"event": "wine", "left_method": "ours", "right_method": "summarizer"},
        {"event": "birthday", "left_method": "summarizer", "right_method": "ours"},
    ]
    (tmp_path / "key.json").write_text(json.dumps(key))
    lines = ["rater_id,event,choice"]
    for i in range(10):  # 5/5 tie on wine
        lines.append(f"r{i},wine,{'left' if i < 5 else 'right'}")
    for i in range(10):  # 8/2 win for ours on birthday (ours is on the right)
        lines.append(f"r{i},birthday,{'right' if i < 8 else 'left'}")
    (tmp_path / "votes.csv").write_text("\n".join(lines) + "\n")

    result = runner.invoke(main, [
        "evaluate", "tally", "--votes", str(tmp_path / "votes.csv"),
        "--key", str(tmp_path / "key.json"), "--out", str(tmp_path / "tally.json"),
    ], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    tall = json.loads((tmp_path / "tally.json").read_text())
    assert tall["events"]["wine"]["wins"] == {"ours": 5, "summarizer": 5}
    assert tall["events"]["wine"]["tie"] is True
    assert tall["events"]["birthday"]["wins"] == {"ours": 8, "summarizer": 2}
    assert tall["events"]["birthday"]["tie"] is False
    assert tall["aggregate"] == {"ours": 13, "summarizer": 7}

    own = [7, 7, 7, 7, 7, 7, 8, 8, 8, 8]  # mean exactly 7.4
    lm = [7] * 10                          # mean exactly 7.0
    rows = ["rater_id,own_score,lm_score"]
    for i in range(10):
        rows.append(f"r{i},{own[i]},{lm[i]}")
    (tmp_path / "scores.csv").write_text("\n".join(rows) + "\n")
    result = runner.invoke(main, [
        "evaluate", "scores", "--scores", str(tmp_path / "scores.csv"),
        "--out", str(tmp_path / "stats.csv"),
    ], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    table = {
        row.split(",")[0]: row.split(",")
        for row in (tmp_path / "stats.csv").read_text().splitlines()[1:]
    }
    assert abs(float(table["human"][1]) - 7.4) <= 1e-9
    assert abs(float(table["lm"][1]) - 7.0) <= 1e-9
    assert abs(float(table["human"][2]) - statistics.stdev(own)) <= 1e-9
    assert abs(float(table["lm"][2]) - statistics.stdev(lm)) <= 1e-9

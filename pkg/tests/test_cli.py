import json

import pytest
from click.testing import CliRunner

from ansel.cli import main
from ansel.providers import read_embeddings

from fixture_corpus import build_corpus, frame_has_face


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workdir(tmp_path):
    build_corpus(tmp_path / "frames", frames=30)
    return tmp_path


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestPipelineCommands:
    def test_full_pipeline(self, runner, workdir):
        frames = str(workdir / "frames")
        shot = str(workdir / "shotlist.json")
        faces = str(workdir / "faces.json")
        ideas = str(workdir / "ideas.ansl")
        femb = str(workdir / "frames.ansl")
        portfolio = str(workdir / "portfolio.json")

        run_ok(runner, ["plan", "--event", "a birthday party", "--out", shot])
        doc = json.loads((workdir / "shotlist.json").read_text())
        assert len(doc["ideas"]) == 9
        assert doc["provenance"]["attempt_count"] == 1

        run_ok(runner, ["ingest", "--source", frames, "--fps", "1"])
        run_ok(runner, ["faces", "--frames", frames, "--out", faces])
        face_doc = json.loads((workdir / "faces.json").read_text())
        for fid, boxes in face_doc["frames"].items():
            assert bool(boxes) == frame_has_face(int(fid))

        run_ok(runner, ["embed", "--kind", "ideas", "--shotlist", shot, "--out", ideas])
        vecs, kind, meta = read_embeddings(workdir / "ideas.ansl")
        assert kind == "text" and len(vecs) == 9
        assert meta["hygiene"]["threshold"] == 0.3

        run_ok(runner, ["embed", "--kind", "frames", "--frames", frames,
                        "--faces", faces, "--out", femb])
        vecs, kind, meta = read_embeddings(workdir / "frames.ansl")
        assert kind == "image"
        assert meta["pool"] == "faces"
        face_ids = {r["frame_id"] for r in meta["rows"]}
        assert face_ids == {i for i in range(30) if frame_has_face(i)}

        run_ok(runner, ["select", "--ideas", ideas, "--frame-embeddings", femb,
                        "--frames", frames, "--faces", faces, "--out", portfolio])
        pdoc = json.loads((workdir / "portfolio.json").read_text())
        assert len(pdoc["entries"]) == 9
        for entry in pdoc["entries"]:
            assert entry["frame_id"] in face_ids
            assert entry["crop"] is not None
            assert -1.0 <= entry["score"] <= 1.0

        collage = str(workdir / "collage.png")
        run_ok(runner, ["collage", "--input", portfolio, "--frames", frames,
                        "--out", collage])
        from PIL import Image
        with Image.open(workdir / "collage.png") as img:
            assert img.size == (3 * 336, 3 * 336)

    def test_unique_mode(self, runner, workdir):
        frames = str(workdir / "frames")
        run_ok(runner, ["plan", "--event", "a party", "--out", str(workdir / "s.json")])
        run_ok(runner, ["faces", "--frames", frames, "--out", str(workdir / "f.json")])
        run_ok(runner, ["embed", "--kind", "ideas", "--shotlist", str(workdir / "s.json"),
                        "--out", str(workdir / "i.ansl")])
        run_ok(runner, ["embed", "--kind", "frames", "--frames", frames,
                        "--faces", str(workdir / "f.json"), "--out", str(workdir / "fe.ansl")])
        run_ok(runner, ["select", "--ideas", str(workdir / "i.ansl"),
                        "--frame-embeddings", str(workdir / "fe.ansl"),
                        "--frames", frames, "--faces", str(workdir / "f.json"),
                        "--mode", "unique", "--out", str(workdir / "p.json")])
        pdoc = json.loads((workdir / "p.json").read_text())
        ids = [e["frame_id"] for e in pdoc["entries"]]
        assert len(ids) == len(set(ids)) == 9

    def test_baseline_and_collage(self, runner, workdir):
        frames = str(workdir / "frames")
        run_ok(runner, ["faces", "--frames", frames, "--out", str(workdir / "f.json")])
        run_ok(runner, ["embed", "--kind", "frames", "--frames", frames,
                        "--all-frames", "--out", str(workdir / "all.ansl")])
        vecs, _, meta = read_embeddings(workdir / "all.ansl")
        assert len(vecs) == 30 and meta["pool"] == "all"

        run_ok(runner, ["baseline", "--frame-embeddings", str(workdir / "all.ansl"),
                        "--mode", "topk", "--k", "3", "--num-cuts", "9",
                        "--out", str(workdir / "b.json")])
        bdoc = json.loads((workdir / "b.json").read_text())
        assert len(bdoc["frame_ids"]) == 3
        assert bdoc["mode"] == "top_k_centers"

        run_ok(runner, ["collage", "--input", str(workdir / "b.json"),
                        "--frames", frames, "--faces", str(workdir / "f.json"),
                        "--out", str(workdir / "bc.png")])
        assert (workdir / "bc.png").is_file()

    def test_baseline_budget_mode(self, runner, workdir):
        frames = str(workdir / "frames")
        run_ok(runner, ["embed", "--kind", "frames", "--frames", frames,
                        "--all-frames", "--out", str(workdir / "all.ansl")])
        run_ok(runner, ["baseline", "--frame-embeddings", str(workdir / "all.ansl"),
                        "--mode", "budget", "--num-cuts", "9",
                        "--out", str(workdir / "b.json")])
        bdoc = json.loads((workdir / "b.json").read_text())
        assert 0 < len(bdoc["frame_ids"]) <= 4  # floor(0.15 * 30)

    def test_diagnose(self, runner, workdir):
        frames = str(workdir / "frames")
        run_ok(runner, ["embed", "--kind", "frames", "--frames", frames,
                        "--all-frames", "--out", str(workdir / "all.ansl")])
        run_ok(runner, ["diagnose", "--embeddings", str(workdir / "all.ansl"),
                        "--out-dir", str(workdir / "diag"), "--bins", "20"])
        stats_lines = (workdir / "diag" / "stats.csv").read_text().splitlines()
        assert len(stats_lines) == 1 + 64  # header + one row per dimension
        assert stats_lines[0].startswith("dimension,min,max,mean,edge_0")
        report = json.loads((workdir / "diag" / "dominant.json").read_text())
        assert report["kind"] == "image"


class TestErrorPaths:
    def test_select_before_embed_exits_4(self, runner, workdir):
        result = runner.invoke(main, [
            "select", "--ideas", str(workdir / "missing.ansl"),
            "--frame-embeddings", str(workdir / "also_missing.ansl"),
            "--frames", str(workdir / "frames"),
        ])
        assert result.exit_code == 4
        assert "missing.ansl" in result.output

    def test_plan_without_token_exits_3(self, runner, workdir):
        cfg = workdir / "cfg.yaml"
        cfg.write_text(
            "providers:\n"
            "  lm: {kind: http, base_url: 'http://127.0.0.1:9', auth: true}\n"
        )
        result = runner.invoke(
            main, ["--config", str(cfg), "plan", "--event", "a party"],
            env={"ANSEL_LM_TOKEN": None},
        )
        assert result.exit_code == 3
        assert "ANSEL_LM_TOKEN" in result.output

    def test_usage_error_exits_2(self, runner):
        result = runner.invoke(main, ["plan"])  # --event missing
        assert result.exit_code == 2

    def test_bad_manifest_exits_4(self, runner, tmp_path):
        (tmp_path / "empty").mkdir()
        result = runner.invoke(main, ["ingest", "--source", str(tmp_path / "empty")])
        assert result.exit_code == 4


class TestEvaluateCommands:
    def test_make_sheets_tally_scores(self, runner, tmp_path):
        collages = {
            "birthday": {"ours": "b1.png", "summarizer": "b2.png"},
            "wine": {"ours": "w1.png", "summarizer": "w2.png"},
        }
        cpath = tmp_path / "collages.json"
        cpath.write_text(json.dumps(collages))
        run_ok(runner, ["evaluate", "make-sheets", "--collages", str(cpath),
                        "--seed", "7", "--out-dir", str(tmp_path / "sheets")])
        key = json.loads((tmp_path / "sheets" / "key.json").read_text())
        assert len(key) == 2

        # identical seed reruns byte-identically
        first = (tmp_path / "sheets" / "sheets.json").read_bytes()
        run_ok(runner, ["evaluate", "make-sheets", "--collages", str(cpath),
                        "--seed", "7", "--out-dir", str(tmp_path / "sheets2")])
        assert (tmp_path / "sheets2" / "sheets.json").read_bytes() == first

        votes = tmp_path / "votes.csv"
        by_event = {k["event"]: k for k in key}
        lines = ["rater_id,event,choice"]
        for i in range(10):
            want = "ours" if i < 8 else "summarizer"
            k = by_event["birthday"]
            side = "left" if k["left_method"] == want else "right"
            lines.append(f"r{i},birthday,{side}")
        votes.write_text("\n".join(lines) + "\n")
        run_ok(runner, ["evaluate", "tally", "--votes", str(votes),
                        "--key", str(tmp_path / "sheets" / "key.json"),
                        "--out", str(tmp_path / "tally.json")])
        tall = json.loads((tmp_path / "tally.json").read_text())
        assert tall["events"]["birthday"]["wins"] == {"ours": 8, "summarizer": 2}

        scores = tmp_path / "scores.csv"
        rows = ["rater_id,own_score,lm_score"]
        own = [7, 7, 7, 7, 7, 7, 8, 8, 8, 8]
        for i in range(10):
            rows.append(f"r{i},{own[i]},7")
        scores.write_text("\n".join(rows) + "\n")
        run_ok(runner, ["evaluate", "scores", "--scores", str(scores),
                        "--out", str(tmp_path / "stats.csv")])
        lines = (tmp_path / "stats.csv").read_text().splitlines()
        assert lines[0] == "source,mean,std,n"
        human = lines[1].split(",")
        assert human[0] == "human" and float(human[1]) == 7.4

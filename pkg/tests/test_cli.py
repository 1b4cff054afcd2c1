import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from textbridge.cli import run
from textbridge.dataset_io import (CategorySet, MultiDomainDataset, emit_text_dataset,
                                   load_dataset, write_category_set)
from textbridge.synthetic import make_dg_dataset, make_uda_task


def _err(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    return json.loads(lines[-1])


@pytest.fixture
def dg_files(tmp_path):
    ds = make_dg_dataset(per_domain=14, seed=7)
    emit_text_dataset(ds, tmp_path / "ds.jsonl")
    write_category_set(ds.category_set, tmp_path / "cats.txt")
    return tmp_path, ["--dataset", str(tmp_path / "ds.jsonl"),
                      "--categories", str(tmp_path / "cats.txt")]


def test_usage_errors(capsys, tmp_path):
    assert run(["frobnicate"]) == 2
    err = _err(capsys)
    assert err["error"] == "usage" and err["exit"] == 2
    assert run(["stats", "--dataset", str(tmp_path / "nope"), "--categories", "x"]) == 2
    assert "no such file" in _err(capsys)["message"]


def test_config_errors(dg_files, capsys):
    tmp, data = dg_files
    (tmp / "bad.cfg").write_text("colour = blue\n")
    assert run(["stats", *data, "--config", str(tmp / "bad.cfg")]) == 2
    assert "unknown setting" in _err(capsys)["message"]
    (tmp / "bad2.cfg").write_text("steps = many\n")
    assert run(["stats", *data, "--config", str(tmp / "bad2.cfg")]) == 2
    assert run(["finetune-dg", *data, "--variant", "t9", "--run-dir", str(tmp / "r")]) == 2


def test_runtime_error_line(dg_files, capsys):
    tmp, data = dg_files
    code = run(["uda-run", *data, "--source", "A", "--target", "Q", "--run-dir", str(tmp / "r")])
    assert code == 2  # unknown domain is a usage problem
    bad = tmp / "broken.jsonl"
    bad.write_text('{"id": "x", "domain": "A", "label": "zebra", "tags": ["a"], '
                   '"attributes": ["b"], "captions": ["c"]}\n')
    code = run(["stats", "--dataset", str(bad), "--categories", str(tmp / "cats.txt"),
                "--run-dir", str(tmp / "r2")])
    err = _err(capsys)
    assert code == 1 and err["exit"] == 1 and err["error"] == "LabelError"


def test_stats_and_default_run_dir(dg_files, capsys, monkeypatch):
    tmp, data = dg_files
    monkeypatch.chdir(tmp)
    assert run(["stats", *data]) == 0
    out = json.loads(capsys.readouterr().out.strip())
    assert (out["samples"], out["classes"], out["domains"]) == (56, 7, 4)
    manifest = json.loads((tmp / "runs" / "stats" / "manifest.json").read_text())
    assert manifest["command"] == "stats" and manifest["seed"] == 0
    assert set(manifest["formats"]) == {"checkpoint", "tokenizer", "templates", "table"}
    assert not (tmp / "runs" / "stats" / ".lock").exists()


def test_lock_blocks_second_run(dg_files, capsys):
    tmp, data = dg_files
    (tmp / "r").mkdir()
    (tmp / "r" / ".lock").write_text("1")
    assert run(["stats", *data, "--run-dir", str(tmp / "r")]) == 1
    assert "locked" in _err(capsys)["message"]


def test_precedence_and_reproducibility(dg_files):
    tmp, data = dg_files
    (tmp / "c.cfg").write_text("# training\nsteps = 3\nlr = 0.01\nfeat_dim = 1024\n")
    digests = []
    for name in ("a", "b"):
        rd = tmp / name
        assert run(["finetune-dg", *data, "--config", str(tmp / "c.cfg"), "--steps", "2",
                    "--target", "S", "--batch-size", "16", "--run-dir", str(rd)]) == 0
        settings = json.loads((rd / "manifest.json").read_text())["settings"]
        assert (settings["steps"], settings["lr"], settings["feat_dim"]) == (2, 0.01, 1024)
        assert settings["batch_size"] == 16 and settings["rank"] == 8
        assert len((rd / "losses.txt").read_text().splitlines()) == 2
        digests.append([hashlib.sha256((rd / f).read_bytes()).hexdigest()
                        for f in ("checkpoint.npz", "losses.txt", "manifest.json")])
    assert digests[0] == digests[1]


def test_build_dataset_and_classify(dg_files):
    tmp, data = dg_files
    assert run(["build-dataset", *data, "--run-dir", str(tmp / "b")]) == 0
    pairs = [json.loads(x) for x in (tmp / "b" / "pairs.jsonl").read_text().splitlines()]
    assert len(pairs) == 56 and pairs[0]["prompt"].endswith("### Answer:")
    assert run(["finetune-dg", *data, "--feat-dim", "2048", "--steps", "40", "--lr", "0.01",
                "--batch-size", "32", "--run-dir", str(tmp / "f")]) == 0
    ck = str(tmp / "f" / "checkpoint.npz")
    for cmd in ("classify", "rank-classify"):
        rd = tmp / cmd
        assert run([cmd, *data, "--checkpoint", ck, "--domain", "A", "--run-dir", str(rd)]) == 0
        preds = (rd / "predictions.jsonl").read_text().splitlines()
        assert len(preds) == 14
        assert json.loads((rd / "manifest.json").read_text())["outputs"]["accuracy"] >= 90.0


def test_uda_run_rounds(tmp_path):
    ds = make_uda_task(70, 70, seed=8)
    emit_text_dataset(ds, tmp_path / "u.jsonl")
    write_category_set(ds.category_set, tmp_path / "cats.txt")
    assert run(["uda-run", "--dataset", str(tmp_path / "u.jsonl"), "--categories",
                str(tmp_path / "cats.txt"), "--source", "P", "--target", "T", "--rounds", "1",
                "--uda-epochs", "1", "--batch-size", "32", "--feat-dim", "1024",
                "--run-dir", str(tmp_path / "r")]) == 0
    for r in (0, 1):
        assert (tmp_path / "r" / f"round_{r}" / "checkpoint.npz").exists()
    rounds = json.loads((tmp_path / "r" / "rounds.json").read_text())
    assert rounds[1]["labels_from"] == rounds[0]["checkpoint_id"]


def test_evaluate_dg_single_target(dg_files, capsys):
    tmp, data = dg_files
    assert run(["evaluate-dg", *data, "--target", "C", "--steps", "5", "--feat-dim", "1024",
                "--batch-size", "32", "--run-dir", str(tmp / "e")]) == 0
    table = json.loads((tmp / "e" / "reports" / "dg_table.json").read_text())
    assert list(table["cells"]) == ["C"] and not table["partial"]
    assert (tmp / "e" / "reports" / "dg_table.tsv").read_text().startswith("A\tC\tP\tS\tAvg\n")


def test_analyze_freq(dg_files, capsys):
    tmp, data = dg_files
    assert run(["analyze", "freq", *data, "--words", "painting,sketch",
                "--run-dir", str(tmp / "a")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "word\tA\tC\tP\tS" and len(lines) == 3
    assert run(["analyze", "freq", *data, "--run-dir", str(tmp / "a2")]) == 2


# ----------------------------------------------------------------------------
# extraction against a local OpenAI-style server


class _Handler(BaseHTTPRequestHandler):
    calls = 0

    def log_message(self, *a):
        pass

    def do_POST(self):
        type(self).calls += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.path.endswith("/embeddings"):
            text = body["input"][0]
            seed = int(hashlib.sha256(text.encode()).hexdigest()[:8], 16)
            vec = np.random.default_rng(seed).normal(size=6).tolist()
            out = {"data": [{"embedding": vec}]}
        elif self.path.endswith("/chat/completions"):
            out = {"choices": [{"message": {"content": f"a picture number {i}"}}
                               for i in range(body["n"])]}
        else:
            out = {"choices": [{"text": "- has four legs\n- is furry\n- has a tail"}]}
        data = json.dumps(out).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def server():
    srv = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}/v1"
    srv.shutdown()


def test_extract_twice_uses_cache(tmp_path, server, capsys):
    cs = CategorySet(("dog", "cat"))
    write_category_set(cs, tmp_path / "cats.txt")
    (tmp_path / "tags.txt").write_text("dog\ncat\ngrass\nsofa\n")
    (tmp_path / "images.jsonl").write_text("".join(
        json.dumps({"id": f"i{i}", "domain": "P", "label": "dog", "image_ref": f"img{i}.png"})
        + "\n" for i in range(3)))
    spec = server + "?model=m"
    argv = ["extract", "--images", str(tmp_path / "images.jsonl"), "--categories",
            str(tmp_path / "cats.txt"), "--tags", str(tmp_path / "tags.txt"),
            "--embedder", "openai:" + spec, "--captioner", "openai:" + spec,
            "--attributes", "openai:" + spec, "--num-tags", "2", "--num-attributes", "2",
            "--num-captions", "3", "--cache", str(tmp_path / "cache")]
    assert run(argv + ["--run-dir", str(tmp_path / "r1")]) == 0
    first = capsys.readouterr().out
    assert "network calls: 0" not in first and _Handler.calls > 0
    before = _Handler.calls
    assert run(argv + ["--run-dir", str(tmp_path / "r2")]) == 0
    assert "network calls: 0" in capsys.readouterr().out
    assert _Handler.calls == before
    a = (tmp_path / "r1" / "dataset.jsonl").read_bytes()
    assert a == (tmp_path / "r2" / "dataset.jsonl").read_bytes()
    ds = load_dataset(tmp_path / "r1" / "dataset.jsonl", cs)
    d = ds.samples()[0].description
    assert len(d.tags) == 2 and len(d.attributes) == 2 and len(d.captions) == 3
    assert all(" which " in x for x in d.attributes)

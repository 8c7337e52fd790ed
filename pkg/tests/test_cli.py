import io
import json
import time

import numpy as np
import pytest

from mmft.cli import main
from mmft.corpus import read_lines
from mmft.persistence import load_codebook, load_model
from mmft.synthetic import fusion_task

from conftest import write_lines


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    for name, n, seed in (("train", 600, 1), ("valid", 150, 2)):
        s = fusion_task(n, seed=seed)
        write_lines(d / f"{name}.txt", s.lines)
        write_lines(d / f"{name}.vec", [" ".join(f"{v:.5f}" for v in r) for r in s.features])
    return d


def run(argv, capsys):
    start = time.perf_counter()
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    assert time.perf_counter() - start < 5
    return code, out, err


def test_train_text_writes_bin(data, capsys):
    code, _, _ = run(["train", "-input", data / "train.txt", "-output", data / "m",
                      "-fusion", "text", "-dim", 20, "-lr", 0.5, "-epoch", 5], capsys)
    assert code == 0
    assert (data / "m.bin").exists()


def test_train_defaults(data, capsys, monkeypatch):
    seen = {}
    import mmft.cli as cli

    real = cli.train

    def spy(cfg, *a, **kw):
        seen["cfg"] = cfg
        return real(cfg, *a, **kw)

    monkeypatch.setattr(cli, "train", spy)
    run(["train", "-input", data / "train.txt", "-output", data / "d", "-dim", 5], capsys)
    assert seen["cfg"].threads == 4 and seen["cfg"].min_count == 1


def test_additive_without_features_fails(data, capsys):
    code, _, err = run(["train", "-input", data / "train.txt", "-output", data / "x",
                        "-fusion", "additive"], capsys)
    assert code != 0
    assert len(err.strip().splitlines()) == 1


@pytest.mark.parametrize("argv", [
    ["train", "-input", "a.txt"],
    ["train", "-input", "a.txt", "-output", "m", "-bogus", "1"],
    ["frobnicate"],
    ["train", "-input", "{d}/train.txt", "-output", "m", "-fusion", "text", "-gate", "text"],
    ["train", "-input", "{d}/train.txt", "-output", "m", "-fusion", "text", "-features", "{d}/train.vec"],
])
def test_usage_errors(data, capsys, argv):
    code, _, err = run([a.format(d=data) for a in argv], capsys)
    assert code != 0
    assert err.startswith("error:") and len(err.strip().splitlines()) == 1


def test_train_test_predict_continuous(data, capsys):
    code, _, _ = run(["train", "-input", data / "train.txt", "-features", data / "train.vec",
                      "-output", data / "g.bin", "-fusion", "gated", "-gate", "visual", "-dim", 10,
                      "-lr", 0.5, "-thread", 1], capsys)
    assert code == 0
    code, out, _ = run(["test", "-model", data / "g.bin", "-input", data / "valid.txt",
                        "-features", data / "valid.vec"], capsys)
    assert code == 0
    n_line, p_line = out.splitlines()
    assert n_line == "N 150"
    assert p_line.startswith("P@1 ") and float(p_line.split()[1]) >= 0.9
    code, out, _ = run(["predict", "-model", data / "g.bin", "-input", data / "valid.txt",
                        "-features", data / "valid.vec", "-k", 2], capsys)
    lines = out.splitlines()
    assert len(lines) == 150
    parts = lines[0].split()
    assert len(parts) == 4 and parts[0].startswith("__label__") and 0 < float(parts[1]) < 1


def test_quantize_then_discretized(data, capsys):
    code, _, _ = run(["quantize", "-input", data / "train.vec", "-output", data / "c.pq",
                      "-pq-n", 2, "-pq-k", 8, "-rspq-r", 2, "-seed", 3,
                      "-corpus", data / "train.txt", "-corpus-output", data / "train.q.txt"], capsys)
    assert code == 0
    cb = load_codebook(data / "c.pq")
    assert (cb.n, cb.k, cb.r) == (2, 8, 2)
    q = read_lines(data / "train.q.txt")
    assert sum(t.startswith("__q__") for t in q[0].split()) == 4
    # features quantized on the fly with the codebook, which is embedded in the model
    code, _, _ = run(["train", "-input", data / "train.txt", "-features", data / "train.vec",
                      "-codebook", data / "c.pq", "-output", data / "q", "-fusion", "discretized",
                      "-dim", 10, "-lr", 0.5, "-alpha", 0.5, "-thread", 1], capsys)
    assert code == 0
    assert load_model(data / "q.bin").codebook is not None
    code, out, _ = run(["test", "-model", data / "q.bin", "-input", data / "valid.txt",
                        "-features", data / "valid.vec"], capsys)
    assert code == 0 and float(out.split()[-1]) >= 0.85
    # pre-quantized corpus path
    code, _, _ = run(["train", "-input", data / "train.q.txt", "-output", data / "q2",
                      "-fusion", "discretized", "-dim", 10, "-lr", 0.5, "-thread", 1], capsys)
    assert code == 0


def test_nn(data, capsys, monkeypatch):
    run(["train", "-input", data / "train.txt", "-output", data / "t", "-dim", 10, "-thread", 1], capsys)
    monkeypatch.setattr("sys.stdin", io.StringIO("w0\nunknown_word\n\nw3\n"))
    code, out, err = run(["nn", "-model", data / "t.bin", "-topn", 3], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "# w0 (cosine)" and lines[4] == "# w3 (cosine)"
    word, sim = lines[1].split()
    assert len(sim.split(".")[1]) == 3
    assert "unknown_word" in err


def test_sweep(data, capsys, tmp_path):
    grid = tmp_path / "g.json"
    grid.write_text(json.dumps({"lr": [0.1, 0.5], "dim": [5, 10]}))
    code, out, err = run(["sweep", "-grid", grid, "-input", data / "train.txt",
                          "-features", data / "train.vec", "-valid", data / "valid.txt",
                          "-valid-features", data / "valid.vec", "-fusion", "additive",
                          "-epoch", 2, "-thread", 1, "-output", tmp_path / "best"], capsys)
    assert code == 0
    best = json.loads(out.splitlines()[0])
    assert best["fusion"] == "additive" and best["lr"] in (0.1, 0.5)
    assert out.splitlines()[1].startswith("P@1 ")
    assert len(err.strip().splitlines()) == 4
    assert (tmp_path / "best.bin").exists()


def test_bad_model_file(tmp_path, capsys):
    (tmp_path / "m.bin").write_bytes(b"XXXX" + bytes(20))
    code, _, err = run(["test", "-model", tmp_path / "m.bin", "-input", tmp_path / "m.bin"], capsys)
    assert code == 1 and "magic" in err

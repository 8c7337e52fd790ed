import numpy as np
import pytest

from mmft.corpus import FeatureTable, documents_from_lines, normalize_rows, vocab_from_lines
from mmft.model import Model, ModelConfig


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


@pytest.fixture
def tiny_corpus(tmp_path):
    lines = [
        "__label__a apple apple banana",
        "__label__b cherry date",
        "__label__a apple fig",
        "__label__b date date cherry",
    ]
    feats = np.array([[1.0, 0.0, 0.0, 0.5], [0.0, 1.0, 0.2, 0.0],
                      [0.9, 0.1, 0.0, 0.4], [0.1, 1.0, 0.3, 0.0]])
    corpus = write_lines(tmp_path / "tiny.txt", lines)
    vec = write_lines(tmp_path / "tiny.vec", [" ".join(map(str, r)) for r in feats])
    return corpus, vec, lines, feats


def random_model(fusion, rng, H=5, K=3, vocab_size=7, visual_dim=8, gate=None,
                 alpha=0.7, n_pseudo=3, scale=0.8, dtype=np.float64):
    """Model with dense random parameters (W nonzero so every gradient path is live)."""
    words = [f"w{i}" for i in range(vocab_size - n_pseudo)] + [f"__q__{i}_0" for i in range(n_pseudo)]
    vocab = vocab_from_lines(["__label__l0 " + " ".join(words)]
                             + [f"__label__l{k}" for k in range(1, K)])
    cfg = ModelConfig(fusion, H, K, visual_dim, gate, alpha)
    m = Model.initialize(cfg, vocab, dtype=dtype)
    m.U[:] = rng.normal(0, scale, m.U.shape)
    if m.V is not None:
        m.V[:] = rng.normal(0, scale, m.V.shape)
    m.W[:] = rng.normal(0, scale, m.W.shape)
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def split_docs(split, vocab):
    return documents_from_lines(split.lines, vocab), FeatureTable(normalize_rows(split.features))

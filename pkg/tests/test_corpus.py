import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmft.corpus import (
    CorpusError,
    build_vocab,
    load_documents,
    load_features,
    parse_line,
    text_weights,
    vocab_from_lines,
)

from conftest import write_lines


@pytest.mark.parametrize("line, labels, tokens", [
    ("__label__pad_thai noodles thai", ["pad_thai"], ["noodles", "thai"]),
    ("", [], []),
    ("__label__a __label__b x", ["a", "b"], ["x"]),
    ("x __label__a", [], ["x", "__label__a"]),
    ("  __label__a\tx  y \n", ["a"], ["x", "y"]),
])
def test_parse_line(line, labels, tokens):
    assert parse_line(line) == (labels, tokens)


def test_build_vocab_min_count(tmp_path):
    v = build_vocab(write_lines(tmp_path / "c.txt", ["__label__a x x y"]), min_count=2)
    assert v.words == ["x"]
    assert v.labels == ["a"]


def test_build_vocab_single(tmp_path):
    v = build_vocab(write_lines(tmp_path / "c.txt", ["__label__a x"]), min_count=1)
    assert v.words == ["x"]


def test_build_vocab_ordering():
    v = vocab_from_lines(["__label__a z y x", "__label__a y x", "__label__b x"])
    assert v.word2id == {"x": 0, "y": 1, "z": 2}
    assert v.word_counts == [3, 2, 1]


def test_build_vocab_ties_by_first_occurrence():
    v = vocab_from_lines(["__label__b q p", "__label__a p q r"])
    assert v.words == ["q", "p", "r"]
    assert v.labels == ["b", "a"]


def test_labels_never_dropped():
    v = vocab_from_lines(["__label__rare x x x"], min_count=5)
    assert v.words == []
    assert v.labels == ["rare"]


def test_pseudo_tokens_share_word_namespace():
    v = vocab_from_lines(["__label__a x __q__0_3"])
    assert "__q__0_3" in v.word2id
    assert v.pseudo_mask().tolist() == [False, True]


def test_build_vocab_errors(tmp_path):
    with pytest.raises(CorpusError):
        build_vocab(tmp_path / "missing.txt")
    with pytest.raises(CorpusError):
        build_vocab(write_lines(tmp_path / "c.txt", ["no labels here", "none"]))


def test_build_vocab_deterministic(tiny_corpus):
    corpus, *_ = tiny_corpus
    assert build_vocab(corpus) == build_vocab(corpus)


def test_documents_drop_oov(tiny_corpus, tmp_path):
    corpus, *_ = tiny_corpus
    vocab = build_vocab(corpus, min_count=2)
    docs = load_documents(write_lines(tmp_path / "t.txt", ["__label__b apple kiwi date", "__label__zz"]), vocab)
    assert [vocab.words[t] for t in docs[0].tokens] == ["apple", "date"]
    assert docs[0].labels == [vocab.label2id["b"]]
    assert docs[1].labels == [] and docs[1].tokens == []
    assert [d.line_index for d in docs] == [0, 1]


def test_load_features_normalizes(tmp_path):
    t = load_features(write_lines(tmp_path / "f.vec", ["3 4", "0 0"]), n_lines=2)
    np.testing.assert_allclose(t.rows[0], [0.6, 0.8])
    assert t.rows[1].tolist() == [0.0, 0.0]
    assert t.dim == 2


def test_load_features_wide(tmp_path):
    rng = np.random.default_rng(0)
    row = " ".join(f"{v:.6f}" for v in rng.normal(size=2048))
    t = load_features(write_lines(tmp_path / "f.vec", [row]))
    assert t.dim == 2048


@pytest.mark.parametrize("lines, n", [
    (["1 2", "1 2 3"], 2),
    (["1 2", "1 x"], 2),
    (["1 2"], 3),
])
def test_load_features_errors(tmp_path, lines, n):
    with pytest.raises(CorpusError):
        load_features(write_lines(tmp_path / "f.vec", lines), n_lines=n)


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=1, max_size=20))
def test_feature_rows_unit_or_zero(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("f") / "f.vec"
    write_lines(path, [" ".join(repr(v) for v in r) for r in rows])
    norms = np.linalg.norm(load_features(path).rows, axis=1)
    assert np.all((np.abs(norms - 1) < 1e-6) | (norms == 0))


@pytest.mark.parametrize("tokens, expected", [
    ([1, 2], {1: 0.5, 2: 0.5}),
    ([1, 1, 2, 2], {1: 0.5, 2: 0.5}),
    ([], {}),
    ([4, 4, 4, 9], {4: 0.75, 9: 0.25}),
])
def test_text_weights(tokens, expected):
    assert text_weights(tokens) == expected


@given(st.lists(st.integers(0, 50), min_size=1, max_size=200))
def test_text_weights_sum_to_one(tokens):
    assert abs(sum(text_weights(tokens).values()) - 1.0) <= 1e-12

"""Corpus parsing, vocabulary construction and continuous feature loading.

Corpora use the fastText line format: one document per line, labels given as
leading ``__label__``-prefixed tokens, words separated by whitespace.
Continuous features live in a sidecar file with one space-separated vector
per corpus line.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LABEL_PREFIX = "__label__"
PSEUDO_PREFIX = "__q__"


class CorpusError(ValueError):
    """Raised for malformed corpus or feature files."""


def parse_line(line: str) -> tuple[list[str], list[str]]:
    """Split a corpus line into ``(labels, tokens)``.

    Only the leading run of ``__label__`` tokens counts as labels; a label
    marker appearing after the first word is kept as an ordinary word.
    """
    parts = line.split()
    labels: list[str] = []
    i = 0
    while i < len(parts) and parts[i].startswith(LABEL_PREFIX):
        labels.append(parts[i][len(LABEL_PREFIX):])
        i += 1
    return labels, parts[i:]


@dataclass
class Vocabulary:
    """Word and label dictionaries.

    Words (including ``__q__`` pseudo-tokens) and labels are separate id
    spaces, each dense from 0 and ordered by descending count with ties
    broken by first occurrence.
    """

    words: list[str] = field(default_factory=list)
    word_counts: list[int] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    label_counts: list[int] = field(default_factory=list)
    min_count: int = 1

    def __post_init__(self) -> None:
        self.word2id = {w: i for i, w in enumerate(self.words)}
        self.label2id = {w: i for i, w in enumerate(self.labels)}

    @property
    def nwords(self) -> int:
        return len(self.words)

    @property
    def nlabels(self) -> int:
        return len(self.labels)

    def pseudo_mask(self) -> np.ndarray:
        """Boolean array marking pseudo-token word ids."""
        return np.array([w.startswith(PSEUDO_PREFIX) for w in self.words], dtype=np.bool_)

    def word_ids(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to ids, silently dropping out-of-vocabulary ones."""
        get = self.word2id.get
        return [i for i in map(get, tokens) if i is not None]

    def label_ids(self, labels: Iterable[str]) -> list[int]:
        get = self.label2id.get
        return [i for i in map(get, labels) if i is not None]


def _ranked(counter: Counter) -> list[tuple[str, int]]:
    # Counter preserves first-insertion order and sorted() is stable.
    return sorted(counter.items(), key=lambda kv: -kv[1])


def vocab_from_lines(lines: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Build a :class:`Vocabulary` from an iterable of corpus lines."""
    wc: Counter = Counter()
    lc: Counter = Counter()
    labeled = 0
    for line in lines:
        labels, tokens = parse_line(line)
        if labels:
            labeled += 1
        lc.update(labels)
        wc.update(tokens)
    if labeled == 0:
        raise CorpusError("corpus contains no labeled lines")
    words = [(w, c) for w, c in _ranked(wc) if c >= min_count]
    labels = _ranked(lc)
    return Vocabulary(
        words=[w for w, _ in words],
        word_counts=[c for _, c in words],
        labels=[w for w, _ in labels],
        label_counts=[c for _, c in labels],
        min_count=min_count,
    )


def build_vocab(corpus_path: str | Path, min_count: int = 1) -> Vocabulary:
    """Read a corpus file and build its vocabulary.

    Words seen fewer than ``min_count`` times are dropped; labels are
    always kept.
    """
    try:
        with open(corpus_path, encoding="utf-8") as f:
            return vocab_from_lines(f, min_count)
    except OSError as e:
        raise CorpusError(f"cannot read corpus {corpus_path}: {e}") from e


@dataclass
class Document:
    tokens: list[int]
    labels: list[int]
    line_index: int


def documents_from_lines(lines: Iterable[str], vocab: Vocabulary) -> list[Document]:
    """Resolve corpus lines against ``vocab``; unknown words and labels are dropped."""
    docs = []
    for i, line in enumerate(lines):
        labels, tokens = parse_line(line)
        docs.append(Document(vocab.word_ids(tokens), vocab.label_ids(labels), i))
    return docs


def read_lines(path: str | Path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as f:
            return [line.rstrip("\n") for line in f]
    except OSError as e:
        raise CorpusError(f"cannot read {path}: {e}") from e


def load_documents(corpus_path: str | Path, vocab: Vocabulary) -> list[Document]:
    return documents_from_lines(read_lines(corpus_path), vocab)


def text_weights(tokens: Sequence[int]) -> dict[int, float]:
    """Normalized bag-of-words weights.

    Each distinct id gets ``count / len(tokens)`` (counts, not binary
    presence), so the weights sum to one for a nonempty document.
    """
    if not tokens:
        return {}
    n = len(tokens)
    return {t: c / n for t, c in Counter(tokens).items()}


@dataclass
class FeatureTable:
    """Row-aligned continuous features, each row unit-norm or all zero."""

    rows: np.ndarray

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]


def normalize_rows(x: np.ndarray) -> np.ndarray:
    # pre-scale by the largest magnitude so tiny or huge rows don't under/overflow the norm
    scale = np.abs(x).max(axis=1, keepdims=True)
    x = np.divide(x, scale, out=np.zeros_like(x), where=scale > 0)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def load_features(path: str | Path, n_lines: int | None = None) -> FeatureTable:
    """Load a sidecar feature file and unit-normalize every nonzero row.

    Args:
        path: text file, one space-separated vector per line, no header.
        n_lines: expected row count (the corpus line count), if known.

    Raises:
        CorpusError: unreadable file, ragged rows, non-numeric fields or a
            row count that does not match ``n_lines``.
    """
    rows = []
    dim = None
    for lineno, line in enumerate(read_lines(path), 1):
        try:
            vec = [float(v) for v in line.split()]
        except ValueError as e:
            raise CorpusError(f"{path}:{lineno}: non-numeric field ({e})") from e
        if dim is None:
            dim = len(vec)
            if dim == 0:
                raise CorpusError(f"{path}:{lineno}: empty feature vector")
        elif len(vec) != dim:
            raise CorpusError(f"{path}:{lineno}: expected {dim} fields, got {len(vec)}")
        rows.append(vec)
    if n_lines is not None and len(rows) != n_lines:
        raise CorpusError(f"{path}: {len(rows)} feature rows for {n_lines} corpus lines")
    if not rows:
        raise CorpusError(f"{path}: no feature rows")
    return FeatureTable(normalize_rows(np.asarray(rows, dtype=np.float64)))


def save_features(path: str | Path, rows: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")

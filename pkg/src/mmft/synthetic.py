"""Synthetic multi-modal corpora with known generating rules.

These back the test and benchmark suites: each generator returns corpus
lines in the fastText format plus aligned raw feature rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import normalize_rows


@dataclass
class SyntheticSplit:
    lines: list[str]
    features: np.ndarray  # raw rows, not yet unit-normalized
    classes: np.ndarray

    def __len__(self) -> int:
        return len(self.lines)


def fusion_task(n_docs: int, seed: int = 0, vocab_size: int = 100, doc_len: int = 10,
                n_planted: int = 3, visual_dim: int = 16, sigma: float = 0.5) -> SyntheticSplit:
    """Four classes formed by a text bit and a visual bit.

    Words ``w0..w{n_planted-1}`` signal text bit 0 and the next
    ``n_planted`` words signal bit 1; each document carries ``n_planted``
    signal words and fills up to ``doc_len`` with uniform noise words. The
    visual bit picks a Gaussian centred at ``-1`` or ``+1`` in every
    coordinate. Neither modality alone can do better than chance on the
    other bit, so single-modality accuracy is capped at 0.5.
    """
    rng = np.random.default_rng(seed)
    tbits = rng.integers(0, 2, n_docs)
    vbits = rng.integers(0, 2, n_docs)
    classes = 2 * tbits + vbits
    noise_words = np.arange(2 * n_planted, vocab_size)
    lines = []
    for t, c in zip(tbits, classes):
        signal = rng.integers(0, n_planted, n_planted) + t * n_planted
        noise = rng.choice(noise_words, doc_len - n_planted)
        words = np.concatenate([signal, noise])
        rng.shuffle(words)
        lines.append(f"__label__c{c} " + " ".join(f"w{w}" for w in words))
    means = np.where(vbits[:, None] == 1, 1.0, -1.0)
    feats = means + sigma * rng.standard_normal((n_docs, visual_dim))
    return SyntheticSplit(lines, feats, classes)


def many_class_task(n_docs: int, n_classes: int = 100, visual_dim: int = 512, seed: int = 0,
                    vocab_size: int = 10_000, doc_len: int = 10, sigma: float = 1.0) -> SyntheticSplit:
    """Large throughput corpus: per-class word pools and Gaussian feature clusters."""
    rng = np.random.default_rng(seed)
    classes = rng.integers(0, n_classes, n_docs)
    pool = vocab_size // n_classes
    centres = rng.standard_normal((n_classes, visual_dim))
    lines = []
    for c in classes:
        own = rng.integers(0, pool, doc_len // 2) + c * pool
        other = rng.integers(0, vocab_size, doc_len - doc_len // 2)
        lines.append(f"__label__c{c} " + " ".join(f"w{w}" for w in np.concatenate([own, other])))
    feats = centres[classes] + sigma * rng.standard_normal((n_docs, visual_dim))
    return SyntheticSplit(lines, feats, classes)


def planted_cooccurrence_task(n_docs: int, n_classes: int = 4, words_per_class: int = 8,
                              noise_vocab: int = 200, doc_len: int = 10, visual_dim: int = 8,
                              seed: int = 0) -> SyntheticSplit:
    """Classes with exclusive planted words and well-separated visual clusters.

    Each class owns ``words_per_class`` words (``c{c}_w{i}``) and a feature
    cluster at a distinct one-hot direction, so the quantized pseudo-tokens
    of that cluster only ever co-occur with the class's planted words and
    shared noise.
    """
    rng = np.random.default_rng(seed)
    classes = rng.integers(0, n_classes, n_docs)
    n_signal = doc_len // 2
    lines = []
    for c in classes:
        own = rng.integers(0, words_per_class, n_signal)
        noise = rng.integers(0, noise_vocab, doc_len - n_signal)
        toks = [f"c{c}_w{i}" for i in own] + [f"n{i}" for i in noise]
        rng.shuffle(toks)
        lines.append(f"__label__c{c} " + " ".join(toks))
    centres = np.zeros((n_classes, visual_dim))
    for c in range(n_classes):
        centres[c, c % visual_dim] = 4.0
        centres[c, (c + n_classes) % visual_dim] = 4.0
    feats = centres[classes] + 0.3 * rng.standard_normal((n_docs, visual_dim))
    return SyntheticSplit(lines, feats, classes)


def unit_rows(split: SyntheticSplit) -> np.ndarray:
    return normalize_rows(split.features)

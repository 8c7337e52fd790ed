"""Prediction, P@1 evaluation and embedding nearest-neighbour queries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Document, FeatureTable
from .model import Model, ModelError, forward


@dataclass
class Prediction:
    """Top-k ``(label_id, probability)`` pairs, most probable first."""

    ranked: list[tuple[int, float]]

    def labels(self, model: Model) -> list[tuple[str, float]]:
        return [(model.vocab.labels[i], p) for i, p in self.ranked]

    @property
    def top(self) -> int:
        return self.ranked[0][0]


def _row(features: FeatureTable | np.ndarray | None, i: int):
    if features is None:
        return None
    rows = features.rows if isinstance(features, FeatureTable) else features
    return rows[i]


def predict(model: Model, doc: Document | Sequence[int], feature_row: np.ndarray | None = None,
            k: int = 1) -> Prediction:
    """Top-``k`` labels; ties are ordered by label id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    probs = forward(model, doc, feature_row)
    order = np.lexsort((np.arange(probs.size), -probs))[:k]
    return Prediction([(int(i), float(probs[i])) for i in order])


def evaluate(model: Model, docs: Sequence[Document], features: FeatureTable | None = None) -> float:
    """Precision at one: share of documents whose top label is among its gold labels."""
    if not docs:
        raise ValueError("cannot evaluate on an empty corpus")
    if model.config.fusion.uses_visual and features is None:
        raise ModelError(f"{model.config.fusion.label} model needs test features")
    hits = 0
    for i, doc in enumerate(docs):
        if predict(model, doc, _row(features, i), 1).top in doc.labels:
            hits += 1
    return hits / len(docs)


def nearest_neighbors(model: Model, query: str, topn: int = 10,
                      restrict: str = "words") -> list[tuple[str, float]]:
    """Words whose embedding rows are most cosine-similar to ``query``'s row.

    ``restrict="words"`` drops pseudo-tokens from the candidates; ``"all"``
    keeps them. The query itself is never returned.
    """
    if restrict not in ("words", "all"):
        raise ValueError("restrict must be 'words' or 'all'")
    qid = model.vocab.word2id.get(query)
    if qid is None:
        raise KeyError(f"unknown token {query!r}")
    U = model.U.astype(np.float64)
    norms = np.linalg.norm(U, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    sims = (U @ U[qid]) / (safe * safe[qid])
    sims[norms == 0] = 0.0
    np.clip(sims, -1.0, 1.0, out=sims)
    keep = np.ones(len(sims), dtype=bool)
    keep[qid] = False
    if restrict == "words":
        keep &= ~model.pseudo
    ids = np.flatnonzero(keep)
    ids = ids[np.lexsort((ids, -sims[ids]))][:topn]
    return [(model.vocab.words[i], float(sims[i])) for i in ids]


def format_neighbors(neighbors: list[tuple[str, float]]) -> str:
    return "\n".join(f"{w} {s:.3f}" for w, s in neighbors)

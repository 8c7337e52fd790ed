"""Parameters and forward pass for the text, continuous and fused classifiers.

All variants share the same shape::

    logits = W . fuse(U x_text, V x_visual)

where ``x_text`` is the normalized bag of words, ``x_visual`` a unit-norm
continuous feature row and ``fuse`` one of the fusion rules below. The
discretized variant has no ``V``: pseudo-tokens are rows of ``U`` bagged
separately from the words and added with weight ``alpha``.

Bilinear variants flatten the outer product row-major with the text side
indexing rows, so ``h[i * H + j] = text[i] * visual[j]`` and ``W`` has
``H * H`` columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Sequence

import numpy as np

from .corpus import Document, Vocabulary, text_weights


class Fusion(IntEnum):
    TEXT = 0
    CONTINUOUS = 1
    ADDITIVE = 2
    MAX = 3
    GATED = 4
    BILINEAR = 5
    BILINEAR_GATED = 6
    DISCRETIZED = 7

    @classmethod
    def parse(cls, name: "str | Fusion") -> "Fusion":
        if isinstance(name, Fusion):
            return name
        try:
            return cls[name.strip().upper().replace("-", "_")]
        except KeyError:
            raise ValueError(
                f"unknown fusion {name!r}; expected one of {[f.name.lower() for f in cls]}"
            ) from None

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def uses_text(self) -> bool:
        return self is not Fusion.CONTINUOUS

    @property
    def uses_visual(self) -> bool:
        return self not in (Fusion.TEXT, Fusion.DISCRETIZED)

    @property
    def gated(self) -> bool:
        return self in (Fusion.GATED, Fusion.BILINEAR_GATED)

    @property
    def bilinear(self) -> bool:
        return self in (Fusion.BILINEAR, Fusion.BILINEAR_GATED)


class GateSide(IntEnum):
    TEXT = 0
    VISUAL = 1

    @classmethod
    def parse(cls, name: "str | GateSide") -> "GateSide":
        if isinstance(name, GateSide):
            return name
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown gate side {name!r}; expected text or visual") from None


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    fusion: Fusion
    dim: int
    label_count: int
    visual_dim: int = 0
    gate_side: GateSide | None = None
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "fusion", Fusion.parse(self.fusion))
        # stored in single precision, so keep the in-memory value identical
        object.__setattr__(self, "alpha", float(np.float32(self.alpha)))
        if self.gate_side is not None:
            object.__setattr__(self, "gate_side", GateSide.parse(self.gate_side))
        if self.dim < 1:
            raise ModelError("dim must be >= 1")
        if self.label_count < 1:
            raise ModelError("label_count must be >= 1")
        if self.fusion.gated and self.gate_side is None:
            raise ModelError(f"{self.fusion.label} fusion requires a gate side")
        if not self.fusion.gated and self.gate_side is not None:
            raise ModelError(f"gate side is only valid for gated fusions, not {self.fusion.label}")
        if self.fusion.uses_visual and self.visual_dim < 1:
            raise ModelError(f"{self.fusion.label} fusion requires visual_dim >= 1")

    @property
    def hidden_out(self) -> int:
        return self.dim * self.dim if self.fusion.bilinear else self.dim

    def with_(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


class Model:
    """Embedding ``U`` (words and pseudo-tokens), projection ``V`` and output ``W``."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, U: np.ndarray,
                 V: np.ndarray | None, W: np.ndarray, codebook=None):
        H = config.dim
        if U.shape != (vocab.nwords, H):
            raise ModelError(f"U has shape {U.shape}, expected {(vocab.nwords, H)}")
        if W.shape != (config.label_count, config.hidden_out):
            raise ModelError(f"W has shape {W.shape}, expected {(config.label_count, config.hidden_out)}")
        if config.fusion.uses_visual:
            if V is None or V.shape != (H, config.visual_dim):
                raise ModelError(f"V must have shape {(H, config.visual_dim)}")
        elif V is not None:
            raise ModelError(f"{config.fusion.label} fusion has no V matrix")
        self.config = config
        self.vocab = vocab
        self.U = U
        self.V = V
        self.W = W
        self.codebook = codebook
        self.pseudo = vocab.pseudo_mask()
        self.train_losses: list[float] = []

    @classmethod
    def initialize(cls, config: ModelConfig, vocab: Vocabulary, seed: int = 0,
                   dtype=np.float32, codebook=None) -> "Model":
        """Fresh parameters: U and V uniform in [-1/H, 1/H], W zero."""
        rng = np.random.default_rng(seed)
        H = config.dim
        U = rng.uniform(-1.0 / H, 1.0 / H, size=(vocab.nwords, H)).astype(dtype)
        V = None
        if config.fusion.uses_visual:
            V = rng.uniform(-1.0 / H, 1.0 / H, size=(H, config.visual_dim)).astype(dtype)
        W = np.zeros((config.label_count, config.hidden_out), dtype=dtype)
        return cls(config, vocab, U, V, W, codebook)

    @property
    def dtype(self):
        return self.U.dtype

    def astype(self, dtype) -> "Model":
        V = None if self.V is None else self.V.astype(dtype)
        return Model(self.config, self.vocab, self.U.astype(dtype), V, self.W.astype(dtype),
                     self.codebook)

    def copy(self) -> "Model":
        return self.astype(self.dtype)

    def split_tokens(self, tokens: Sequence[int]) -> tuple[list[int], list[int]]:
        """Separate ordinary words from pseudo-tokens."""
        words, pseudo = [], []
        for t in tokens:
            (pseudo if self.pseudo[t] else words).append(t)
        return words, pseudo


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def bag(U: np.ndarray, tokens: Sequence[int]) -> np.ndarray:
    out = np.zeros(U.shape[1], dtype=U.dtype)
    for t, w in text_weights(tokens).items():
        out += U.dtype.type(w) * U[t]
    return out


def hidden_text(model: Model, tokens: Sequence[int]) -> np.ndarray:
    """Weighted mean of the embedding rows of ``tokens``; zero when empty."""
    return bag(model.U, tokens)


def hidden_visual(model: Model, feature_row: np.ndarray) -> np.ndarray:
    feature_row = np.asarray(feature_row, dtype=model.dtype)
    if model.V is None:
        raise ModelError(f"{model.config.fusion.label} model has no visual projection")
    if feature_row.shape != (model.V.shape[1],):
        raise ModelError(f"feature row has length {feature_row.shape}, expected {model.V.shape[1]}")
    return model.V @ feature_row


def fuse(kind: Fusion | str, ht: np.ndarray, hv: np.ndarray,
         gate_side: GateSide | str | None = None) -> np.ndarray:
    """Combine text and visual hidden vectors.

    ``gated`` multiplies one side by the sigmoid of the other
    (``gate_side`` names the side passed through the sigmoid).
    ``bilinear_gated`` applies that sigmoid before the outer product.
    """
    kind = Fusion.parse(kind)
    if ht.shape != hv.shape:
        raise ModelError(f"hidden size mismatch: {ht.shape} vs {hv.shape}")
    if kind.gated:
        gate_side = GateSide.parse(gate_side if gate_side is not None else GateSide.TEXT)
    if kind is Fusion.ADDITIVE:
        return ht + hv
    if kind is Fusion.MAX:
        return np.maximum(ht, hv)
    if kind is Fusion.GATED:
        return sigmoid(ht) * hv if gate_side is GateSide.TEXT else ht * sigmoid(hv)
    if kind is Fusion.BILINEAR:
        return np.outer(ht, hv).ravel()
    if kind is Fusion.BILINEAR_GATED:
        if gate_side is GateSide.TEXT:
            return np.outer(sigmoid(ht), hv).ravel()
        return np.outer(ht, sigmoid(hv)).ravel()
    raise ModelError(f"{kind.label} is not a two-modality fusion")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = np.exp(z - z.max())
    return z / z.sum()


def scores(model: Model, hidden: np.ndarray) -> np.ndarray:
    if hidden.shape != (model.W.shape[1],):
        raise ModelError(f"hidden length {hidden.shape} does not match W {model.W.shape}")
    return model.W @ hidden


def nll(probs: np.ndarray, label: int) -> float:
    return -math.log(probs[label])


def log_softmax_nll(logits: np.ndarray, label: int) -> float:
    """``-log softmax(logits)[label]`` computed without forming probabilities."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max()
    return float(m + math.log(np.exp(z - m).sum()) - z[label])


def hidden(model: Model, tokens: Sequence[int], feature_row: np.ndarray | None = None) -> np.ndarray:
    """Fused hidden vector fed to ``W``."""
    cfg = model.config
    kind = cfg.fusion
    if kind.uses_visual and feature_row is None:
        raise ModelError(f"{kind.label} fusion needs a feature row")
    if kind is Fusion.TEXT:
        return hidden_text(model, tokens)
    if kind is Fusion.DISCRETIZED:
        words, pseudo = model.split_tokens(tokens)
        return bag(model.U, words) + model.dtype.type(cfg.alpha) * bag(model.U, pseudo)
    hv = hidden_visual(model, feature_row)
    if kind is Fusion.CONTINUOUS:
        return hv
    return fuse(kind, hidden_text(model, tokens), hv, cfg.gate_side)


def logits(model: Model, doc: Document | Sequence[int], feature_row: np.ndarray | None = None) -> np.ndarray:
    tokens = doc.tokens if isinstance(doc, Document) else doc
    return scores(model, hidden(model, tokens, feature_row))


def forward(model: Model, doc: Document | Sequence[int], feature_row: np.ndarray | None = None) -> np.ndarray:
    """Class probabilities for one document."""
    return softmax(logits(model, doc, feature_row))


def loss(model: Model, doc: Document | Sequence[int], label: int,
         feature_row: np.ndarray | None = None) -> float:
    return log_softmax_nll(logits(model, doc, feature_row), label)

"""SGD training with linear learning-rate decay and lock-free worker threads."""

from __future__ import annotations

import itertools
import logging
import sys
import threading
import time
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .corpus import Document, FeatureTable, Vocabulary
from .model import Fusion, GateSide, Model, ModelConfig, ModelError

log = logging.getLogger(__name__)

LR_GRID = (0.1, 0.25, 0.5, 1.0, 2.0)
EPOCH_GRID = (5, 10, 20)
ALPHA_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)
DIM_GRID = (20, 100)
GATE_GRID = ("text", "visual")


class TrainError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    fusion: str = "text"
    dim: int = 100
    lr: float = 0.1
    epochs: int = 5
    threads: int = 4
    min_count: int = 1
    seed: int = 0
    gate_side: str | None = None
    alpha: float = 1.0

    def __post_init__(self):
        Fusion.parse(self.fusion)
        if self.lr <= 0:
            raise TrainError("lr must be > 0")
        if self.epochs < 1:
            raise TrainError("epochs must be >= 1")
        if self.threads < 1:
            raise TrainError("threads must be >= 1")
        if self.min_count < 1:
            raise TrainError("min_count must be >= 1")

    def model_config(self, label_count: int, visual_dim: int = 0) -> ModelConfig:
        fusion = Fusion.parse(self.fusion)
        gate = self.gate_side
        if fusion.gated and gate is None:
            gate = "text"
        if not fusion.gated:
            gate = None
        return ModelConfig(fusion, self.dim, label_count,
                           visual_dim if fusion.uses_visual else 0, gate, self.alpha)

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Progress:
    tokens_processed: int
    budget: int

    @property
    def fraction(self) -> float:
        if self.budget <= 0:
            return 1.0
        return min(max(self.tokens_processed / self.budget, 0.0), 1.0)


def lr_at(lr0: float, progress: Progress | float) -> float:
    """Learning rate after a fraction of the token budget has been consumed."""
    p = progress.fraction if isinstance(progress, Progress) else min(max(progress, 0.0), 1.0)
    return lr0 * (1.0 - p)


@dataclass
class PackedCorpus:
    """Flat arrays consumed by the compiled kernels.

    ``labels`` holds the first gold label of each document (-1 if none).
    """

    tokens: np.ndarray
    offsets: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_documents(cls, docs: Sequence[Document]) -> "PackedCorpus":
        lengths = np.fromiter((len(d.tokens) for d in docs), dtype=np.int64, count=len(docs))
        offsets = np.zeros(len(docs) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        tokens = np.fromiter(itertools.chain.from_iterable(d.tokens for d in docs),
                             dtype=np.int64, count=int(offsets[-1]))
        labels = np.array([d.labels[0] if d.labels else -1 for d in docs], dtype=np.int64)
        return cls(tokens, offsets, labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def work(self) -> int:
        # one unit per token plus one per line end
        return int(self.offsets[-1]) + len(self)


def _arrays(model: Model):
    dummy = np.zeros((1, 1), dtype=model.dtype)
    V = model.V if model.V is not None else dummy
    gate = int(model.config.gate_side) if model.config.gate_side is not None else 0
    return V, int(model.config.fusion), gate, float(model.config.alpha)


def step(model: Model, doc: Document | Sequence[int], label: int,
         feature_row: np.ndarray | None, lr: float) -> float:
    """One in-place SGD update on a single document; returns its pre-update loss."""
    tokens = np.asarray(doc.tokens if isinstance(doc, Document) else doc, dtype=np.int64)
    V, fusion, gate, alpha = _arrays(model)
    if model.config.fusion.uses_visual:
        if feature_row is None:
            raise ModelError(f"{model.config.fusion.label} fusion needs a feature row")
        x = np.asarray(feature_row, dtype=model.dtype)
    else:
        x = np.zeros(1, dtype=model.dtype)
    return _kernels.single_step(model.U, V, model.W, fusion, gate, alpha, model.pseudo,
                                tokens, int(label), x, float(lr))


def gradients(model: Model, doc: Document | Sequence[int], label: int,
              feature_row: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Gradient of the document loss w.r.t. U, V and W, read off a unit SGD step."""
    probe = model.copy()
    step(probe, doc, label, feature_row, 1.0)
    out = {"U": model.U - probe.U, "W": model.W - probe.W}
    if model.V is not None:
        out["V"] = model.V - probe.V
    return out


def _check_features(fusion: Fusion, n_docs: int, features: FeatureTable | None):
    if fusion.uses_visual:
        if features is None:
            raise TrainError(f"{fusion.label} fusion requires a feature table")
        if len(features) != n_docs:
            raise TrainError(f"{len(features)} feature rows for {n_docs} documents")


def train(
    config: TrainConfig,
    docs: Sequence[Document],
    vocab: Vocabulary,
    features: FeatureTable | None = None,
    codebook=None,
    verbose: bool = False,
) -> Model:
    """Train a model on resolved documents.

    Documents are split into ``config.threads`` seeded partitions; each
    worker thread reshuffles its partition every epoch and updates the
    shared parameters without locking. With one thread the result is
    bit-for-bit reproducible for a fixed seed.

    For discretized fusion the documents must already carry their
    pseudo-tokens (see :func:`mmft.quantizer.quantized_lines`).
    """
    if not docs:
        raise TrainError("empty training corpus")
    if vocab.nlabels == 0:
        raise TrainError("vocabulary has no labels")
    for d in docs:
        for lab in d.labels:
            if not 0 <= lab < vocab.nlabels:
                raise TrainError(f"label id {lab} is absent from the vocabulary")
    _check_features(Fusion.parse(config.fusion), len(docs), features)
    visual_dim = features.dim if features is not None else 0
    mconfig = config.model_config(vocab.nlabels, visual_dim)

    model = Model.initialize(mconfig, vocab, seed=config.seed, codebook=codebook)
    packed = PackedCorpus.from_documents(docs)
    if mconfig.fusion.uses_visual:
        feats = np.ascontiguousarray(features.rows, dtype=model.dtype)
    else:
        feats = np.zeros((1, 1), dtype=model.dtype)
    V, fusion, gate, alpha = _arrays(model)

    budget = float(config.epochs * packed.work)
    counters = np.zeros(config.threads, dtype=np.int64)
    ema = np.full(config.threads, -1.0)
    epoch_loss = np.zeros((config.threads, config.epochs))
    epoch_n = np.zeros((config.threads, config.epochs))

    order = np.random.default_rng(config.seed).permutation(len(packed))
    parts = np.array_split(order, config.threads)

    def work(w: int) -> None:
        rng = np.random.default_rng([config.seed, w])
        part = parts[w].copy()
        n_labeled = int((packed.labels[part] >= 0).sum())
        for ep in range(config.epochs):
            rng.shuffle(part)
            epoch_loss[w, ep] = _kernels.run_epoch(
                model.U, V, model.W, fusion, gate, alpha, model.pseudo,
                packed.tokens, packed.offsets, packed.labels, feats,
                part, float(config.lr), budget, counters, w, ema)
            epoch_n[w, ep] = n_labeled

    start = time.perf_counter()
    if config.threads == 1:
        work(0)
    else:
        errors: list[BaseException] = []

        def guarded(w: int) -> None:
            try:
                work(w)
            except BaseException as e:  # surfaced in the calling thread
                errors.append(e)

        workers = [threading.Thread(target=guarded, args=(w,), daemon=True)
                   for w in range(config.threads)]
        for t in workers:
            t.start()
        while any(t.is_alive() for t in workers):
            for t in workers:
                t.join(timeout=0.5)
            if verbose:
                _report(counters, budget, config, ema, start)
        if errors:
            raise errors[0]
    if verbose:
        _report(counters, budget, config, ema, start)
        sys.stderr.write("\n")

    with np.errstate(invalid="ignore"):
        per_epoch = epoch_loss.sum(axis=0) / np.maximum(epoch_n.sum(axis=0), 1)
    model.train_losses = per_epoch.tolist()
    log.info("trained %s in %.2fs", mconfig.fusion.label, time.perf_counter() - start)
    return model


def _report(counters, budget, config, ema, start) -> None:
    done = int(counters.sum())
    elapsed = max(time.perf_counter() - start, 1e-9)
    progress = Progress(done, int(budget))
    live = ema[ema >= 0]
    running = float(live.mean()) if live.size else float("nan")
    sys.stderr.write(
        f"\rProgress: {100 * progress.fraction:5.1f}%  tokens/sec: {done / elapsed:10.0f}"
        f"  lr: {lr_at(config.lr, progress):.6f}  loss: {running:.6f}"
    )
    sys.stderr.flush()


def grid_configs(base: TrainConfig, grid: Mapping[str, Iterable]) -> list[TrainConfig]:
    """Enumerate ``grid`` in declaration order, first axis slowest.

    Axis names are :class:`TrainConfig` fields; ``epoch`` and ``gate`` are
    accepted as aliases for ``epochs`` and ``gate_side``.
    """
    aliases = {"epoch": "epochs", "gate": "gate_side"}
    names = {f.name for f in fields(TrainConfig)}
    axes = []
    for key, values in grid.items():
        name = aliases.get(key, key)
        if name not in names:
            raise TrainError(f"unknown grid axis {key!r}")
        values = list(values)
        if not values:
            raise TrainError(f"grid axis {key!r} is empty")
        axes.append((name, values))
    if not axes:
        raise TrainError("empty grid")
    out = []
    for combo in itertools.product(*(v for _, v in axes)):
        out.append(base.with_(**dict(zip((n for n, _ in axes), combo))))
    return out


def full_grid(gated: bool = False) -> dict[str, tuple]:
    grid = {"lr": LR_GRID, "epochs": EPOCH_GRID, "alpha": ALPHA_GRID, "dim": DIM_GRID}
    if gated:
        grid["gate_side"] = GATE_GRID
    return grid


@dataclass
class SweepResult:
    best: TrainConfig
    best_score: float
    scores: list[tuple[TrainConfig, float]]
    model: Model | None = None


def grid_search(
    configs: Sequence[TrainConfig],
    train_docs: Sequence[Document],
    valid_docs: Sequence[Document],
    vocab: Vocabulary,
    train_features: FeatureTable | None = None,
    valid_features: FeatureTable | None = None,
    codebook=None,
    keep_model: bool = False,
) -> SweepResult:
    """Train every config and keep the one with the best validation P@1.

    Ties go to the earliest config in enumeration order.
    """
    from .inference import evaluate

    if not configs:
        raise TrainError("empty grid")
    scored = []
    best_i, best_score, best_model = -1, -np.inf, None
    for i, cfg in enumerate(configs):
        model = train(cfg, train_docs, vocab, train_features, codebook)
        acc = evaluate(model, valid_docs, valid_features)
        scored.append((cfg, acc))
        log.info("sweep %d/%d %s -> %.4f", i + 1, len(configs), cfg, acc)
        if acc > best_score:
            best_i, best_score = i, acc
            best_model = model if keep_model else None
    return SweepResult(configs[best_i], best_score, scored, best_model)

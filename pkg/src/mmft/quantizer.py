"""Product quantization (PQ) and random-sample PQ (RSPQ) of continuous features.

A codebook splits each (optionally permuted) feature vector into ``n`` equal
subvectors and replaces each by the index of its nearest k-means centroid.
RSPQ repeats this over ``r`` permutations. Every (repetition, slot, centroid)
triple becomes a pseudo-token ``__q__{rho*n + i}_{c}`` that is appended to
the document text and trained like an ordinary word.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .corpus import PSEUDO_PREFIX, CorpusError, FeatureTable, read_lines

MAX_TRAIN_ROWS = 100_000


class QuantizerError(ValueError):
    pass


@numba.njit(cache=True, nogil=True)
def _nearest(points, centroids):
    """Exact squared-Euclidean nearest centroid; ties go to the lowest index."""
    n, d = points.shape
    k = centroids.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for p in range(n):
        best = np.inf
        arg = 0
        for c in range(k):
            s = 0.0
            for j in range(d):
                diff = points[p, j] - centroids[c, j]
                s += diff * diff
            if s < best:
                best = s
                arg = c
        idx[p] = arg
        dist[p] = best
    return idx, dist


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: list[float] = field(default_factory=list)

    def __iter__(self):
        # allows ``centroids, assignments = kmeans(...)``
        return iter((self.centroids, self.assignments))


def kmeans(points: np.ndarray, k: int, max_iters: int = 25, seed: int = 0) -> KMeansResult:
    """Lloyd's k-means.

    Initial centroids are ``k`` distinct rows drawn uniformly with ``seed``
    (with repeats only when there are fewer than ``k`` rows). A cluster left
    empty is repaired by moving in the point farthest from its current
    centroid. Iteration stops after ``max_iters`` rounds or once assignments
    stop changing. ``inertia[t]`` is the assignment cost at round ``t`` and
    never increases.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise QuantizerError("kmeans needs a nonempty 2-d point set")
    if k < 1:
        raise QuantizerError("k must be >= 1")
    n = points.shape[0]
    rng = np.random.default_rng(seed)
    if k <= n:
        init = rng.choice(n, size=k, replace=False)
    else:
        init = np.concatenate([rng.permutation(n), rng.integers(0, n, size=k - n)])
    centroids = points[np.sort(init)].copy()

    history: list[float] = []
    prev = None
    for _ in range(max(1, max_iters)):
        assign, dist = _nearest(points, centroids)
        history.append(float(dist.sum()))
        _repair_empty(assign, dist, k)
        if prev is not None and np.array_equal(assign, prev):
            break
        prev = assign
        centroids = _update(points, assign, centroids)
    return KMeansResult(centroids, assign, history)


def _repair_empty(assign: np.ndarray, dist: np.ndarray, k: int) -> None:
    sizes = np.bincount(assign, minlength=k)
    for c in np.flatnonzero(sizes == 0):
        movable = sizes[assign] > 1
        cand = np.where(movable, dist, -1.0)
        p = int(np.argmax(cand))
        if cand[p] <= 0.0:
            break
        sizes[assign[p]] -= 1
        sizes[c] += 1
        assign[p] = c
        dist[p] = 0.0


def _update(points: np.ndarray, assign: np.ndarray, old: np.ndarray) -> np.ndarray:
    k, d = old.shape
    sums = np.zeros((k, d))
    np.add.at(sums, assign, points)
    sizes = np.bincount(assign, minlength=k)
    out = old.copy()
    live = sizes > 0
    out[live] = sums[live] / sizes[live, None]
    return out


@dataclass
class Codebook:
    """Trained PQ/RSPQ quantizer.

    ``permutations`` has shape ``(r, source_dim)`` and ``centroids`` has
    shape ``(r, n, k, source_dim // n)`` (float32).
    """

    n: int
    k: int
    r: int
    alpha: float
    source_dim: int
    permutations: np.ndarray
    centroids: np.ndarray
    # per (repetition, slot) k-means inertia trace; not serialized
    inertia: list[list[float]] = field(default_factory=list, compare=False, repr=False)

    @property
    def sub_dim(self) -> int:
        return self.source_dim // self.n

    @property
    def tokens_per_vector(self) -> int:
        return self.r * self.n

    def codes(self, vectors: np.ndarray) -> np.ndarray:
        """Nearest-centroid indices, shape ``(rows, r*n)``, repetition-major."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if vectors.shape[1] != self.source_dim:
            raise QuantizerError(
                f"vector dim {vectors.shape[1]} != codebook dim {self.source_dim}"
            )
        out = np.empty((vectors.shape[0], self.r * self.n), dtype=np.int64)
        d = self.sub_dim
        for rho in range(self.r):
            permuted = vectors[:, self.permutations[rho]]
            for i in range(self.n):
                sub = np.ascontiguousarray(permuted[:, i * d:(i + 1) * d])
                out[:, rho * self.n + i], _ = _nearest(sub, self.centroids[rho, i])
        return out

    def encode(self, vector: np.ndarray) -> list[str]:
        vector = np.asarray(vector)
        if vector.ndim != 1:
            raise QuantizerError("encode expects a single vector")
        return code_tokens(self.codes(vector)[0])

    def encode_rows(self, vectors: np.ndarray) -> list[list[str]]:
        return [code_tokens(row) for row in self.codes(vectors)]


def pseudo_token(slot: int, centroid: int) -> str:
    return f"{PSEUDO_PREFIX}{slot}_{centroid}"


def code_tokens(codes) -> list[str]:
    return [pseudo_token(slot, int(c)) for slot, c in enumerate(codes)]


def encode(codebook: Codebook, vector: np.ndarray) -> list[str]:
    """Pseudo-tokens for one vector, ``r*n`` of them, repetition-major."""
    return codebook.encode(vector)


def train_codebook(
    features: FeatureTable | np.ndarray,
    n: int,
    k: int,
    r: int = 1,
    alpha: float = 1.0,
    seed: int = 0,
    max_iters: int = 25,
    max_rows: int = MAX_TRAIN_ROWS,
) -> Codebook:
    """Fit a PQ (``r == 1``) or RSPQ (``r > 1``) codebook.

    Repetition 0 always uses the identity permutation so ``r == 1`` is plain
    PQ; every further repetition draws a uniform permutation from its own
    seeded stream. At most ``max_rows`` rows (seeded subsample) are clustered.
    """
    rows = features.rows if isinstance(features, FeatureTable) else np.asarray(features)
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise QuantizerError("no feature rows to quantize")
    dim = rows.shape[1]
    if n < 1 or n > dim:
        raise QuantizerError(f"subvector count n={n} must be in [1, {dim}]")
    if dim % n:
        raise QuantizerError(f"feature dim {dim} is not divisible by n={n}")
    if k < 1:
        raise QuantizerError("k must be >= 1")
    if r < 1:
        raise QuantizerError("r must be >= 1")

    root = np.random.SeedSequence(seed)
    sample_seq, *rep_seqs = root.spawn(r + 1)
    if rows.shape[0] > max_rows:
        pick = np.random.default_rng(sample_seq).choice(rows.shape[0], max_rows, replace=False)
        rows = rows[np.sort(pick)]

    d = dim // n
    perms = np.empty((r, dim), dtype=np.int64)
    cents = np.empty((r, n, k, d), dtype=np.float32)
    traces = []
    for rho, seq in enumerate(rep_seqs):
        perm_seq, *slot_seqs = seq.spawn(n + 1)
        perms[rho] = np.arange(dim) if rho == 0 else np.random.default_rng(perm_seq).permutation(dim)
        permuted = rows[:, perms[rho]]
        for i, sseq in enumerate(slot_seqs):
            slot_seed = int(sseq.generate_state(1)[0])
            res = kmeans(permuted[:, i * d:(i + 1) * d], k, max_iters, slot_seed)
            cents[rho, i] = res.centroids
            traces.append(res.inertia)
    return Codebook(n, k, r, float(alpha), dim, perms, cents, traces)


def quantized_lines(lines: list[str], features: FeatureTable, codebook: Codebook) -> list[str]:
    """Append each line's pseudo-tokens to it; line order is preserved."""
    if len(lines) != len(features):
        raise CorpusError(f"{len(lines)} corpus lines but {len(features)} feature rows")
    out = []
    for line, toks in zip(lines, codebook.encode_rows(features.rows)):
        line = line.rstrip("\n")
        out.append(" ".join([line, *toks]) if line.strip() else " ".join(toks))
    return out


def emit_quantized_corpus(
    corpus_path: str | Path,
    features: FeatureTable,
    codebook: Codebook,
    out_path: str | Path,
) -> Path:
    lines = quantized_lines(read_lines(corpus_path), features, codebook)
    out_path = Path(out_path)
    with open(out_path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")
    return out_path

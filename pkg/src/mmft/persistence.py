"""Binary model and codebook files.

All integers and floats are little-endian. Matrices are stored row-major in
IEEE-754 single precision; see ``docs/format.md`` for the full layout.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .corpus import Vocabulary
from .model import Fusion, GateSide, Model, ModelConfig
from .quantizer import Codebook

MODEL_MAGIC = b"MMFT"
MODEL_VERSION = 1
CODEBOOK_MAGIC = b"MMPQ"
CODEBOOK_VERSION = 1
NO_GATE = 0xFFFFFFFF


class FormatError(ValueError):
    pass


class _Reader:
    def __init__(self, f: BinaryIO):
        self.f = f

    def raw(self, n: int) -> bytes:
        b = self.f.read(n)
        if len(b) != n:
            raise FormatError("truncated file")
        return b

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.raw(struct.calcsize(fmt)))

    def u32(self) -> int:
        return self.unpack("I")[0]

    def u64(self) -> int:
        return self.unpack("Q")[0]

    def array(self, dtype, shape) -> np.ndarray:
        dtype = np.dtype(dtype).newbyteorder("<")
        n = int(np.prod(shape, dtype=np.int64))
        return np.frombuffer(self.raw(n * dtype.itemsize), dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))


def _f32(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def _check_magic(r: _Reader, magic: bytes, version: int, what: str) -> None:
    got = r.f.read(4)
    if got != magic:
        raise FormatError(f"bad magic {got!r}: not a {what} file")
    v = r.u32()
    if v != version:
        raise FormatError(f"unsupported {what} format version {v} (expected {version})")


# codebook


def write_codebook(f: BinaryIO, cb: Codebook) -> None:
    f.write(CODEBOOK_MAGIC)
    f.write(struct.pack("<IIIIIf", CODEBOOK_VERSION, cb.source_dim, cb.n, cb.k, cb.r, cb.alpha))
    f.write(np.ascontiguousarray(cb.permutations, dtype="<u4").tobytes())
    f.write(_f32(cb.centroids))


def read_codebook(f: BinaryIO) -> Codebook:
    r = _Reader(f)
    _check_magic(r, CODEBOOK_MAGIC, CODEBOOK_VERSION, "codebook")
    dim, n, k, reps = r.unpack("IIII")
    (alpha,) = r.unpack("f")
    if n == 0 or dim % n:
        raise FormatError(f"corrupt codebook header: dim={dim}, n={n}")
    perms = r.array("<u4", (reps, dim)).astype(np.int64)
    cents = r.array("<f4", (reps, n, k, dim // n))
    for p in perms:
        if not np.array_equal(np.sort(p), np.arange(dim)):
            raise FormatError("codebook permutation is not a bijection")
    return Codebook(n, k, reps, float(alpha), dim, perms, cents)


def save_codebook(cb: Codebook, path: str | Path) -> None:
    with open(path, "wb") as f:
        write_codebook(f, cb)


def load_codebook(path: str | Path) -> Codebook:
    with open(path, "rb") as f:
        cb = read_codebook(f)
        if f.read(1):
            raise FormatError("trailing bytes after codebook")
    return cb


# model


def _write_strings(f: BinaryIO, items: list[str], counts: list[int]) -> None:
    f.write(struct.pack("<Q", len(items)))
    for s, c in zip(items, counts):
        b = s.encode("utf-8")
        f.write(struct.pack("<I", len(b)))
        f.write(b)
        f.write(struct.pack("<Q", c))


def _read_strings(r: _Reader) -> tuple[list[str], list[int]]:
    n = r.u64()
    items, counts = [], []
    for _ in range(n):
        items.append(r.raw(r.u32()).decode("utf-8"))
        counts.append(r.u64())
    return items, counts


def write_model(f: BinaryIO, model: Model) -> None:
    cfg = model.config
    gate = NO_GATE if cfg.gate_side is None else int(cfg.gate_side)
    f.write(MODEL_MAGIC)
    f.write(struct.pack("<IIIIfIII", MODEL_VERSION, int(cfg.fusion), cfg.dim, gate, cfg.alpha,
                        cfg.label_count, cfg.visual_dim, model.vocab.min_count))
    _write_strings(f, model.vocab.words, model.vocab.word_counts)
    _write_strings(f, model.vocab.labels, model.vocab.label_counts)
    f.write(_f32(model.U))
    if model.V is not None:
        f.write(_f32(model.V))
    f.write(_f32(model.W))
    if model.codebook is None:
        f.write(b"\x00")
    else:
        f.write(b"\x01")
        write_codebook(f, model.codebook)


def read_model(f: BinaryIO) -> Model:
    r = _Reader(f)
    _check_magic(r, MODEL_MAGIC, MODEL_VERSION, "model")
    fusion, dim, gate, = r.unpack("III")
    (alpha,) = r.unpack("f")
    label_count, visual_dim, min_count = r.unpack("III")
    try:
        cfg = ModelConfig(Fusion(fusion), dim, label_count, visual_dim,
                          None if gate == NO_GATE else GateSide(gate), float(alpha))
    except ValueError as e:
        raise FormatError(f"corrupt model header: {e}") from e
    words, wcounts = _read_strings(r)
    labels, lcounts = _read_strings(r)
    vocab = Vocabulary(words, wcounts, labels, lcounts, min_count)
    U = r.array("<f4", (len(words), dim))
    V = r.array("<f4", (dim, visual_dim)) if cfg.fusion.uses_visual else None
    W = r.array("<f4", (label_count, cfg.hidden_out))
    flag = r.raw(1)
    codebook = read_codebook(f) if flag == b"\x01" else None
    return Model(cfg, vocab, U, V, W, codebook)


def save_model(model: Model, path: str | Path) -> None:
    buf = io.BytesIO()
    write_model(buf, model)
    Path(path).write_bytes(buf.getvalue())


def load_model(path: str | Path) -> Model:
    with open(path, "rb") as f:
        model = read_model(f)
        if f.read(1):
            raise FormatError("trailing bytes after model")
    return model

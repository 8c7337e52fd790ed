"""Command line interface.

Flag spelling follows fastText (single dash, camelCase where fastText has
it) so existing corpora and scripts carry over::

    mmft train -input train.txt -features train.vec -output model -fusion additive
    mmft test -model model.bin -input test.txt -features test.vec
    mmft quantize -input train.vec -output train.pq -pq-n 4 -pq-k 256 -rspq-r 1
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import (
    CorpusError,
    documents_from_lines,
    load_features,
    read_lines,
    vocab_from_lines,
)
from .inference import evaluate, format_neighbors, nearest_neighbors, predict
from .model import Fusion, ModelError
from .persistence import FormatError, load_codebook, load_model, save_codebook, save_model
from .quantizer import QuantizerError, quantized_lines, train_codebook
from .trainer import TrainConfig, TrainError, grid_configs, grid_search, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("-fusion", default="text", choices=[f.label for f in Fusion])
    p.add_argument("-dim", type=int, default=100)
    p.add_argument("-lr", type=float, default=0.1)
    p.add_argument("-epoch", type=int, default=5)
    p.add_argument("-thread", type=int, default=4)
    p.add_argument("-minCount", type=int, default=1)
    p.add_argument("-seed", type=int, default=0)
    p.add_argument("-gate", choices=["text", "visual"])
    p.add_argument("-alpha", type=float)
    p.add_argument("-codebook")
    p.add_argument("-verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmft", allow_abbrev=False,
                     description="fast linear multi-modal classification")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", allow_abbrev=False, help="train a classifier")
    p.add_argument("-input", required=True)
    p.add_argument("-features")
    p.add_argument("-output", required=True)
    _model_flags(p)

    p = sub.add_parser("quantize", allow_abbrev=False, help="train a PQ/RSPQ codebook")
    p.add_argument("-input", required=True, help="feature file")
    p.add_argument("-output", required=True, help="codebook file")
    p.add_argument("-pq-n", type=int, default=4)
    p.add_argument("-pq-k", type=int, default=256)
    p.add_argument("-rspq-r", type=int, default=1)
    p.add_argument("-alpha", type=float, default=1.0)
    p.add_argument("-seed", type=int, default=0)
    p.add_argument("-max-iter", type=int, default=25)
    p.add_argument("-corpus", help="corpus aligned with -input to rewrite with pseudo-tokens")
    p.add_argument("-corpus-output", help="where to write the quantized corpus")

    p = sub.add_parser("test", allow_abbrev=False, help="report P@1 on a labeled corpus")
    p.add_argument("-model", required=True)
    p.add_argument("-input", required=True)
    p.add_argument("-features")

    p = sub.add_parser("predict", allow_abbrev=False, help="top-k labels per document")
    p.add_argument("-model", required=True)
    p.add_argument("-input", required=True)
    p.add_argument("-features")
    p.add_argument("-k", type=int, default=1)

    p = sub.add_parser("nn", allow_abbrev=False, help="nearest neighbours read from stdin")
    p.add_argument("-model", required=True)
    p.add_argument("-topn", type=int, default=10)
    p.add_argument("-restrict", choices=["words", "all"], default="words")

    p = sub.add_parser("sweep", allow_abbrev=False, help="grid search on a validation split")
    p.add_argument("-grid", required=True, help="JSON object of axis -> list of values")
    p.add_argument("-input", required=True)
    p.add_argument("-features")
    p.add_argument("-valid", required=True)
    p.add_argument("-valid-features")
    p.add_argument("-output", help="also train and save the winning model here")
    _model_flags(p)
    return parser


def _model_path(path: str) -> Path:
    return Path(path if path.endswith(".bin") else path + ".bin")


def _train_config(args, fusion: Fusion, codebook) -> TrainConfig:
    if args.gate and not fusion.gated:
        raise UsageError(f"-gate is only valid with gated fusions, not {fusion.label}")
    alpha = args.alpha
    if alpha is None:
        alpha = codebook.alpha if codebook is not None else 1.0
    return TrainConfig(fusion=fusion.label, dim=args.dim, lr=args.lr, epochs=args.epoch,
                       threads=args.thread, min_count=args.minCount, seed=args.seed,
                       gate_side=args.gate, alpha=alpha)


def _load_split(fusion: Fusion, corpus: str, features: str | None, codebook):
    """Corpus lines plus the feature table, with pseudo-tokens appended when quantizing."""
    lines = read_lines(corpus)
    table = None
    if fusion.uses_visual:
        if not features:
            raise UsageError(f"-fusion {fusion.label} requires -features")
        table = load_features(features, len(lines))
    elif fusion is Fusion.DISCRETIZED:
        if features and codebook is None:
            raise UsageError("-features with discretized fusion needs a codebook")
        if features:
            lines = quantized_lines(lines, load_features(features, len(lines)), codebook)
    elif features:
        raise UsageError(f"-fusion {fusion.label} does not take -features")
    return lines, table


def _codebook_arg(args, fusion: Fusion):
    if not args.codebook:
        return None
    if fusion is not Fusion.DISCRETIZED:
        raise UsageError("-codebook is only valid with -fusion discretized")
    if not args.features:
        raise UsageError("-codebook needs -features to quantize")
    return load_codebook(args.codebook)


def cmd_train(args) -> int:
    fusion = Fusion.parse(args.fusion)
    codebook = _codebook_arg(args, fusion)
    cfg = _train_config(args, fusion, codebook)
    lines, table = _load_split(fusion, args.input, args.features, codebook)
    vocab = vocab_from_lines(lines, cfg.min_count)
    docs = documents_from_lines(lines, vocab)
    model = train(cfg, docs, vocab, table, codebook, verbose=args.verbose)
    save_model(model, _model_path(args.output))
    return 0


def cmd_quantize(args) -> int:
    if bool(args.corpus) != bool(args.corpus_output):
        raise UsageError("-corpus and -corpus-output go together")
    features = load_features(args.input)
    cb = train_codebook(features, args.pq_n, args.pq_k, args.rspq_r, args.alpha,
                        args.seed, args.max_iter)
    save_codebook(cb, args.output)
    if args.corpus:
        lines = quantized_lines(read_lines(args.corpus), features, cb)
        Path(args.corpus_output).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return 0


def _eval_split(model, corpus: str, features: str | None):
    lines, table = _load_split(model.config.fusion, corpus, features, model.codebook)
    return documents_from_lines(lines, model.vocab), table


def cmd_test(args) -> int:
    model = load_model(args.model)
    docs, table = _eval_split(model, args.input, args.features)
    print(f"N {len(docs)}")
    print(f"P@1 {evaluate(model, docs, table):.3f}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    docs, table = _eval_split(model, args.input, args.features)
    out = sys.stdout
    for i, doc in enumerate(docs):
        row = table.rows[i] if table is not None else None
        pred = predict(model, doc, row, args.k)
        out.write(" ".join(f"__label__{lab} {p:.5f}" for lab, p in pred.labels(model)) + "\n")
    return 0


def cmd_nn(args) -> int:
    model = load_model(args.model)
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            sys.stdout.write("Query word? ")
            sys.stdout.flush()
        line = sys.stdin.readline()
        if not line:
            break
        query = line.strip()
        if not query:
            continue
        try:
            hits = nearest_neighbors(model, query, args.topn, args.restrict)
        except KeyError:
            print(f"error: unknown token {query!r}", file=sys.stderr)
            continue
        print(f"# {query} (cosine)")
        if hits:
            print(format_neighbors(hits))
        sys.stdout.flush()
    return 0


def cmd_sweep(args) -> int:
    fusion = Fusion.parse(args.fusion)
    codebook = _codebook_arg(args, fusion)
    try:
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read grid {args.grid}: {e}") from e
    if not isinstance(grid, dict):
        raise UsageError("grid file must hold a JSON object")
    base = _train_config(args, fusion, codebook)
    configs = grid_configs(base, grid)
    if len({c.min_count for c in configs}) > 1:
        raise UsageError("minCount cannot be swept")
    lines, table = _load_split(fusion, args.input, args.features, codebook)
    vlines, vtable = _load_split(fusion, args.valid, args.valid_features, codebook)
    vocab = vocab_from_lines(lines, base.min_count)
    result = grid_search(configs, documents_from_lines(lines, vocab),
                         documents_from_lines(vlines, vocab), vocab, table, vtable,
                         codebook, keep_model=bool(args.output))
    for cfg, score in result.scores:
        print(f"{json.dumps(cfg.to_dict())}\t{score:.4f}", file=sys.stderr)
    print(json.dumps(result.best.to_dict()))
    print(f"P@1 {result.best_score:.3f}")
    if args.output:
        save_model(result.model, _model_path(args.output))
    return 0


COMMANDS = {
    "train": cmd_train,
    "quantize": cmd_quantize,
    "test": cmd_test,
    "predict": cmd_predict,
    "nn": cmd_nn,
    "sweep": cmd_sweep,
}

_HANDLED = (UsageError, CorpusError, QuantizerError, ModelError, TrainError, FormatError,
            OSError, ValueError)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except _HANDLED as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

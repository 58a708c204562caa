"""Command-line entry point: ``attnfuse {gen-synthetic,extract,train,eval,explain}``.

Typical session::

    attnfuse gen-synthetic --n-samples 512 --seed 3 --out data/
    attnfuse extract data/ --out corpus.jsonl
    attnfuse train corpus.jsonl --out run/
    attnfuse eval run/val.jsonl --checkpoint run/model.ckpt
    attnfuse explain snippet.c --checkpoint run/model.ckpt --format html --out lines.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ast_frontend import Ast, load_ast_json, parse_source
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import CliConfig, load_config
from .errors import AttnFuseError, ConfigError, EmptyCorpus, VocabMismatch
from .explain import explain_ast, render_ansi, render_html
from .metrics import TABLE_HEADER
from .model import init_params, parameter_count_formula
from .paths import (UNK, Vocab, build_vocab, encode_sequence, extract_path_contexts,
                    read_corpus, sequence_to_record, truncate_or_keep, write_corpus)
from .synthetic import generate_synthetic_corpus
from .train import choose_threshold, evaluate, fit, history_csv, stratified_split

log = logging.getLogger("attnfuse")

SOURCE_SUFFIXES = {".c", ".h", ".cc", ".cpp", ".json"}


# --------------------------------------------------------------------------
# helpers

def load_function(path: Path) -> Ast:
    """Parse a C source file or ingest an AST-JSON file."""
    data = path.read_bytes()
    if path.suffix == ".json":
        return load_ast_json(data)
    return parse_source(data.decode("utf-8"))


def _files_under(directory: Path) -> list[Path]:
    return sorted(p for p in directory.rglob("*") if p.is_file() and p.suffix in SOURCE_SUFFIXES)


def collect_inputs(inputs: list[str], manifest: str | None) -> list[tuple[Path, int | None]]:
    """(file, label) pairs in a deterministic order.

    A manifest lists ``<path> <label>`` per line (paths relative to the
    manifest, ``#`` starts a comment). Otherwise a directory containing
    ``good/`` and ``bad/`` yields label 0 then label 1 files; any other file
    or directory is unlabeled.
    """
    items: list[tuple[Path, int | None]] = []
    if manifest:
        base = Path(manifest).parent
        for n, raw in enumerate(Path(manifest).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.rsplit(None, 1)
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise ConfigError("manifest", f"line {n}: expected '<path> <0|1>'")
            items.append((base / parts[0], int(parts[1])))
    for name in inputs:
        p = Path(name)
        if p.is_dir() and ((p / "good").is_dir() or (p / "bad").is_dir()):
            for sub, label in (("good", 0), ("bad", 1)):
                if (p / sub).is_dir():
                    items.extend((f, label) for f in _files_under(p / sub))
        elif p.is_dir():
            items.extend((f, None) for f in _files_under(p))
        else:
            items.append((p, None))
    return items


def _encode(records, vocab: Vocab, max_contexts: int, seed: int):
    return [truncate_or_keep(encode_sequence(r, vocab), max_contexts, seed) for r in records]


def _labels(records, what: str) -> np.ndarray:
    missing = [r.function_name for r in records if r.label is None]
    if missing:
        raise ConfigError("corpus", f"{len(missing)} {what} record(s) lack a label, e.g. {missing[0]!r}")
    return np.array([r.label for r in records], dtype=np.int64)


def _read_meta(corpus: Path) -> dict:
    meta = corpus.with_name(corpus.name + ".meta.json")
    return json.loads(meta.read_text(encoding="utf-8")) if meta.exists() else {}


# --------------------------------------------------------------------------
# commands

def cmd_gen_synthetic(cfg: CliConfig, n_samples: int) -> int:
    if not cfg.out:
        raise ConfigError("out", "an output directory is required")
    out = Path(cfg.out)
    samples = generate_synthetic_corpus(n_samples, cfg.seed)
    rows = []
    for i, s in enumerate(samples):
        sub = out / ("bad" if s.label == 1 else "good")
        sub.mkdir(parents=True, exist_ok=True)
        rel = f"{sub.name}/{i:05d}_{s.name}.c"
        (out / rel).write_text(s.source, encoding="utf-8")
        rows.append(f"{rel}\t{s.label}\t{s.call_line}\t{s.callee}")
    (out / "planted.tsv").write_text("path\tlabel\tcall_line\tcallee\n" + "\n".join(rows) + "\n",
                                     encoding="utf-8")
    print(f"wrote {len(samples)} functions to {out}")
    return 0


def cmd_extract(cfg: CliConfig, inputs: list[str], rejects_path: str | None) -> int:
    if not cfg.out:
        raise ConfigError("out", "an output corpus path is required")
    items = collect_inputs(inputs, cfg.manifest)
    records, rejects = [], []
    for path, label in items:
        try:
            ast = load_function(path)
            seq = extract_path_contexts(ast, cfg.max_path_length, cfg.max_path_width, label)
        except (AttnFuseError, OSError, UnicodeDecodeError) as exc:
            rejects.append(f"{path}\t{type(exc).__name__}: {exc}")
            continue
        records.append(sequence_to_record(seq))
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rejects_file = Path(rejects_path) if rejects_path else out.with_name(out.name + ".rejects.log")
    rejects_file.write_text("".join(r + "\n" for r in rejects), encoding="utf-8")
    if not records:
        print(f"error: all {len(items)} input(s) failed; see {rejects_file}", file=sys.stderr)
        return 1
    write_corpus(out, records)
    meta = {"max_path_length": cfg.max_path_length, "max_path_width": cfg.max_path_width}
    out.with_name(out.name + ".meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n",
                                                      encoding="utf-8")
    print(f"extracted {len(records)} record(s), rejected {len(rejects)}")
    return 0


def cmd_train(cfg: CliConfig) -> int:
    if not cfg.corpus:
        raise ConfigError("corpus", "a training corpus is required")
    if not cfg.out:
        raise ConfigError("out", "an output directory is required")
    corpus = Path(cfg.corpus)
    records = read_corpus(corpus)
    if not records:
        raise EmptyCorpus(f"{corpus} holds no records")
    labels = _labels(records, "training")
    meta = _read_meta(corpus)
    miner = cfg.miner()
    miner.update({k: meta[k] for k in ("max_path_length", "max_path_width") if k in meta})

    mcfg, tcfg = cfg.model_config(), cfg.train_config()
    if tcfg.split_ratio[1] > 0:
        tr, va = stratified_split(labels, tcfg.split_ratio, tcfg.seed)
    else:
        tr, va = np.arange(len(records)), np.zeros(0, dtype=np.int64)
    vocab = build_vocab([records[i] for i in tr], cfg.max_node_vocab, cfg.max_path_vocab)
    enc = _encode(records, vocab, cfg.max_contexts, cfg.seed)
    params = init_params(mcfg, vocab.n_nodes, vocab.n_paths)
    counts = parameter_count_formula(vocab.n_nodes, vocab.n_paths, mcfg.d_embed, mcfg.n_heads,
                                     mcfg.conv_kernel_size)
    print(f"parameters: {counts['total']} total, {counts['without_embeddings']} without embeddings")
    result = fit(params, [enc[i] for i in tr], labels[tr], [enc[i] for i in va], labels[va], tcfg)

    if len(va):
        eval_idx = va
        threshold = choose_threshold(result.params, [enc[i] for i in va], labels[va])
    else:
        log.warning("no validation split; reporting training metrics at threshold 0.5")
        eval_idx, threshold = tr, 0.5
    if cfg.threshold is not None:
        threshold = cfg.threshold
    report = evaluate(result.params, [enc[i] for i in eval_idx], labels[eval_idx], threshold)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.ckpt", Checkpoint(result.params, vocab, threshold, miner))
    (out / "vocab.json").write_text(vocab.to_json() + "\n", encoding="utf-8")
    (out / "history.csv").write_text(history_csv(result.history), encoding="utf-8")
    (out / "metrics.json").write_text(report.to_json(), encoding="utf-8")
    write_corpus(out / "train.jsonl", [records[i] for i in tr])
    write_corpus(out / "val.jsonl", [records[i] for i in va])
    print(f"best epoch {result.best_epoch} of {len(result.history)}; threshold {threshold:.6f}")
    print(TABLE_HEADER)
    print(report.table_row("Validation" if len(va) else "Training"))
    return 0


def check_vocab(ckpt: Checkpoint, records, vocab_path: str | None):
    if vocab_path:
        other = Vocab.from_json(Path(vocab_path).read_text(encoding="utf-8"))
        if other.nodes != ckpt.vocab.nodes or other.paths != ckpt.vocab.paths:
            raise VocabMismatch(f"{vocab_path} differs from the vocabulary stored in the checkpoint")
    n_paths = sum(len(r.contexts) for r in records)
    known = sum(ckpt.vocab.path_id(p) != UNK for r in records for _, p, _ in r.contexts)
    if n_paths and known == 0:
        raise VocabMismatch("no path of the corpus is in the checkpoint vocabulary")


def cmd_eval(cfg: CliConfig, vocab_path: str | None) -> int:
    if not cfg.corpus or not cfg.checkpoint:
        raise ConfigError("corpus" if not cfg.corpus else "checkpoint", "is required")
    ckpt = load_checkpoint(cfg.checkpoint)
    records = read_corpus(cfg.corpus)
    if not records:
        raise EmptyCorpus(f"{cfg.corpus} holds no records")
    check_vocab(ckpt, records, vocab_path)
    labels = _labels(records, "evaluation")
    enc = _encode(records, ckpt.vocab, ckpt.miner.get("max_contexts", cfg.max_contexts),
                  ckpt.miner.get("subsample_seed", 0))
    threshold = ckpt.threshold if cfg.threshold is None else cfg.threshold
    report = evaluate(ckpt.params, enc, labels, threshold)
    text = report.to_json()
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_explain(cfg: CliConfig, source: str, class_row: int | None) -> int:
    if not cfg.checkpoint:
        raise ConfigError("checkpoint", "is required")
    ckpt = load_checkpoint(cfg.checkpoint)
    ast = load_function(Path(source))
    m = ckpt.miner
    expl = explain_ast(ckpt.params, ckpt.vocab, ast, m.get("max_path_length", cfg.max_path_length),
                       m.get("max_path_width", cfg.max_path_width),
                       m.get("max_contexts", cfg.max_contexts), m.get("subsample_seed", 0),
                       ckpt.threshold if cfg.threshold is None else cfg.threshold, class_row)
    label = "vulnerable" if expl.predicted == 1 else "non-vulnerable"
    print(f"predicted class {expl.predicted} ({label}), probability {expl.probability:.6f}")
    if expl.class_index == 0:
        print("non-vulnerable rationale: showing attention of the class-0 query")
    sys.stdout.write(render_html(expl) if cfg.format == "html" else render_ansi(expl))
    if cfg.out:
        Path(cfg.out).write_text(expl.lines.to_json(), encoding="utf-8")
    return 0


# --------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat TOML configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output path (file or directory, per command)")
    p.add_argument("--max-path-length", type=int, dest="max_path_length")
    p.add_argument("--max-path-width", type=int, dest="max_path_width")
    p.add_argument("--max-contexts", type=int, dest="max_contexts")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnfuse", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a labeled synthetic corpus of C functions")
    _common(p)
    p.add_argument("--n-samples", type=int, default=512, dest="n_samples")

    p = sub.add_parser("extract", help="mine path contexts into a JSONL corpus")
    _common(p)
    p.add_argument("inputs", nargs="*", help="files or directories (good/ and bad/ convention)")
    p.add_argument("--manifest", help="file of '<path> <label>' lines")
    p.add_argument("--rejects", help="rejects log (default: <out>.rejects.log)")

    p = sub.add_parser("train", help="train on a corpus and write a checkpoint")
    _common(p)
    p.add_argument("corpus", nargs="?")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("eval", help="score a labeled corpus with a checkpoint")
    _common(p)
    p.add_argument("corpus", nargs="?")
    p.add_argument("--checkpoint")
    p.add_argument("--threshold", type=float)
    p.add_argument("--vocab", help="vocab.json expected to match the checkpoint")

    p = sub.add_parser("explain", help="localise the prediction to source lines")
    _common(p)
    p.add_argument("source", help="C source file or AST-JSON file")
    p.add_argument("--checkpoint")
    p.add_argument("--threshold", type=float)
    p.add_argument("--format", choices=("html", "ansi"))
    p.add_argument("--class-row", type=int, choices=(0, 1), dest="class_row",
                   help="explain this class instead of the predicted one")
    return parser


_OVERRIDES = ("seed", "out", "max_path_length", "max_path_width", "max_contexts", "epochs", "lr",
              "batch_size", "threshold", "format", "corpus", "checkpoint", "manifest")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: getattr(args, k) for k in _OVERRIDES if hasattr(args, k)}
        cfg = load_config(args.config, overrides)
        if args.command == "gen-synthetic":
            return cmd_gen_synthetic(cfg, args.n_samples)
        if args.command == "extract":
            return cmd_extract(cfg, args.inputs, args.rejects)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.vocab)
        return cmd_explain(cfg, args.source, args.class_row)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (AttnFuseError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""
Training on the synthetic unchecked-return corpus
=================================================

The default model trained on a few hundred generated functions. Half of them
discard the return value of an I/O call; the other half check it.
"""

import numpy as np

from attnfuse.ast_frontend import parse_source
from attnfuse.metrics import TABLE_HEADER
from attnfuse.model import ModelConfig
from attnfuse.paths import build_vocab, encode_sequence, extract_path_contexts, truncate_or_keep
from attnfuse.synthetic import generate_synthetic_corpus
from attnfuse.train import TrainConfig, choose_threshold, evaluate, train

corpus = generate_synthetic_corpus(160, seed=1)
print(corpus[0].source)
print(corpus[1].source)

seqs = [extract_path_contexts(parse_source(s.source), label=s.label) for s in corpus]
labels = np.array([s.label for s in corpus])
vocab = build_vocab(seqs)
print(f"{vocab.n_nodes} node tokens, {vocab.n_paths} path strings")

cfg = ModelConfig()
enc = [truncate_or_keep(encode_sequence(s, vocab), cfg.max_contexts) for s in seqs]
result = train(enc, labels, vocab.n_nodes, vocab.n_paths, cfg,
               TrainConfig(epochs=8, seed=1))
for rec in result.history:
    print(f"epoch {rec.epoch:3d}  train {rec.train_loss:.4f}  val {rec.val_loss:.4f}")

val = [enc[i] for i in result.val_idx]
tau = choose_threshold(result.params, val, labels[result.val_idx])
print(TABLE_HEADER)
print(evaluate(result.params, val, labels[result.val_idx], tau).table_row())

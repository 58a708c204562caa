"""
Pointing at the vulnerable line
===============================

Train a small model, then turn the decoder attention for one function into
per-line weights and colour bands.
"""

import numpy as np

from attnfuse.ast_frontend import parse_source
from attnfuse.explain import explain_ast, render_ansi
from attnfuse.model import ModelConfig
from attnfuse.paths import build_vocab, encode_sequence, extract_path_contexts, truncate_or_keep
from attnfuse.synthetic import generate_synthetic_corpus
from attnfuse.train import TrainConfig, train

corpus = generate_synthetic_corpus(160, seed=2)
seqs = [extract_path_contexts(parse_source(s.source), label=s.label) for s in corpus]
vocab = build_vocab(seqs)
cfg = ModelConfig()
enc = [truncate_or_keep(encode_sequence(s, vocab), cfg.max_contexts) for s in seqs]
result = train(enc, [s.label for s in corpus], vocab.n_nodes, vocab.n_paths, cfg,
               TrainConfig(epochs=8, seed=2))

sample = generate_synthetic_corpus(2, seed=99)[0]
ex = explain_ast(result.params, vocab, parse_source(sample.source), max_contexts=cfg.max_contexts)
print(render_ansi(ex))
print("planted unchecked call on line", sample.call_line,
      "-> band", ex.lines.lines[sample.call_line - 1].band)
# line weights add up to the attention mass of the chosen row
print("sum of line weights", np.round(ex.lines.weights.sum(), 6))

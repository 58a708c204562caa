"""Attention-fusion classifier over AST path contexts for unchecked-return-value bugs.

The pipeline runs C function -> AST -> path contexts -> encoder (self-attention,
Bi-LSTM and 1-D convolution branches fused along features) -> class-query
decoder -> probabilities. Decoder attention is mapped back to source lines.
"""

__version__ = "0.1.0"

from .ast_frontend import Ast, AstNode, dump_ast_json, leaves, load_ast_json, parse_source
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import *  # noqa: F401,F403
from .explain import (AttentionView, LineAttribution, attention_view, explain_ast,
                      node_to_line_weights, path_to_node_weights, render_bands)
from .metrics import MetricsReport, compute_metrics, roc_curve, select_threshold
from .model import (ModelConfig, ModelParams, backward, forward, init_params, make_batch,
                    parameter_count_formula, predict_proba)
from .paths import (PathContext, PathSequence, Vocab, build_vocab, encode_sequence,
                    extract_path_contexts, truncate_or_keep)
from .synthetic import generate_synthetic_corpus
from .train import TrainConfig, evaluate, fit, stratified_split, train

__all__ = [
    "Ast", "AstNode", "parse_source", "load_ast_json", "dump_ast_json", "leaves",
    "PathContext", "PathSequence", "Vocab", "extract_path_contexts", "build_vocab",
    "encode_sequence", "truncate_or_keep",
    "ModelConfig", "ModelParams", "init_params", "make_batch", "forward", "backward",
    "predict_proba", "parameter_count_formula",
    "TrainConfig", "stratified_split", "fit", "train", "evaluate",
    "MetricsReport", "compute_metrics", "roc_curve", "select_threshold",
    "AttentionView", "LineAttribution", "attention_view", "path_to_node_weights",
    "node_to_line_weights", "render_bands", "explain_ast",
    "Checkpoint", "save_checkpoint", "load_checkpoint",
    "generate_synthetic_corpus",
]

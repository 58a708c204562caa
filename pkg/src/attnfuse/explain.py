"""Line-level localisation from decoder attention.

The class-query/encoder affinity ``a_w = softmax(Q E^T)`` gives one weight per
path context. Weights are pushed down to AST nodes (each path splits its
weight equally over its nodes, and nodes shared by several paths accumulate)
and then up to source lines (each node credits the first line of its nearest
enclosing statement). Lines are finally binned into red / orange / yellow /
white bands relative to the hottest line.
"""

from __future__ import annotations

import html
import json
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import nn
from .ast_frontend import Ast
from .errors import AlignmentError, AllMasked
from .model import ModelParams, forward, make_batch
from .paths import (DEFAULT_MAX_CONTEXTS, DEFAULT_MAX_PATH_LENGTH, DEFAULT_MAX_PATH_WIDTH,
                    PathSequence, Vocab, encode_sequence, extract_path_contexts,
                    subsample_indices)

BANDS = ("red", "orange", "yellow", "white")

# kinds that open a statement region; direct children of a block do too
STATEMENT_KINDS = {"method", "parameter", "methodreturn", "method_return", "decl", "local",
                   "if", "while", "for", "return", "control_structure"}
BLOCK_KINDS = {"block"}
# which children of a control node are statement bodies (as opposed to conditions or headers)
_BODY_SLICE = {"if": slice(1, None), "else": slice(0, None), "while": slice(1, None),
               "for": slice(-1, None)}


@dataclass
class AttentionView:
    weights: np.ndarray  # (2, K)
    class_index: int = 1

    @property
    def selected(self) -> np.ndarray:
        return self.weights[self.class_index]


@dataclass(frozen=True)
class LineWeight:
    line: int
    weight: float
    band: str


@dataclass
class LineAttribution:
    lines: list[LineWeight]

    @property
    def weights(self) -> np.ndarray:
        return np.array([lw.weight for lw in self.lines])

    @property
    def bands(self) -> list[str]:
        return [lw.band for lw in self.lines]

    def to_json(self) -> str:
        return json.dumps({"lines": [{"line": lw.line, "weight": lw.weight, "band": lw.band}
                                     for lw in self.lines]}, indent=1) + "\n"


def attention_view(q, e, mask=None, scaling: bool = False, class_index: int = 1) -> AttentionView:
    """Row-wise softmax of Q E^T over unmasked keys (one sample)."""
    q = np.asarray(q)
    e = np.asarray(e)
    mask = np.ones(e.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise AllMasked("attention view over zero real positions")
    scale = 1.0 / np.sqrt(q.shape[1]) if scaling else 1.0
    w = nn.masked_softmax(scale * (q @ e.T), mask[None, :])
    return AttentionView(w, class_index)


def path_to_node_weights(seq: PathSequence, path_weights, ast: Ast | None = None) -> dict[int, float]:
    """Each context splits its weight equally over its node set; shares accumulate."""
    path_weights = np.asarray(path_weights, dtype=np.float64)
    if len(path_weights) != len(seq.contexts):
        raise AlignmentError(f"{len(path_weights)} weights for {len(seq.contexts)} contexts")
    acc: dict[int, float] = defaultdict(float)
    for ctx, w in zip(seq.contexts, path_weights):
        nodes = set(ctx.node_ids) or {ctx.source_leaf, ctx.sink_leaf}
        share = w / len(nodes)
        for nid in sorted(nodes):
            acc[nid] += share
    if ast is not None:
        unknown = set(acc) - set(ast.nodes)
        if unknown:
            raise AlignmentError(f"node ids {sorted(unknown)[:5]} not in the AST")
    return dict(acc)


def statement_line_map(ast: Ast) -> dict[int, int]:
    """Node id -> first line of its nearest enclosing statement (root counts as one)."""
    out: dict[int, int] = {}
    stack = [(ast.root, ast.nodes[ast.root].line_start)]
    while stack:
        nid, inherited = stack.pop()
        node = ast.nodes[nid]
        parent = ast.parents.get(nid)
        is_stmt = (nid == ast.root or node.kind.lower() in STATEMENT_KINDS
                   or (parent is not None and node.kind.lower() not in BLOCK_KINDS
                       and _is_body(ast, parent, nid)))
        line = node.line_start if is_stmt else inherited
        out[nid] = line
        stack.extend((c, line) for c in node.children)
    return out


def _is_body(ast: Ast, parent: int, child: int) -> bool:
    pnode = ast.nodes[parent]
    kind = pnode.kind.lower()
    if kind in BLOCK_KINDS:
        return True
    body = _BODY_SLICE.get(kind)
    return body is not None and child in pnode.children[body]


def _n_lines(ast: Ast) -> int:
    return max(len(ast.source_lines), max(n.line_end for n in ast.nodes.values()))


def node_to_line_weights(ast: Ast, node_weights: dict[int, float]) -> np.ndarray:
    """Weight per source line; index 0 is line 1."""
    lines = np.zeros(_n_lines(ast))
    mapping = statement_line_map(ast)
    for nid, w in node_weights.items():
        lines[mapping[nid] - 1] += w
    return lines


def render_bands(weights) -> LineAttribution:
    """red >= 2/3 max, orange >= 1/3 max, yellow below that but > 0, white at 0."""
    weights = np.asarray(weights, dtype=np.float64)
    m = weights.max() if len(weights) else 0.0
    out = []
    for i, w in enumerate(weights):
        if m <= 0 or w <= 0:
            band = "white"
        elif w >= 2.0 * m / 3.0:
            band = "red"
        elif w >= m / 3.0:
            band = "orange"
        else:
            band = "yellow"
        out.append(LineWeight(i + 1, float(w), band))
    return LineAttribution(out)


# --------------------------------------------------------------------------
# end-to-end

@dataclass
class Explanation:
    function_name: str
    probs: np.ndarray          # (2,)
    predicted: int
    class_index: int
    view: AttentionView
    sequence: PathSequence     # the contexts actually fed to the model
    node_weights: dict[int, float]
    lines: LineAttribution
    source_lines: tuple[str, ...]

    @property
    def probability(self) -> float:
        return float(self.probs[self.predicted])


def explain_ast(params: ModelParams, vocab: Vocab, ast: Ast,
                max_path_length: int = DEFAULT_MAX_PATH_LENGTH,
                max_path_width: int = DEFAULT_MAX_PATH_WIDTH,
                max_contexts: int = DEFAULT_MAX_CONTEXTS, subsample_seed: int = 0,
                threshold: float = 0.5, class_index: int | None = None) -> Explanation:
    seq = extract_path_contexts(ast, max_path_length, max_path_width)
    keep = subsample_indices(len(seq.contexts), max_contexts, subsample_seed)
    seq = PathSequence([seq.contexts[i] for i in keep], seq.label, seq.function_name)
    batch = make_batch([encode_sequence(seq, vocab)])
    cache = forward(params, batch)
    probs = cache.probs[0].astype(np.float64)
    predicted = int(probs[1] >= threshold)
    row = predicted if class_index is None else int(class_index)
    e = cache.artifacts.encoder[0]
    q = cache.artifacts.queries
    view = attention_view(q, e, batch.mask[0], params.config.attention_scaling, row)
    node_w = path_to_node_weights(seq, view.selected, ast)
    lines = render_bands(node_to_line_weights(ast, node_w))
    return Explanation(ast.function_name, probs, predicted, row, view, seq, node_w, lines,
                       tuple(ast.source_lines))


def render_html(expl: Explanation) -> str:
    label = "vulnerable" if expl.predicted == 1 else "non-vulnerable"
    parts = [
        "<!DOCTYPE html>",
        "<html><head><meta charset=\"utf-8\"><style>",
        ".band-red{background:#f4a6a6}.band-orange{background:#f9cf9a}",
        ".band-yellow{background:#fbf3a4}.band-white{background:#ffffff}",
        "div{font-family:monospace;white-space:pre}",
        "</style></head><body>",
        f"<p>{html.escape(expl.function_name)}: predicted {label} "
        f"(p={expl.probability:.6f}); explaining class row {expl.class_index}"
        f"{'' if expl.class_index == 1 else ' (non-vulnerable rationale)'}</p>",
    ]
    for lw in expl.lines.lines:
        text = expl.source_lines[lw.line - 1] if lw.line <= len(expl.source_lines) else ""
        parts.append(f'<div class="band-{lw.band}" data-weight="{lw.weight:.6f}">'
                     f"{html.escape(text)}</div>")
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"


_ANSI = {"red": "\x1b[41m", "orange": "\x1b[43m", "yellow": "\x1b[103m", "white": ""}
_RESET = "\x1b[0m"


def render_ansi(expl: Explanation) -> str:
    label = "vulnerable" if expl.predicted == 1 else "non-vulnerable"
    out = [f"{expl.function_name}: predicted {label} (p={expl.probability:.6f})",
           f"explaining class row {expl.class_index}"
           + ("" if expl.class_index == 1 else " (non-vulnerable rationale)"),
           f"{'line':>5} {'weight':>9}  source"]
    for lw in expl.lines.lines:
        text = expl.source_lines[lw.line - 1] if lw.line <= len(expl.source_lines) else ""
        color = _ANSI[lw.band]
        body = f"{color}{text}{_RESET}" if color else text
        out.append(f"{lw.line:>5} {lw.weight:>9.6f}  {body}")
    return "\n".join(out) + "\n"


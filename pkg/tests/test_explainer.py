import json
import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnfuse.ast_frontend import parse_source
from attnfuse.errors import AlignmentError, AllMasked
from attnfuse.explain import (attention_view, explain_ast, node_to_line_weights,
                              path_to_node_weights, render_ansi, render_bands, render_html,
                              statement_line_map)
from attnfuse.paths import PathSequence, build_vocab, extract_path_contexts
from attnfuse.synthetic import generate_synthetic_corpus
from helpers import SCANF_SOURCE, micro_config, random_ast, random_params

MULTI = "int h(int x)\n{\n    int y = x + 1;\n    if (y > 2)\n        y = 0;\n    return y;\n}\n"


def test_view_single_key():
    v = attention_view(np.ones((2, 3)), np.ones((1, 3)))
    assert np.array_equal(v.weights, [[1.0], [1.0]])


def test_view_identical_keys_uniform():
    rng = np.random.default_rng(0)
    v = attention_view(rng.normal(size=(2, 4)), np.tile(rng.normal(size=4), (5, 1)))
    assert np.allclose(v.weights, 0.2)


def test_view_hand_golden():
    q = np.array([[1.0, 0.0], [0.0, 2.0]])
    e = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    v = attention_view(q, e, class_index=0)
    # row 0 logits (1, 0, 1); row 1 logits (0, 2, 2)
    z0 = 2 * math.e + 1
    z1 = 1 + 2 * math.e ** 2
    assert np.allclose(v.weights[0], [math.e / z0, 1 / z0, math.e / z0])
    assert np.allclose(v.weights[1], [1 / z1, math.e ** 2 / z1, math.e ** 2 / z1])
    assert np.array_equal(v.selected, v.weights[0])
    scaled = attention_view(q, e, scaling=True)
    assert np.allclose(scaled.weights[0, 0] / scaled.weights[0, 1], math.exp(1 / math.sqrt(2)))


def test_view_masking():
    rng = np.random.default_rng(1)
    v = attention_view(rng.normal(size=(2, 3)), rng.normal(size=(4, 3)), [1, 0, 1, 0])
    assert (v.weights[:, [1, 3]] == 0).all()
    assert np.allclose(v.weights.sum(1), 1.0)
    with pytest.raises(AllMasked):
        attention_view(np.ones((2, 3)), np.ones((2, 3)), [0, 0])


def test_single_context_equal_split():
    seq = extract_path_contexts(parse_source("int g() { return 1; }"), 0, 0)
    (ctx,) = seq.contexts
    out = path_to_node_weights(seq, [1.0])
    n = len(set(ctx.node_ids))
    # Literal, Return, Block, METHOD, MethodReturn, TypeFullName
    assert n == 6
    assert all(math.isclose(w, 1 / 6) for w in out.values())


def test_shared_node_accumulates():
    seq = extract_path_contexts(parse_source(SCANF_SOURCE), 0, 0)
    a, b = seq.contexts[0], seq.contexts[1]
    two = PathSequence([a, b], None, "f")
    out = path_to_node_weights(two, [1.0, 1.0])
    na, nb = set(a.node_ids), set(b.node_ids)
    for nid in na & nb:
        assert math.isclose(out[nid], 1 / len(na) + 1 / len(nb))


def test_alignment_error():
    seq = extract_path_contexts(parse_source(SCANF_SOURCE), 0, 0)
    with pytest.raises(AlignmentError):
        path_to_node_weights(seq, [1.0])


def _double_loop(seq, w):
    acc = defaultdict(float)
    for k in range(len(seq.contexts)):
        nodes = sorted(set(seq.contexts[k].node_ids))
        for n in nodes:
            acc[n] += w[k] / len(nodes)
    return acc


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mass_conservation(seed):
    rng = np.random.default_rng(seed)
    ast = random_ast(rng, max_leaves=10)
    seq = extract_path_contexts(ast, 0, 0)
    w = rng.random(len(seq.contexts))
    nodes = path_to_node_weights(seq, w, ast)
    oracle = _double_loop(seq, w)
    assert set(nodes) == set(oracle)
    assert all(math.isclose(nodes[n], oracle[n], rel_tol=1e-12) for n in nodes)
    lines = node_to_line_weights(ast, nodes)
    assert abs(lines.sum() - w.sum()) <= 1e-9
    assert abs(sum(nodes.values()) - w.sum()) <= 1e-9


def test_monotone_scaling():
    ast = parse_source(MULTI)
    seq = extract_path_contexts(ast, 0, 0)
    w = np.random.default_rng(2).random(len(seq.contexts))
    a = render_bands(node_to_line_weights(ast, path_to_node_weights(seq, w)))
    b = render_bands(node_to_line_weights(ast, path_to_node_weights(seq, 3.5 * w)))
    assert np.allclose(b.weights, 3.5 * a.weights) and a.bands == b.bands


def test_statement_lines():
    ast = parse_source(MULTI)
    lines = statement_line_map(ast)
    calls = {n.kind: lines[n.id] for n in ast.nodes.values()}
    assert calls["Decl"] == 3 and calls["If"] == 4 and calls["Return"] == 6
    # an unbraced body maps to its own line, the condition to the header line
    assign = [n for n in ast.nodes.values() if n.kind == "Assign" and n.children][0]
    cond = [n for n in ast.nodes.values() if n.kind == "BinaryOp" and n.line_start == 4][0]
    assert lines[assign.id] == 5 and lines[cond.id] == 4
    # brace-only lines and the closing line get nothing
    w = node_to_line_weights(ast, {n: 1.0 for n in ast.nodes})
    assert w[1] == 0.0 and len(w) >= 6
    assert all(w[i] == 0 for i in range(len(w)) if i + 1 not in set(lines.values()))


def test_control_bodies():
    src = ("void f()\n{\n  if (x > 1)\n    y = 0;\n  else\n    y = 2;\n  while (y)\n"
           "    y = y - 1;\n  for (i = 0; i < 3; i = i + 1)\n    y = 1;\n}\n")
    ast = parse_source(src)
    lines = statement_line_map(ast)
    assigns = sorted(lines[n.id] for n in ast.nodes.values() if n.kind == "Assign" and n.children)
    assert assigns == [4, 6, 8, 9, 9, 10]


def test_call_subtree_weight_lands_on_its_line():
    src = "void f()\n{\n    int a = 1;\n    scanf(\"%d\", &a);\n    a = 2;\n}\n"
    ast = parse_source(src)
    call = [n for n in ast.nodes.values() if n.kind == "Call"][0]
    sub = [call.id]
    stack = list(call.children)
    while stack:
        n = stack.pop()
        sub.append(n)
        stack.extend(ast.nodes[n].children)
    w = node_to_line_weights(ast, {n: 1.0 for n in sub})
    assert w[3] == len(sub) and w.sum() == len(sub)
    assert render_bands(w).bands == ["white", "white", "white", "red", "white", "white"]


def test_zero_weights_all_white():
    ast = parse_source(MULTI)
    out = render_bands(node_to_line_weights(ast, {}))
    assert set(out.bands) == {"white"}


def test_band_examples():
    assert render_bands([9, 5, 2, 0]).bands == ["red", "orange", "yellow", "white"]
    assert render_bands([0, 3, 0]).bands == ["white", "red", "white"]
    assert render_bands([6, 4, 2]).bands == ["red", "red", "orange"]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=20))
def test_band_ordering(weights):
    heat = {"red": 3, "orange": 2, "yellow": 1, "white": 0}
    out = render_bands(weights)
    for a, ba in zip(weights, out.bands):
        assert (ba == "white") == (a == 0)
        for b, bb in zip(weights, out.bands):
            if a < b:
                assert heat[ba] <= heat[bb]


def _model():
    corpus = [extract_path_contexts(parse_source(s.source)) for s in generate_synthetic_corpus(8, 0)]
    vocab = build_vocab(corpus)
    params = random_params(micro_config(), vocab.n_nodes, vocab.n_paths, seed=0, scale=0.3)
    return params, vocab


def test_explain_end_to_end():
    params, vocab = _model()
    sample = generate_synthetic_corpus(2, 5)[0]
    ast = parse_source(sample.source)
    ex = explain_ast(params, vocab, ast)
    assert ex.class_index == ex.predicted
    assert np.isclose(ex.lines.weights.sum(), 1.0)
    assert len(ex.lines.lines) == len(sample.source.splitlines())
    assert np.isclose(ex.probs.sum(), 1.0)
    other = explain_ast(params, vocab, ast, class_index=1 - ex.predicted)
    assert other.class_index != ex.class_index
    html = render_html(ex)
    assert html.count('<div class="band-') == len(ex.lines.lines)
    assert 'data-weight="' in html
    text = render_ansi(ex)
    assert "weight" in text.splitlines()[2]
    doc = json.loads(ex.lines.to_json())
    assert [d["line"] for d in doc["lines"]] == list(range(1, len(ex.lines.lines) + 1))
    assert "non-vulnerable rationale" in render_html(explain_ast(params, vocab, ast, class_index=0))

import pytest

from attnfuse.ast_frontend import parse_source
from attnfuse.synthetic import CHECKED_NAMES, generate_synthetic_corpus


def unchecked_calls(ast):
    """(callee, line) for checked-API calls whose result is discarded (call directly in a block)."""
    out = []
    for node in ast.nodes.values():
        if node.kind != "Call":
            continue
        callee = ast.nodes[node.children[0]].token
        parent = ast.nodes[ast.parents[node.id]]
        if callee in CHECKED_NAMES and parent.kind == "Block":
            out.append((callee, node.line_start))
    return out


def test_counts_and_balance():
    corpus = generate_synthetic_corpus(40, seed=1)
    assert len(corpus) == 40
    assert sum(s.label for s in corpus) == 20
    assert len({s.name for s in corpus}) == 40


@pytest.mark.parametrize("n", [0, 3, 1])
def test_bad_sizes(n):
    with pytest.raises(ValueError):
        generate_synthetic_corpus(n)


def test_determinism():
    assert generate_synthetic_corpus(30, 7) == generate_synthetic_corpus(30, 7)
    assert generate_synthetic_corpus(30, 7) != generate_synthetic_corpus(30, 8)


def test_labels_match_independent_predicate():
    for s in generate_synthetic_corpus(200, seed=3):
        ast = parse_source(s.source)
        found = unchecked_calls(ast)
        if s.label == 1:
            assert found == [(s.callee, s.call_line)]
            assert s.planted_line == s.call_line
        else:
            assert found == []
            assert s.planted_line is None
            assert s.callee + "(" in s.source.splitlines()[s.call_line - 1]

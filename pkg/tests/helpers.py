"""Shared builders and independent reference implementations for the tests."""

from __future__ import annotations

import itertools

import numpy as np

from attnfuse.ast_frontend import Ast, ast_from_dict
from attnfuse.model import ModelConfig, ModelParams, init_params

SCANF_SOURCE = 'void f() { scanf("%d", &a); }'
SCANF_PATH = "Name^Call^Block^METHOD_MethodReturn_TypeFullName"

KINDS = ("Block", "Call", "Name", "If", "Assign", "BinaryOp", "Decl")


def random_ast(rng: np.random.Generator, max_leaves: int = 12, min_leaves: int = 2) -> Ast:
    """Random tree with between ``min_leaves`` and ``max_leaves`` leaves, ids in preorder."""
    target = int(rng.integers(min_leaves, max_leaves + 1))
    # grow by repeatedly expanding a random leaf into 1-3 children
    children: dict[int, list[int]] = {0: []}
    while sum(1 for c in children.values() if not c) < target:
        leaf_ids = [n for n, c in children.items() if not c]
        pick = leaf_ids[int(rng.integers(len(leaf_ids)))]
        width = int(rng.integers(1, 4))
        have = sum(1 for c in children.values() if not c)
        width = min(width, target - have + 1)
        for _ in range(width):
            new = len(children)
            children[new] = []
            children[pick].append(new)
    # renumber in preorder so ids follow the parser's convention
    order, stack = [], [0]
    while stack:
        n = stack.pop()
        order.append(n)
        stack.extend(reversed(children[n]))
    new_id = {old: i for i, old in enumerate(order)}
    nodes = []
    for old in order:
        kids = [new_id[c] for c in children[old]]
        node = {"id": new_id[old], "kind": "METHOD" if old == 0 else KINDS[int(rng.integers(len(KINDS)))],
                "line_start": 1, "line_end": 1, "children": kids}
        if not kids:
            node["token"] = f"t{new_id[old]}"
        nodes.append(node)
    return ast_from_dict({"function_name": "rand", "source": ["x"], "root": 0, "nodes": nodes})


def dfs_leaves(ast: Ast) -> list[int]:
    """Childless nodes in recursive left-to-right DFS order."""
    out = []

    def visit(n):
        kids = ast.nodes[n].children
        if not kids:
            out.append(n)
        for c in kids:
            visit(c)

    visit(ast.root)
    return out


def root_path(ast: Ast, node: int) -> list[int]:
    parent = {c: n.id for n in ast.nodes.values() for c in n.children}
    path = [node]
    while path[-1] in parent:
        path.append(parent[path[-1]])
    return path[::-1]


def brute_force_paths(ast: Ast) -> list[tuple[str, str, str]]:
    """Every leaf pair (left leaf first), spliced at the last common root-path node."""
    lv = dfs_leaves(ast)
    out = []
    for a, b in itertools.combinations(range(len(lv)), 2):
        pa, pb = root_path(ast, lv[a]), root_path(ast, lv[b])
        common = 0
        while common < min(len(pa), len(pb)) and pa[common] == pb[common]:
            common += 1
        up = pa[common - 1:][::-1]  # source ... lca
        down = pb[common:]          # below lca ... sink
        kinds_up = [ast.nodes[n].kind for n in up]
        text = "^".join(kinds_up)
        for n in down:
            text += "_" + ast.nodes[n].kind
        out.append((ast.nodes[lv[a]].token, text, ast.nodes[lv[b]].token))
    return out


def micro_config(**kw) -> ModelConfig:
    base = dict(d_embed=4, n_heads=2, conv_kernel_size=3, dropout_rate=0.1, max_contexts=0, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def random_params(config: ModelConfig, n_nodes: int, n_paths: int, seed: int,
                  scale: float = 0.5, dtype=np.float64) -> ModelParams:
    """Parameters with O(1) entries so every nonlinearity is exercised; PAD rows stay zero."""
    params = init_params(config, n_nodes, n_paths, dtype=dtype, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    for name, arr in params.arrays.items():
        arr[...] = rng.normal(0.0, scale, arr.shape)
    params.arrays["embed.node"][0] = 0.0
    params.arrays["embed.path"][0] = 0.0
    return params


def random_encoded(rng: np.random.Generator, k: int, n_nodes: int, n_paths: int) -> np.ndarray:
    """(k, 3) triples with ids drawn from the non-PAD range."""
    return np.stack([rng.integers(1, n_nodes, k), rng.integers(1, n_paths, k),
                     rng.integers(1, n_nodes, k)], axis=1).astype(np.int64)

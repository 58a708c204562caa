"""Path-context mining, vocabularies and integer encoding.

A path context joins two AST leaves through their lowest common ancestor.
Its path string spells the node kinds on the route, separated by ``^`` for
an upward step and ``_`` for a downward one, e.g.::

    scanf  Name^Call^Block^METHOD_MethodReturn_TypeFullName  void
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ast_frontend import Ast, leaves
from .errors import DegenerateAst, EmptyCorpus

UP, DOWN = "UP", "DOWN"
_SEP = {UP: "^", DOWN: "_"}

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<PAD>", "<UNK>"

DEFAULT_MAX_PATH_LENGTH = 8
DEFAULT_MAX_PATH_WIDTH = 2
DEFAULT_MAX_CONTEXTS = 400


@dataclass(frozen=True)
class PathContext:
    source_leaf: int
    sink_leaf: int
    # (kind, direction of the step leaving this node); the sink has direction None
    path: tuple[tuple[str, str | None], ...]
    source_token: str
    sink_token: str
    node_ids: tuple[int, ...] = ()

    @property
    def path_string(self) -> str:
        return path_to_string(self.path)

    def as_triple(self) -> tuple[str, str, str]:
        return (self.source_token, self.path_string, self.sink_token)


def path_to_string(path) -> str:
    parts = []
    for kind, direction in path:
        parts.append(kind)
        if direction is not None:
            parts.append(_SEP[direction])
    return "".join(parts)


@dataclass
class PathSequence:
    contexts: list[PathContext]
    label: int | None = None
    function_name: str = ""

    def triples(self) -> list[tuple[str, str, str]]:
        return [c.as_triple() for c in self.contexts]


@dataclass
class CorpusRecord:
    """One function as stored in the corpus file: string triples only."""
    function_name: str
    label: int | None
    contexts: list[tuple[str, str, str]]

    def triples(self):
        return self.contexts

    def to_json(self) -> str:
        return json.dumps({"function_name": self.function_name, "label": self.label,
                           "contexts": [list(c) for c in self.contexts]},
                          ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "CorpusRecord":
        d = json.loads(line)
        label = d.get("label")
        if label not in (0, 1, None):
            raise ValueError(f"label must be 0, 1 or null, got {label!r}")
        return cls(d["function_name"], label, [tuple(c) for c in d["contexts"]])


def sequence_to_record(seq: PathSequence) -> CorpusRecord:
    return CorpusRecord(seq.function_name, seq.label, seq.triples())


def write_corpus(path, records: Iterable[CorpusRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
            n += 1
    return n


def read_corpus(path) -> list[CorpusRecord]:
    with open(path, encoding="utf-8") as fh:
        return [CorpusRecord.from_json(line) for line in fh if line.strip()]


# --------------------------------------------------------------------------
# extraction

def extract_path_contexts(ast: Ast, max_path_length: int = DEFAULT_MAX_PATH_LENGTH,
                          max_path_width: int = DEFAULT_MAX_PATH_WIDTH,
                          label: int | None = None) -> PathSequence:
    """All leaf-pair path contexts of ``ast``; a limit of 0 disables it.

    ``max_path_length`` bounds the number of nodes on the path (terminals
    included); ``max_path_width`` bounds the distance between the two leaves
    in left-to-right leaf order.
    """
    leaf_ids = leaves(ast)
    if len(leaf_ids) < 2:
        raise DegenerateAst(f"{ast.function_name!r} has {len(leaf_ids)} leaf node(s)")
    # root-to-leaf chains
    chains = [list(reversed(ast.ancestors(lid))) for lid in leaf_ids]
    contexts = []
    n = len(leaf_ids)
    for i in range(n):
        up_chain = chains[i]
        j_max = n if not max_path_width else min(n, i + max_path_width + 1)
        for j in range(i + 1, j_max):
            down_chain = chains[j]
            d = 0
            while d < len(up_chain) and d < len(down_chain) and up_chain[d] == down_chain[d]:
                d += 1
            lca = d - 1
            # source ... lca ... sink
            route = up_chain[:lca:-1] + [up_chain[lca]] + down_chain[lca + 1:]
            if max_path_length and len(route) > max_path_length:
                continue
            n_up = len(up_chain) - 1 - lca
            path = []
            for k, nid in enumerate(route):
                if k == len(route) - 1:
                    direction = None
                elif k < n_up:
                    direction = UP
                else:
                    direction = DOWN
                path.append((ast.nodes[nid].kind, direction))
            contexts.append(PathContext(
                source_leaf=leaf_ids[i], sink_leaf=leaf_ids[j], path=tuple(path),
                source_token=ast.nodes[leaf_ids[i]].token,
                sink_token=ast.nodes[leaf_ids[j]].token,
                node_ids=tuple(route)))
    return PathSequence(contexts, label, ast.function_name)


# --------------------------------------------------------------------------
# vocabulary

@dataclass
class Vocab:
    nodes: list[str]
    paths: list[str]
    max_node_vocab: int = 0
    max_path_vocab: int = 0
    node_to_id: dict[str, int] = field(init=False, repr=False)
    path_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.nodes[:2] != [PAD_TOKEN, UNK_TOKEN] or self.paths[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabularies must start with the reserved PAD and UNK entries")
        self.node_to_id = {s: i for i, s in enumerate(self.nodes)}
        self.path_to_id = {s: i for i, s in enumerate(self.paths)}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    def node_id(self, token: str) -> int:
        return self.node_to_id.get(token, UNK) if token not in (PAD_TOKEN, UNK_TOKEN) else UNK

    def path_id(self, path: str) -> int:
        return self.path_to_id.get(path, UNK) if path not in (PAD_TOKEN, UNK_TOKEN) else UNK

    def to_json(self) -> str:
        return json.dumps({"nodes": self.nodes, "paths": self.paths,
                           "max_node_vocab": self.max_node_vocab,
                           "max_path_vocab": self.max_path_vocab},
                          ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d) -> "Vocab":
        return cls(list(d["nodes"]), list(d["paths"]),
                   d.get("max_node_vocab", 0), d.get("max_path_vocab", 0))

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        return cls.from_dict(json.loads(text))


def _top(counter: Counter, cap: int) -> list[str]:
    ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    if cap:
        ranked = ranked[:cap]
    return [s for s, _ in ranked]


def build_vocab(corpus: Iterable, max_node_vocab: int = 10_000,
                max_path_vocab: int = 50_000) -> Vocab:
    """Most frequent node tokens and path strings, ties broken lexicographically.

    Capacities count entries beyond the reserved PAD/UNK; 0 means unbounded.
    ``corpus`` items need a ``triples()`` method (PathSequence or CorpusRecord).
    """
    node_counts: Counter = Counter()
    path_counts: Counter = Counter()
    n_items = 0
    for item in corpus:
        n_items += 1
        for src, path, sink in item.triples():
            node_counts[src] += 1
            node_counts[sink] += 1
            path_counts[path] += 1
    if n_items == 0:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    for c in (node_counts, path_counts):
        c.pop(PAD_TOKEN, None)
        c.pop(UNK_TOKEN, None)
    return Vocab([PAD_TOKEN, UNK_TOKEN] + _top(node_counts, max_node_vocab),
                 [PAD_TOKEN, UNK_TOKEN] + _top(path_counts, max_path_vocab),
                 max_node_vocab, max_path_vocab)


def encode_sequence(seq, vocab: Vocab) -> np.ndarray:
    """(K, 3) int array of (source_id, path_id, sink_id); never emits PAD."""
    triples = seq.triples()
    out = np.empty((len(triples), 3), dtype=np.int64)
    for k, (src, path, sink) in enumerate(triples):
        out[k] = (vocab.node_id(src), vocab.path_id(path), vocab.node_id(sink))
    return out


def decode_sequence(encoded: np.ndarray, vocab: Vocab) -> list[tuple[str, str, str]]:
    return [(vocab.nodes[s], vocab.paths[p], vocab.nodes[t]) for s, p, t in np.asarray(encoded)]


def subsample_indices(n_contexts: int, max_contexts: int, seed: int = 0) -> np.ndarray:
    """Indices kept by :func:`truncate_or_keep`, in ascending order."""
    if not max_contexts or n_contexts <= max_contexts:
        return np.arange(n_contexts)
    perm = np.random.default_rng(seed).permutation(n_contexts)
    return np.sort(perm[:max_contexts])


def truncate_or_keep(encoded: Sequence, max_contexts: int, seed: int = 0):
    """Seeded uniform subsample down to ``max_contexts`` rows (0 = keep all).

    The kept rows are the first ``max_contexts`` entries of a permutation drawn
    from ``numpy.random.default_rng(seed)``, restored to their original order.
    """
    idx = subsample_indices(len(encoded), max_contexts, seed)
    if len(idx) == len(encoded):
        return encoded
    return np.asarray(encoded)[idx]

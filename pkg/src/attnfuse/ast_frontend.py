"""ASTs with source-line provenance.

Two ways in: :func:`parse_source` handles a small C subset with a hand-written
recursive-descent parser, and :func:`load_ast_json` ingests trees produced by
external tools in the JSON interchange format.

Node-kind vocabulary of the built-in parser (closed)::

    METHOD, MethodReturn, TypeFullName, Parameter, Block, Decl, Assign,
    Call, Name, Literal, If, Else, While, For, Return, BinaryOp, UnaryOp,
    ArgList

Shapes produced (``[...]`` lists children in order, leaves in quotes)::

    METHOD      [Parameter*, Block, MethodReturn]
    MethodReturn[TypeFullName "void"]
    Parameter   [TypeFullName, Name]
    Decl        [TypeFullName, Name, <init expr>?]
    Assign      [Name, Assign "=", <expr>]            operator leaf shares the kind
    BinaryOp    [<expr>, BinaryOp "!=", <expr>]
    UnaryOp     [UnaryOp "&", <expr>] / [<expr>, UnaryOp "++"]
    Call        [Name "scanf", ArgList[<expr>...]?]   ArgList omitted when empty
    If          [<cond>, <stmt>, Else[<stmt>]?]
    While       [<cond>, <stmt>]
    For         [<init>?, <cond>?, <step>?, <stmt>]
    Return      [<expr>] or leaf Return "return"
    Block       [<stmt>...] or leaf Block "{}" when empty

The return type subtree comes *after* the body, as in CPG-style method trees;
every other child list follows source order. The function name is kept on
:class:`Ast` rather than as a leaf.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property

from .errors import (
    CycleError,
    EmptyInput,
    SchemaError,
    SourceSyntaxError,
    UnsupportedConstruct,
)

KINDS = (
    "METHOD", "MethodReturn", "TypeFullName", "Parameter", "Block", "Decl",
    "Assign", "Call", "Name", "Literal", "If", "Else", "While", "For",
    "Return", "BinaryOp", "UnaryOp", "ArgList",
)


@dataclass(frozen=True)
class AstNode:
    id: int
    kind: str
    token: str | None
    line_start: int
    line_end: int
    children: tuple[int, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(eq=False)
class Ast:
    root: int
    nodes: dict[int, AstNode]
    function_name: str
    source_lines: tuple[str, ...] = ()

    def __eq__(self, other):
        if not isinstance(other, Ast):
            return NotImplemented
        return (self.root == other.root and self.nodes == other.nodes
                and self.function_name == other.function_name
                and tuple(self.source_lines) == tuple(other.source_lines))

    def __getitem__(self, node_id: int) -> AstNode:
        return self.nodes[node_id]

    @cached_property
    def parents(self) -> dict[int, int | None]:
        parent: dict[int, int | None] = {self.root: None}
        for node in self.nodes.values():
            for c in node.children:
                parent[c] = node.id
        return parent

    def ancestors(self, node_id: int) -> list[int]:
        """Node ids from ``node_id`` (inclusive) up to the root."""
        out = [node_id]
        parent = self.parents
        while parent[out[-1]] is not None:
            out.append(parent[out[-1]])
        return out

    def preorder(self) -> list[int]:
        out, stack = [], [self.root]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(reversed(self.nodes[nid].children))
        return out


def leaves(ast: Ast) -> list[int]:
    """Leaf node ids, left to right."""
    return [nid for nid in ast.preorder() if not ast.nodes[nid].children]


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<pp>\#[^\n]*)
  | (?P<float>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fFlL]?|\d+[eE][+-]?\d+[fFlL]?)
  | (?P<int>0[xX][0-9a-fA-F]+[uUlL]*|\d+[uUlL]*)
  | (?P<char>'(?:\\.|[^\\'\n])+')
  | (?P<string>"(?:\\.|[^\\"\n])*")
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<punct><<=|>>=|\+\+|--|&&|\|\||==|!=|<=|>=|\+=|-=|\*=|/=|%=|&=|\|=|\^=
               |<<|>>|->|[{}()\[\];,=<>+\-*/%!~&|^?:.])
    """,
    re.VERBOSE | re.DOTALL,
)

TYPE_WORDS = {"void", "int", "char", "short", "long", "float", "double",
              "unsigned", "signed"}
UNSUPPORTED_WORDS = {
    "struct", "union", "enum", "typedef", "switch", "case", "default", "do",
    "goto", "break", "continue", "sizeof", "static", "const", "extern",
    "volatile", "register", "auto", "inline", "restrict",
}
KEYWORDS = TYPE_WORDS | UNSUPPORTED_WORDS | {"if", "else", "while", "for", "return"}

ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="}
BINARY_PREC = {
    "||": 1, "&&": 2, "|": 3, "^": 4, "&": 5, "==": 6, "!=": 6,
    "<": 7, ">": 7, "<=": 7, ">=": 7, "<<": 8, ">>": 8,
    "+": 9, "-": 9, "*": 10, "/": 10, "%": 10,
}
PREFIX_OPS = {"-", "+", "!", "~", "&", "++", "--"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, pos = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SourceSyntaxError(line, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        s = m.group()
        if kind == "pp":
            if not re.match(r"#\s*include\b", s):
                raise UnsupportedConstruct(line, "preprocessor directive")
        elif kind == "ident":
            toks.append(_Tok("kw" if s in KEYWORDS else "ident", s, line))
        elif kind in ("float", "int", "char", "string"):
            toks.append(_Tok("lit", s, line))
        elif kind == "punct":
            toks.append(_Tok("punct", s, line))
        line += s.count("\n")
        pos = m.end()
    return toks


# --------------------------------------------------------------------------
# parser; builds a tree of _N then numbers it in preorder


@dataclass
class _N:
    kind: str
    token: str | None = None
    line: int = 0
    children: list = field(default_factory=list)


class _Parser:
    def __init__(self, toks: list[_Tok], last_line: int):
        self.toks = toks
        self.i = 0
        self.last_line = last_line

    # -- token helpers

    def peek(self, k=0) -> _Tok | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def line(self) -> int:
        t = self.peek()
        return t.line if t else self.last_line

    def at(self, text: str, k=0) -> bool:
        t = self.peek(k)
        return t is not None and t.kind in ("punct", "kw") and t.text == text

    def next(self) -> _Tok:
        t = self.peek()
        if t is None:
            raise SourceSyntaxError(self.last_line, "unexpected end of input")
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t is None or t.text != text or t.kind not in ("punct", "kw"):
            got = "end of input" if t is None else repr(t.text)
            raise SourceSyntaxError(self.line(), f"expected {text!r}, got {got}")
        return self.next()

    def check_unsupported(self):
        t = self.peek()
        if t is not None and t.kind == "kw" and t.text in UNSUPPORTED_WORDS:
            raise UnsupportedConstruct(t.line, t.text)

    def at_type(self) -> bool:
        t = self.peek()
        return t is not None and t.kind == "kw" and t.text in TYPE_WORDS

    # -- declarations

    def type_spec(self) -> _N:
        self.check_unsupported()
        if not self.at_type():
            raise SourceSyntaxError(self.line(), "expected a type name")
        first = self.peek()
        words = []
        while self.at_type():
            words.append(self.next().text)
        self.check_unsupported()
        if self.at("*"):
            raise UnsupportedConstruct(self.line(), "pointer type")
        return _N("TypeFullName", " ".join(words), first.line)

    def ident(self) -> _Tok:
        t = self.peek()
        if t is None or t.kind != "ident":
            self.check_unsupported()
            got = "end of input" if t is None else repr(t.text)
            raise SourceSyntaxError(self.line(), f"expected identifier, got {got}")
        return self.next()

    def function(self) -> tuple[_N, str]:
        ret_type = self.type_spec()
        name = self.ident()
        if not self.at("("):
            raise UnsupportedConstruct(name.line, "global declaration")
        self.expect("(")
        params = []
        if self.at("void") and self.at(")", 1):
            self.next()
        elif not self.at(")"):
            while True:
                ptype = self.type_spec()
                pname = self.ident()
                if self.at("["):
                    raise UnsupportedConstruct(self.line(), "array parameter")
                params.append(_N("Parameter", children=[
                    ptype, _N("Name", pname.text, pname.line)]))
                if not self.at(","):
                    break
                self.next()
        self.expect(")")
        if self.at(";"):
            raise UnsupportedConstruct(self.line(), "function prototype")
        body = self.block()
        method = _N("METHOD", children=params + [body, _N("MethodReturn", children=[ret_type])])
        return method, name.text

    def block(self) -> _N:
        open_tok = self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.peek() is None:
                raise SourceSyntaxError(self.last_line, "unterminated block")
            stmts.extend(self.statement())
        self.expect("}")
        if not stmts:
            return _N("Block", "{}", open_tok.line)
        return _N("Block", children=stmts)

    def statement(self) -> list[_N]:
        """One statement; a multi-declarator declaration yields several nodes."""
        self.check_unsupported()
        t = self.peek()
        if self.at("{"):
            return [self.block()]
        if self.at(";"):
            self.next()
            return []
        if self.at_type():
            decls = self.declaration()
            self.expect(";")
            return decls
        if t.kind == "kw":
            if t.text == "if":
                return [self.if_stmt()]
            if t.text == "while":
                self.next()
                self.expect("(")
                cond = self.expression()
                self.expect(")")
                return [_N("While", children=[cond, self.body()])]
            if t.text == "for":
                return [self.for_stmt()]
            if t.text == "return":
                self.next()
                if self.at(";"):
                    self.next()
                    return [_N("Return", "return", t.line)]
                value = self.expression()
                self.expect(";")
                return [_N("Return", children=[value])]
            if t.text == "else":
                raise SourceSyntaxError(t.line, "'else' without 'if'")
        expr = self.expression()
        self.expect(";")
        return [expr]

    def body(self) -> _N:
        """Statement used as the body of a control structure."""
        t = self.peek()
        stmts = self.statement()
        if not stmts:
            return _N("Block", ";", t.line)
        if len(stmts) > 1:
            return _N("Block", children=stmts)
        return stmts[0]

    def if_stmt(self) -> _N:
        self.expect("if")
        self.expect("(")
        cond = self.expression()
        self.expect(")")
        children = [cond, self.body()]
        if self.at("else"):
            self.next()
            children.append(_N("Else", children=[self.body()]))
        return _N("If", children=children)

    def for_stmt(self) -> _N:
        self.expect("for")
        self.expect("(")
        parts = []
        if self.at_type():
            decls = self.declaration()
            if len(decls) > 1:
                raise UnsupportedConstruct(self.line(), "multiple declarators in for-init")
            parts.extend(decls)
        elif not self.at(";"):
            parts.append(self.expression())
        self.expect(";")
        if not self.at(";"):
            parts.append(self.expression())
        self.expect(";")
        if not self.at(")"):
            parts.append(self.expression())
        self.expect(")")
        return _N("For", children=parts + [self.body()])

    def declaration(self) -> list[_N]:
        ts = self.type_spec()
        out = []
        while True:
            if self.at("*"):
                raise UnsupportedConstruct(self.line(), "pointer declarator")
            name = self.ident()
            if self.at("["):
                raise UnsupportedConstruct(self.line(), "array declarator")
            children = [_N("TypeFullName", ts.token, ts.line), _N("Name", name.text, name.line)]
            if self.at("="):
                self.next()
                children.append(self.assignment())
            out.append(_N("Decl", children=children))
            if not self.at(","):
                return out
            self.next()

    # -- expressions

    def expression(self) -> _N:
        e = self.assignment()
        if self.at(","):
            raise UnsupportedConstruct(self.line(), "comma operator")
        return e

    def assignment(self) -> _N:
        lhs = self.binary(1)
        t = self.peek()
        if t is not None and t.kind == "punct" and t.text in ASSIGN_OPS:
            if lhs.kind != "Name":
                raise SourceSyntaxError(t.line, "assignment target must be a variable")
            self.next()
            rhs = self.assignment()
            return _N("Assign", children=[lhs, _N("Assign", t.text, t.line), rhs])
        if self.at("?"):
            raise UnsupportedConstruct(self.line(), "conditional operator")
        return lhs

    def binary(self, min_prec: int) -> _N:
        lhs = self.unary()
        while True:
            t = self.peek()
            if t is None or t.kind != "punct" or t.text not in BINARY_PREC:
                return lhs
            prec = BINARY_PREC[t.text]
            if prec < min_prec:
                return lhs
            self.next()
            rhs = self.binary(prec + 1)
            lhs = _N("BinaryOp", children=[lhs, _N("BinaryOp", t.text, t.line), rhs])

    def unary(self) -> _N:
        t = self.peek()
        if t is not None and t.kind == "punct":
            if t.text == "*":
                raise UnsupportedConstruct(t.line, "pointer dereference")
            if t.text in PREFIX_OPS:
                self.next()
                operand = self.unary()
                return _N("UnaryOp", children=[_N("UnaryOp", t.text, t.line), operand])
        self.check_unsupported()
        return self.postfix(self.primary())

    def postfix(self, e: _N) -> _N:
        while True:
            t = self.peek()
            if t is None or t.kind != "punct":
                return e
            if t.text in ("++", "--"):
                self.next()
                e = _N("UnaryOp", children=[e, _N("UnaryOp", t.text, t.line)])
            elif t.text == "(":
                if e.kind != "Name":
                    raise UnsupportedConstruct(t.line, "indirect call")
                self.next()
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.assignment())
                        if not self.at(","):
                            break
                        self.next()
                self.expect(")")
                children = [e] + ([_N("ArgList", children=args)] if args else [])
                e = _N("Call", children=children)
            elif t.text == "[":
                raise UnsupportedConstruct(t.line, "array subscript")
            elif t.text in (".", "->"):
                raise UnsupportedConstruct(t.line, "member access")
            else:
                return e

    def primary(self) -> _N:
        t = self.peek()
        if t is None:
            raise SourceSyntaxError(self.last_line, "unexpected end of input")
        if t.kind == "ident":
            self.next()
            return _N("Name", t.text, t.line)
        if t.kind == "lit":
            self.next()
            return _N("Literal", t.text, t.line)
        if t.text == "(":
            if self.peek(1) is not None and self.peek(1).kind == "kw" \
                    and self.peek(1).text in TYPE_WORDS:
                raise UnsupportedConstruct(t.line, "cast")
            self.next()
            e = self.expression()
            self.expect(")")
            return e
        raise SourceSyntaxError(t.line, f"unexpected token {t.text!r}")


def _number(root: _N, function_name: str, source_lines) -> Ast:
    nodes: dict[int, AstNode] = {}
    counter = 0

    def visit(n: _N) -> tuple[int, int, int]:
        nonlocal counter
        nid = counter
        counter += 1
        if not n.children:
            nodes[nid] = AstNode(nid, n.kind, n.token, n.line, n.line, ())
            return nid, n.line, n.line
        kids, lo, hi = [], None, None
        for c in n.children:
            cid, cl, ch = visit(c)
            kids.append(cid)
            lo = cl if lo is None else min(lo, cl)
            hi = ch if hi is None else max(hi, ch)
        nodes[nid] = AstNode(nid, n.kind, None, lo, hi, tuple(kids))
        return nid, lo, hi

    visit(root)
    return Ast(0, nodes, function_name, tuple(source_lines))


def parse_source(text: str) -> Ast:
    """Parse one C function definition (see module docstring for the subset)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    toks = _tokenize(text)
    if not toks:
        raise EmptyInput("no function definition found")
    lines = text.splitlines()
    p = _Parser(toks, max(1, len(lines)))
    method, name = p.function()
    if p.peek() is not None:
        t = p.peek()
        if t.kind == "kw" and t.text in TYPE_WORDS:
            raise UnsupportedConstruct(t.line, "multiple function definitions")
        raise SourceSyntaxError(t.line, f"unexpected token {t.text!r} after function")
    return _number(method, name, lines)


# --------------------------------------------------------------------------
# JSON interchange

def ast_to_dict(ast: Ast) -> dict:
    nodes = []
    for nid in sorted(ast.nodes):
        n = ast.nodes[nid]
        d = {"id": n.id, "kind": n.kind}
        if n.token is not None:
            d["token"] = n.token
        d["line_start"] = n.line_start
        d["line_end"] = n.line_end
        d["children"] = list(n.children)
        nodes.append(d)
    return {
        "function_name": ast.function_name,
        "source": list(ast.source_lines),
        "root": ast.root,
        "nodes": nodes,
    }


def dump_ast_json(ast: Ast) -> bytes:
    """Canonical serialization: nodes sorted by id, no insignificant whitespace."""
    return json.dumps(ast_to_dict(ast), ensure_ascii=False,
                      separators=(",", ":")).encode("utf-8")


def _req(obj, key, typ, path):
    if key not in obj:
        raise SchemaError(path, f"missing key {key!r}")
    v = obj[key]
    if typ is int and (isinstance(v, bool) or not isinstance(v, int)):
        raise SchemaError(f"{path}.{key}", "expected integer")
    if typ is not int and not isinstance(v, typ):
        raise SchemaError(f"{path}.{key}", f"expected {typ.__name__}")
    return v


def ast_from_dict(doc) -> Ast:
    if not isinstance(doc, dict):
        raise SchemaError("$", "top level must be an object")
    fname = _req(doc, "function_name", str, "$")
    source = _req(doc, "source", list, "$")
    for i, s in enumerate(source):
        if not isinstance(s, str):
            raise SchemaError(f"$.source[{i}]", "expected string")
    root = _req(doc, "root", int, "$")
    raw_nodes = _req(doc, "nodes", list, "$")

    nodes: dict[int, AstNode] = {}
    for i, rn in enumerate(raw_nodes):
        path = f"$.nodes[{i}]"
        if not isinstance(rn, dict):
            raise SchemaError(path, "node must be an object")
        nid = _req(rn, "id", int, path)
        kind = _req(rn, "kind", str, path)
        token = rn.get("token")
        if token is not None and not isinstance(token, str):
            raise SchemaError(f"{path}.token", "expected string")
        ls = _req(rn, "line_start", int, path)
        le = _req(rn, "line_end", int, path)
        children = _req(rn, "children", list, path)
        for j, c in enumerate(children):
            if isinstance(c, bool) or not isinstance(c, int):
                raise SchemaError(f"{path}.children[{j}]", "expected integer")
        if nid in nodes:
            raise SchemaError(f"{path}.id", f"duplicate node id {nid}")
        if ls < 1 or le < ls:
            raise SchemaError(path, f"bad line span {ls}..{le}")
        if (token is None) == (len(children) == 0):
            raise SchemaError(path, "leaves must carry a token and interior nodes must not")
        nodes[nid] = AstNode(nid, kind, token, ls, le, tuple(children))

    if root not in nodes:
        raise SchemaError("$.root", f"root {root} is not a node")
    parent: dict[int, int] = {}
    for nid, n in nodes.items():
        for j, c in enumerate(n.children):
            if c not in nodes:
                raise SchemaError(f"$.nodes[id={nid}].children[{j}]", f"unknown node id {c}")
            if c in parent:
                raise SchemaError(f"$.nodes[id={c}]", "node has more than one parent")
            parent[c] = nid
    for nid in nodes:
        seen = set()
        cur = nid
        while cur in parent:
            if cur in seen:
                raise CycleError(f"$.nodes[id={nid}]", "parent links form a cycle")
            seen.add(cur)
            cur = parent[cur]
    if root in parent:
        raise CycleError("$.root", "root has a parent")
    orphans = sorted(nid for nid in nodes if nid != root and nid not in parent)
    if orphans:
        raise SchemaError(f"$.nodes[id={orphans[0]}]", "node unreachable from root")
    for nid, n in nodes.items():
        for c in n.children:
            ch = nodes[c]
            if ch.line_start < n.line_start or ch.line_end > n.line_end:
                raise SchemaError(f"$.nodes[id={nid}]", f"line span does not contain child {c}")
    return Ast(root, nodes, fname, tuple(source))


def load_ast_json(data: bytes | str) -> Ast:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise SchemaError("$", f"not UTF-8: {e}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise SchemaError("$", f"invalid JSON: {e}") from None
    return ast_from_dict(doc)

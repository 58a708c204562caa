"""Synthetic "unchecked return value" corpus.

Vulnerable functions call a library routine whose result must be inspected
(``scanf``, ``remove``, ``fputs`` ...) as a bare expression statement. Fixed
variants bind or test the result. Both classes share the same distribution of
distractor statements, identifier names and literal values, so the class is
decided by how the checked call is used and nothing else.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

# name, argument template, failure test used by fixed variants
CHECKED_CALLS = (
    ("scanf", '"%d", &{var}', "!= 1"),
    ("sscanf", '"{num}", "%d", &{var}', "!= 1"),
    ("fscanf", 'stdin, "%d", &{var}', "!= 1"),
    ("remove", '"{file}"', "!= 0"),
    ("rename", '"{file}", "{file2}"', "!= 0"),
    ("fgetc", "stdin", "== EOF"),
    ("fputc", "'{ch}', stdout", "== EOF"),
    ("fputs", '"{msg}", stdout', "== EOF"),
    ("fflush", "stdout", "!= 0"),
    ("putchar", "'{ch}'", "== EOF"),
)
CHECKED_NAMES = frozenset(c[0] for c in CHECKED_CALLS)

_VARS = ("data", "count", "value", "total", "index", "result", "number", "size",
         "offset", "limit", "flag", "level", "amount", "width", "height", "score")
_FUNCS = ("process", "handle_input", "run_task", "do_work", "helper", "action",
          "update_state", "read_config", "worker", "step", "execute", "service")
_FILES = ("data.txt", "config.ini", "out.log", "tmp.bin", "cache.db", "notes.md")
_MSGS = ("done", "value read", "operation failed", "processing", "hello", "ok",
         "start", "finished", "retry", "skipped") + tuple(f"{c[0]} failed" for c in CHECKED_CALLS)


@dataclass(frozen=True)
class SyntheticSample:
    name: str
    source: str
    label: int               # 1 vulnerable, 0 fixed
    call_line: int           # line of the checked call (1-based)
    callee: str

    @property
    def planted_line(self) -> int | None:
        return self.call_line if self.label == 1 else None


class _Builder:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.lines: list[str] = []
        self.vars = rng.sample(_VARS, 4)

    def emit(self, text: str, depth: int = 1):
        self.lines.append("    " * depth + text)
        return len(self.lines)

    def var(self):
        return self.rng.choice(self.vars)

    def num(self):
        return str(self.rng.randint(0, 99))

    def msg(self):
        return self.rng.choice(_MSGS)

    def distractor(self):
        r = self.rng.randrange(9)
        v = self.var()
        if r == 0:
            self.emit(f"{v} = {v} + {self.num()};")
        elif r == 1:
            self.emit(f"{v} += {self.var()};")
        elif r == 2:
            self.emit(f"printIntLine({v});")
        elif r == 3:
            self.emit(f'printLine("{self.msg()}");')
        elif r == 4:
            self.emit(f'printf("%d\\n", {v});')
        elif r == 5:
            self.emit(f"if ({v} > {self.num()})")
            self.emit("{")
            self.emit(f'printLine("{self.msg()}");', 2)
            self.emit("}")
        elif r == 6:
            self.emit(f"while ({v} < {self.num()})")
            self.emit("{")
            self.emit(f"{v}++;", 2)
            self.emit("}")
        elif r == 7:
            self.emit(f"for (int i = 0; i < {self.num()}; i++)")
            self.emit("{")
            self.emit(f"{v} = {v} * 2;", 2)
            self.emit("}")
        else:
            self.emit(f"{v} = {self.var()} - {self.num()};")

    def checked_call(self):
        name, args, fail = self.rng.choice(CHECKED_CALLS)
        files = self.rng.sample(_FILES, 2)
        text = args.format(var=self.vars[0], num=self.num(), file=files[0], file2=files[1],
                           ch=self.rng.choice("abcxyz"), msg=self.msg())
        return name, f"{name}({text})", fail


def _one(rng: random.Random, label: int, index: int) -> SyntheticSample:
    b = _Builder(rng)
    returns_int = rng.random() < 0.5
    fname = f"{rng.choice(_FUNCS)}_{index}"
    b.lines.append(f"{'int' if returns_int else 'void'} {fname}()")
    b.lines.append("{")
    for v in b.vars:
        b.emit(f"int {v} = {b.num()};")
    for _ in range(rng.randint(0, 3)):
        b.distractor()
    callee, call, fail = b.checked_call()
    if label == 1:
        line = b.emit(f"{call};")
    else:
        style = rng.randrange(3)
        if style == 0:
            line = b.emit(f"if ({call} {fail})")
        elif style == 1:
            line = b.emit(f"int status = {call};")
            b.emit(f"if (status {fail})")
        else:
            line = b.emit(f"{b.vars[1]} = {call};")
            b.emit(f"if ({b.vars[1]} {fail})")
        b.emit("{")
        b.emit(f'printLine("{b.msg()}");', 2)
        if returns_int:
            b.emit("return -1;", 2)
        else:
            b.emit("return;", 2)
        b.emit("}")
    for _ in range(rng.randint(1, 3)):
        b.distractor()
    if returns_int:
        b.emit(f"return {b.var()};")
    b.lines.append("}")
    return SyntheticSample(fname, "\n".join(b.lines) + "\n", label, line, callee)


def generate_synthetic_corpus(n_samples: int, seed: int = 0) -> list[SyntheticSample]:
    """``n_samples`` functions, alternating vulnerable (even index) and fixed."""
    if n_samples < 2 or n_samples % 2:
        raise ValueError("n_samples must be an even number >= 2")
    rng = random.Random(seed)
    return [_one(rng, 1 if i % 2 == 0 else 0, i) for i in range(n_samples)]

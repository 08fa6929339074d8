"""Tokenizer, parser and canonical printer for ``.cadl`` programs.

See ``docs/grammar.md`` for the EBNF.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .ast import COMBINES, DOMAIN, MODES, PLANES, Circle, Extrude, Polygon, Program, Rect, polygon_is_degenerate


class DslError(ValueError):
    def __init__(self, line: int, col: int, message: str) -> None:
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class ParseError(DslError):
    pass


class RangeError(DslError):
    pass


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[={}])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            got = tok.text or "end of input"
            raise ParseError(tok.line, tok.col, f"expected {want!r}, got {got!r}")
        return tok

    def number(self, *, positive: bool = False) -> float:
        tok = self.next()
        if tok.kind != "number":
            raise ParseError(tok.line, tok.col, f"expected a number, got {tok.text or 'end of input'!r}")
        value = float(tok.text)
        if not math.isfinite(value) or abs(value) > DOMAIN:
            raise RangeError(tok.line, tok.col, f"{tok.text} outside [-{DOMAIN:g}, {DOMAIN:g}]")
        if positive and value <= 0:
            raise RangeError(tok.line, tok.col, f"{tok.text} must be positive")
        return value

    def program(self) -> Program:
        steps = []
        while self.peek().kind != "eof":
            steps.append(self.step(first=not steps))
        if not steps:
            tok = self.peek()
            raise ParseError(tok.line, tok.col, "program has no steps")
        return Program(tuple(steps))

    def step(self, first: bool) -> Extrude:
        kw = self.next()
        if kw.kind != "ident" or kw.text != "extrude":
            raise ParseError(kw.line, kw.col, f"unknown keyword {kw.text!r}, expected 'extrude'")
        opts: dict[str, object] = {}
        while self.peek().kind == "ident":
            key = self.next()
            if key.text in opts:
                raise ParseError(key.line, key.col, f"duplicate option {key.text!r}")
            self.expect("punct", "=")
            if key.text == "plane":
                val = self.expect("ident")
                if val.text not in PLANES:
                    raise ParseError(val.line, val.col, f"unknown plane {val.text!r}")
                opts["plane"] = val.text
            elif key.text == "op":
                val = self.expect("ident")
                if val.text not in COMBINES:
                    raise ParseError(val.line, val.col, f"unknown combine {val.text!r}")
                if first != (val.text == "new"):
                    msg = "first step must use op=new" if first else "op=new only allowed on the first step"
                    raise ParseError(val.line, val.col, msg)
                opts["op"] = val.text
            elif key.text == "z0":
                opts["z0"] = self.number()
            elif key.text == "h":
                opts["h"] = self.number(positive=True)
            else:
                raise ParseError(key.line, key.col, f"unknown option {key.text!r}")
        if "h" not in opts:
            raise ParseError(kw.line, kw.col, "extrude requires h=<height>")
        self.expect("punct", "{")
        sketch = []
        while not (self.peek().kind == "punct" and self.peek().text == "}"):
            sketch.append(self.primitive())
        close = self.expect("punct", "}")
        if not sketch:
            raise ParseError(close.line, close.col, "empty sketch")
        return Extrude(
            sketch=tuple(sketch),
            plane=str(opts.get("plane", "XY")),
            offset=float(opts.get("z0", 0.0)),  # type: ignore[arg-type]
            height=float(opts["h"]),  # type: ignore[arg-type]
            combine=str(opts.get("op", "new" if first else "union")),
        )

    def primitive(self):
        mode = self.next()
        if mode.kind != "ident" or mode.text not in MODES:
            raise ParseError(mode.line, mode.col, f"expected 'add' or 'subtract', got {mode.text or 'end of input'!r}")
        kind = self.next()
        if kind.text == "rect":
            cx, cy = self.number(), self.number()
            w, h = self.number(positive=True), self.number(positive=True)
            return Rect(cx, cy, w, h, mode.text)
        if kind.text == "circle":
            cx, cy = self.number(), self.number()
            return Circle(cx, cy, self.number(positive=True), mode.text)
        if kind.text == "polygon":
            coords = []
            while self.peek().kind == "number":
                coords.append(self.number())
            if len(coords) % 2:
                raise ParseError(kind.line, kind.col, "polygon needs an even number of coordinates")
            pts = tuple(zip(coords[::2], coords[1::2]))
            if polygon_is_degenerate(pts):
                raise RangeError(kind.line, kind.col, "polygon needs >= 3 non-collinear vertices")
            return Polygon(pts, mode.text)
        raise ParseError(kind.line, kind.col, f"unknown primitive {kind.text or 'end of input'!r}")


def parse(text: str) -> Program:
    return _Parser(text).program()


def format_number(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _format_primitive(p) -> str:
    f = format_number
    if isinstance(p, Rect):
        return f"{p.mode} rect {f(p.cx)} {f(p.cy)} {f(p.w)} {f(p.h)}"
    if isinstance(p, Circle):
        return f"{p.mode} circle {f(p.cx)} {f(p.cy)} {f(p.r)}"
    if isinstance(p, Polygon):
        return f"{p.mode} polygon " + " ".join(f"{f(x)} {f(y)}" for x, y in p.points)
    raise TypeError(f"not a primitive: {p!r}")


def to_text(program: Program) -> str:
    """Canonical program text; structurally equal programs print identically."""
    lines = []
    for i, step in enumerate(program.steps):
        head = f"extrude plane={step.plane} z0={format_number(step.offset)} h={format_number(step.height)}"
        if i > 0:
            head += f" op={step.combine}"
        lines.append(head + " {")
        lines += ["  " + _format_primitive(p) for p in step.sketch]
        lines.append("}")
    return "\n".join(lines) + "\n"

"""A small expression language for the symbols ``u``, ``phi`` and weights ``omega``.

Grammar (whitespace insignificant)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := ("-" | "+") factor | atom ("^" signed_number)?
    atom   := "z" | "i" | number | number "i" | "(" expr ")" | func "(" expr ")"
    func   := "abs" | "re" | "im" | "max0" | "indisk"        (weights only)

``indisk(w)`` is 1 where ``|w| < 1`` and 0 elsewhere; ``max0(w)`` is
``max(Re w, 0)``. Symbol expressions admit no function calls at all, which
keeps them holomorphic by construction.

Evaluation is vectorised over numpy arrays. Real powers use the principal
branch.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "BinOp",
    "Call",
    "Const",
    "ExpressionError",
    "Neg",
    "Pow",
    "SelfMapReport",
    "SymbolExpression",
    "Var",
    "WEIGHT_FUNCTIONS",
    "affine_symbol",
    "default_lattice",
    "evaluate",
    "holomorphy_residual",
    "mobius_symbol",
    "parse",
    "parse_weight",
    "to_text",
    "verify_self_map",
]

WEIGHT_FUNCTIONS = ("abs", "re", "im", "max0", "indisk")


class ExpressionError(ValueError):
    """Syntax or context error, located by byte offset into the source text."""

    def __init__(self, message: str, text: str, pos: int):
        self.offset = len(text[:pos].encode("utf-8"))
        self.text = text
        super().__init__(f"{message} at byte {self.offset}")


# --- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Const:
    value: complex


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: Union[int, float]


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Var, Const, Neg, BinOp, Pow, Call]


# --- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z0-9_]))?"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


@dataclass
class _Tok:
    kind: str  # num, imag, name, op, end
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            toks.append(_Tok("end", "", pos))
            return toks
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos]!r}", text, pos)
        start = m.start(m.lastgroup) if m.lastgroup != "imag" else m.start("num")
        if m.group("num") is not None:
            kind = "imag" if m.group("imag") else "num"
            toks.append(_Tok(kind, m.group("num"), m.start("num")))
        elif m.group("name") is not None:
            toks.append(_Tok("name", m.group("name"), m.start("name")))
        else:
            toks.append(_Tok("op", m.group("op"), start))
        pos = m.end()


class _Parser:
    def __init__(self, text: str, weight: bool):
        self.text = text
        self.weight = weight
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ExpressionError(msg, self.text, tok.pos)

    def eat(self, kind: str, text: str | None = None) -> _Tok:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text or "end of input"
            self.error(f"expected {want!r}, found {got!r}")
        self.i += 1
        return t

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.eat("op").text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.eat("op").text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.tok.kind == "op" and self.tok.text in "+-":
            sign = self.eat("op").text
            inner = self.factor()
            return Neg(inner) if sign == "-" else inner
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.eat("op")
            return Pow(base, self.signed_number())
        return base

    def signed_number(self) -> Union[int, float]:
        sign = 1
        if self.tok.kind == "op" and self.tok.text in "+-":
            sign = -1 if self.eat("op").text == "-" else 1
        if self.tok.kind != "num":
            self.error("exponent must be a real number literal")
        t = self.eat("num").text
        if re.fullmatch(r"\d+", t):
            return sign * int(t)
        return sign * float(t)

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Const(complex(float(t.text), 0.0))
        if t.kind == "imag":
            self.i += 1
            return Const(complex(0.0, float(t.text)))
        if t.kind == "op" and t.text == "(":
            self.eat("op", "(")
            node = self.expr()
            self.eat("op", ")")
            return node
        if t.kind == "name":
            self.i += 1
            if t.text == "z":
                return Var()
            if t.text == "i":
                return Const(1j)
            if t.text in WEIGHT_FUNCTIONS or t.text == "conj":
                if not self.weight:
                    self.error(f"{t.text}() is not allowed in a holomorphic symbol", t)
                if t.text == "conj":
                    self.error("conj() is not supported", t)
                self.eat("op", "(")
                arg = self.expr()
                self.eat("op", ")")
                return Call(t.text, arg)
            self.error(f"unknown name {t.text!r}", t)
        self.error(f"unexpected {t.text or 'end of input'!r}")


# --- evaluation --------------------------------------------------------------


def evaluate(node: Node, z):
    """Evaluate ``node`` at ``z`` (complex scalar or array)."""
    if isinstance(node, Var):
        return z
    if isinstance(node, Const):
        return node.value + 0 * z
    if isinstance(node, Neg):
        return -evaluate(node.arg, z)
    if isinstance(node, BinOp):
        a = evaluate(node.left, z)
        b = evaluate(node.right, z)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Pow):
        b = evaluate(node.base, z)
        e = node.exponent
        if isinstance(e, int):
            if e >= 0:
                return b**e
            return 1 / b ** (-e)
        return np.power(b, e)
    if isinstance(node, Call):
        v = evaluate(node.arg, z)
        f = node.func
        if f == "abs":
            return np.abs(v) + 0j
        if f == "re":
            return np.real(v) + 0j
        if f == "im":
            return np.imag(v) + 0j
        if f == "max0":
            return np.maximum(np.real(v), 0.0) + 0j
        if f == "indisk":
            return (np.abs(v) < 1).astype(float) + 0j
    raise TypeError(f"not an expression node: {node!r}")


def _fmt_real(x: float) -> str:
    return repr(float(x))


def to_text(node: Node) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(node, Var):
        return "z"
    if isinstance(node, Const):
        c = node.value
        if c.imag == 0:
            s = _fmt_real(c.real)
            return s if c.real >= 0 else f"(-{_fmt_real(-c.real)})"
        if c.real == 0 and c.imag > 0:
            return f"{_fmt_real(c.imag)}i"
        return f"({_fmt_real(c.real)}+{_fmt_real(c.imag)}i)" if c.imag > 0 else \
            f"({_fmt_real(c.real)}-{_fmt_real(-c.imag)}i)"
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)}{node.op}{to_text(node.right)})"
    if isinstance(node, Pow):
        base = to_text(node.base)
        if isinstance(node.base, Pow):
            base = f"({base})"
        return f"{base}^{node.exponent!r}"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def _affine(node: Node):
    """``(a, b)`` with ``node == a*z + b`` structurally, or None."""
    if isinstance(node, Var):
        return 1 + 0j, 0j
    if isinstance(node, Const):
        return 0j, node.value
    if isinstance(node, Neg):
        r = _affine(node.arg)
        return None if r is None else (-r[0], -r[1])
    if isinstance(node, BinOp):
        lhs, rhs = _affine(node.left), _affine(node.right)
        if lhs is None or rhs is None:
            return None
        (a1, b1), (a2, b2) = lhs, rhs
        if node.op == "+":
            return a1 + a2, b1 + b2
        if node.op == "-":
            return a1 - a2, b1 - b2
        if node.op == "*":
            if a1 == 0:
                return b1 * a2, b1 * b2
            if a2 == 0:
                return a1 * b2, b1 * b2
            return None
        if a2 == 0 and b2 != 0:
            return a1 / b2, b1 / b2
        return None
    if isinstance(node, Pow):
        r = _affine(node.base)
        if r is None:
            return None
        a, b = r
        if node.exponent == 1:
            return r
        if node.exponent == 0:
            return 0j, 1 + 0j
        if a == 0 and b != 0:
            return 0j, complex(np.power(b, node.exponent))
        return None
    return None


class SymbolExpression:
    """A parsed expression together with its source text.

    Calling the object evaluates it on a complex array. Weight expressions
    return real arrays.
    """

    def __init__(self, text: str, weight: bool = False):
        self.text = text
        self.weight = weight
        self.ast = _Parser(text, weight).parse()

    @classmethod
    def from_ast(cls, ast: Node, weight: bool = False) -> "SymbolExpression":
        return cls(to_text(ast), weight)

    def __call__(self, z):
        v = evaluate(self.ast, np.asarray(z, dtype=complex))
        if self.weight:
            return np.real(v)
        return v

    def __repr__(self):
        kind = "WeightExpression" if self.weight else "SymbolExpression"
        return f"{kind}({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, SymbolExpression) and self.ast == other.ast \
            and self.weight == other.weight

    def __hash__(self):
        return hash((self.ast, self.weight))

    def at(self, point) -> complex:
        """Value at a :class:`HalfPlanePoint` or complex number."""
        z = complex(point.x, point.y) if hasattr(point, "y") else complex(point)
        return complex(evaluate(self.ast, z))

    def affine(self):
        """``(a, b)`` when the expression is ``a*z + b``; None otherwise."""
        if self.weight:
            return None
        return _affine(self.ast)

    def constant(self):
        r = self.affine()
        if r is not None and r[0] == 0:
            return r[1]
        return None


def parse(text: str) -> SymbolExpression:
    """Parse a holomorphic symbol (no function calls allowed)."""
    return SymbolExpression(text, weight=False)


def parse_weight(text: str) -> SymbolExpression:
    """Parse a weight expression; the value is the real part of the result."""
    return SymbolExpression(text, weight=True)


def affine_symbol(a: complex, b: complex) -> SymbolExpression:
    return SymbolExpression.from_ast(BinOp("+", BinOp("*", _const(a), Var()), _const(b)))


def mobius_symbol(a: float, b: float, c: float, d: float) -> SymbolExpression:
    num = BinOp("+", BinOp("*", _const(a), Var()), _const(b))
    den = BinOp("+", BinOp("*", _const(c), Var()), _const(d))
    return SymbolExpression.from_ast(BinOp("/", num, den))


def _const(c: complex) -> Node:
    c = complex(c)
    if c.imag == 0 and c.real < 0:
        return Neg(Const(complex(-c.real, 0.0)))
    return Const(c)


# --- self-map verification ---------------------------------------------------


@dataclass(frozen=True)
class SelfMapReport:
    """Sampled evidence that ``phi`` maps the half-plane into itself."""

    lattice_size: int
    violations: tuple[tuple[float, float, float], ...]
    min_imag: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "lattice_size": self.lattice_size,
            "violations": [list(v) for v in self.violations],
            "min_imag": self.min_imag,
            "verdict": "no violations (sampled evidence)" if self.ok else "violations found",
        }


def default_lattice(n_x: int = 41, n_y: int = 25, x_max: float = 20.0,
                    y_min: float = 1e-3, y_max: float = 1e3) -> np.ndarray:
    xs = np.linspace(-x_max, x_max, n_x)
    ys = np.geomspace(y_min, y_max, n_y)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return (X + 1j * Y).ravel()


def verify_self_map(phi, lattice=None) -> SelfMapReport:
    pts = default_lattice() if lattice is None else np.asarray(lattice, dtype=complex).ravel()
    with np.errstate(all="ignore"):
        w = np.asarray(phi(pts), dtype=complex)
    im = np.imag(w)
    bad = ~np.isfinite(w) | (im <= 0)
    violations = tuple((float(p.real), float(p.imag), float(v))
                       for p, v in zip(pts[bad], im[bad]))
    finite = im[np.isfinite(im)]
    return SelfMapReport(len(pts), violations, float(finite.min()) if finite.size else math.nan)


def holomorphy_residual(f, points, h: float = 1e-5) -> float:
    """Largest relative Cauchy-Riemann residual ``|f_y - i f_x|`` over ``points``."""
    z = np.asarray(points, dtype=complex)
    fx = (f(z + h) - f(z - h)) / (2 * h)
    fy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
    scale = np.abs(fx) + np.abs(fy) + 1e-300
    return float(np.max(np.abs(fy - 1j * fx) / scale))

"""Discounted LTL formulas: AST, concrete syntax, and structural queries.

Concrete syntax (loosest to tightest binding)::

    a | b          disjunction (left-assoc)
    a & b          conjunction (left-assoc)
    a U[l] b       discounted until (right-assoc)
    !a  X[l] a  F[l] a  G[l] a
    p  true  false  ( ... )

Discounts are written as decimals (``0.9``) or fractions (``2/3``) and are
stored as exact :class:`fractions.Fraction` values in ``[0, 1)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterator, Optional, Union

_PROP_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class Formula:
    """Base class of all formula nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)

    def children(self) -> tuple["Formula", ...]:
        return ()


def _check_discount(value) -> Fraction:
    lam = Fraction(value)
    if not 0 <= lam < 1:
        raise ValueError(f"discount must satisfy 0 <= l < 1, got {lam}")
    return lam


@dataclass(frozen=True)
class Atom(Formula):
    name: str

    def __post_init__(self):
        if not _PROP_RE.match(self.name) or self.name in _KEYWORDS:
            raise ValueError(f"invalid proposition name {self.name!r}")


@dataclass(frozen=True)
class Truth(Formula):
    pass


@dataclass(frozen=True)
class Falsity(Formula):
    pass


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Next(Formula):
    discount: Fraction
    operand: Formula

    def __post_init__(self):
        object.__setattr__(self, "discount", _check_discount(self.discount))

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Until(Formula):
    discount: Fraction
    left: Formula
    right: Formula

    def __post_init__(self):
        object.__setattr__(self, "discount", _check_discount(self.discount))

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Finally(Formula):
    discount: Fraction
    operand: Formula

    def __post_init__(self):
        object.__setattr__(self, "discount", _check_discount(self.discount))

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Globally(Formula):
    discount: Fraction
    operand: Formula

    def __post_init__(self):
        object.__setattr__(self, "discount", _check_discount(self.discount))

    def children(self):
        return (self.operand,)


TEMPORAL = (Next, Until, Finally, Globally)
CORE = (Atom, Truth, Falsity, Not, Or, Next, Until)

_KEYWORDS = frozenset({"true", "false", "U", "X", "F", "G"})


def conj(*parts: Formula) -> Formula:
    return reduce(And, parts)


def disj(*parts: Formula) -> Formula:
    return reduce(Or, parts)


# ---------------------------------------------------------------------------
# Parsing


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, text: str, offset: int):
        line = text.count("\n", 0, offset) + 1
        column = offset - (text.rfind("\n", 0, offset) + 1) + 1
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d*)?|\.\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[!&|()\[\]/])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> _Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def error(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.tok
        raise FormulaSyntaxError(message, self.text, tok.pos)

    def expect(self, text: str) -> _Token:
        if self.tok.text != text or self.tok.kind == "eof":
            found = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def at_operator(self, name: str) -> bool:
        return self.tok.kind == "ident" and self.tok.text == name and self.peek().text == "["

    def parse(self) -> Formula:
        f = self.or_expr()
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}")
        return f

    def or_expr(self) -> Formula:
        f = self.and_expr()
        while self.tok.text == "|":
            self.i += 1
            f = Or(f, self.and_expr())
        return f

    def and_expr(self) -> Formula:
        f = self.until_expr()
        while self.tok.text == "&":
            self.i += 1
            f = And(f, self.until_expr())
        return f

    def until_expr(self) -> Formula:
        left = self.unary()
        if self.at_operator("U"):
            self.i += 1
            lam = self.discount()
            return Until(lam, left, self.until_expr())
        return left

    def discount(self) -> Fraction:
        start = self.expect("[")
        num = self.tok
        if num.kind != "num":
            self.error("expected a discount factor")
        self.i += 1
        if self.tok.text == "/":
            self.i += 1
            den = self.tok
            if den.kind != "num" or "." in num.text or "." in den.text:
                self.error("fraction discounts must be int/int")
            self.i += 1
            if int(den.text) == 0:
                self.error("zero denominator", den)
            lam = Fraction(int(num.text), int(den.text))
        else:
            lam = Fraction(num.text)
        self.expect("]")
        if not 0 <= lam < 1:
            self.error(f"discount must be < 1, got {lam}", start)
        return lam

    def unary(self) -> Formula:
        tok = self.tok
        if tok.text == "!":
            self.i += 1
            return Not(self.unary())
        for name, cls in (("X", Next), ("F", Finally), ("G", Globally)):
            if self.at_operator(name):
                self.i += 1
                lam = self.discount()
                return cls(lam, self.unary())
        if tok.text == "(":
            self.i += 1
            f = self.or_expr()
            self.expect(")")
            return f
        if tok.kind == "ident":
            self.i += 1
            if tok.text == "true":
                return Truth()
            if tok.text == "false":
                return Falsity()
            if tok.text in _KEYWORDS:
                self.error(f"operator {tok.text!r} needs a discount '[...]'", tok)
            return Atom(tok.text)
        self.error(f"unexpected {tok.text or 'end of input'!r}")


def parse(text: str) -> Formula:
    """Parse concrete syntax into a formula AST.

    Raises:
        FormulaSyntaxError: with ``line``/``column`` of the offending token.
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printing


def format_discount(lam: Fraction) -> str:
    return str(lam.numerator) if lam.denominator == 1 else f"{lam.numerator}/{lam.denominator}"


_PREC = {Or: 1, And: 2, Until: 3}


def _prec(f: Formula) -> int:
    return _PREC.get(type(f), 4)


def to_text(f: Formula, min_prec: int = 0) -> str:
    """Render ``f`` so that ``parse(to_text(f)) == f``."""
    if isinstance(f, Atom):
        s = f.name
    elif isinstance(f, Truth):
        s = "true"
    elif isinstance(f, Falsity):
        s = "false"
    elif isinstance(f, Not):
        s = "!" + to_text(f.operand, 4)
    elif isinstance(f, (Next, Finally, Globally)):
        op = {Next: "X", Finally: "F", Globally: "G"}[type(f)]
        s = f"{op}[{format_discount(f.discount)}] {to_text(f.operand, 4)}"
    elif isinstance(f, Until):
        s = f"{to_text(f.left, 4)} U[{format_discount(f.discount)}] {to_text(f.right, 3)}"
    elif isinstance(f, (Or, And)):
        p = _prec(f)
        sym = "|" if isinstance(f, Or) else "&"
        s = f"{to_text(f.left, p)} {sym} {to_text(f.right, p + 1)}"
    else:
        raise TypeError(f"not a formula: {f!r}")
    return f"({s})" if _prec(f) < min_prec else s


# ---------------------------------------------------------------------------
# Structural queries


def subformulas(f: Formula) -> Iterator[Formula]:
    """Pre-order traversal (with repetitions)."""
    stack = [f]
    while stack:
        g = stack.pop()
        yield g
        stack.extend(reversed(g.children()))


def propositions(f: Formula) -> frozenset[str]:
    return frozenset(g.name for g in subformulas(f) if isinstance(g, Atom))


def desugar(f: Formula) -> Formula:
    """Rewrite And/Finally/Globally into the core Atom/Not/Or/Next/Until grammar."""
    if isinstance(f, (Atom, Truth, Falsity)):
        return f
    if isinstance(f, Not):
        return Not(desugar(f.operand))
    if isinstance(f, Or):
        return Or(desugar(f.left), desugar(f.right))
    if isinstance(f, And):
        return Not(Or(Not(desugar(f.left)), Not(desugar(f.right))))
    if isinstance(f, Next):
        return Next(f.discount, desugar(f.operand))
    if isinstance(f, Until):
        return Until(f.discount, desugar(f.left), desugar(f.right))
    if isinstance(f, Finally):
        return Until(f.discount, Truth(), desugar(f.operand))
    if isinstance(f, Globally):
        return Not(Until(f.discount, Truth(), Not(desugar(f.operand))))
    raise TypeError(f"not a formula: {f!r}")


def discounts(f: Formula) -> frozenset[Fraction]:
    return frozenset(g.discount for g in subformulas(f) if isinstance(g, TEMPORAL))


class _AnyDiscount:
    """Marker returned by :func:`is_uniform` for formulas with no temporal operator."""

    def __repr__(self):
        return "ANY"

    def __bool__(self):
        return True


ANY = _AnyDiscount()


def is_uniform(f: Formula) -> Union[Fraction, _AnyDiscount, None]:
    """Common discount of all temporal operators.

    Returns the shared factor, :data:`ANY` when ``f`` is purely propositional,
    or ``None`` when two operators disagree.
    """
    ds = discounts(f)
    if not ds:
        return ANY
    if len(ds) == 1:
        return next(iter(ds))
    return None


def max_discount(f: Formula) -> Fraction:
    ds = discounts(f)
    if not ds:
        raise ValueError(f"formula {to_text(f)!r} has no temporal operator")
    return max(ds)


def formula_size(f: Formula) -> int:
    """Number of AST nodes after desugaring."""
    return sum(1 for _ in subformulas(desugar(f)))


def depth(f: Formula) -> int:
    kids = f.children()
    return 1 + (max(depth(k) for k in kids) if kids else 0)

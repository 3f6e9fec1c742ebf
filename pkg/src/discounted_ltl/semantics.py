"""Quantitative semantics of discounted LTL on finite and ultimately periodic words.

All values are exact :class:`~fractions.Fraction` numbers.  Formulas are
desugared first and flattened into a post-order node table, so each evaluator
fills one array of values (indexed by suffix start) per node.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .formula import (
    Atom,
    Falsity,
    Formula,
    Next,
    Not,
    Or,
    Truth,
    Until,
    desugar,
    discounts,
)

Letter = frozenset
FiniteWord = tuple

ZERO = Fraction(0)
ONE = Fraction(1)


def letter(*props: str) -> frozenset[str]:
    return frozenset(props)


def word(*letters: Iterable[str]) -> tuple[frozenset[str], ...]:
    """``word(["p"], [], ["p", "q"])`` builds a finite word."""
    return tuple(frozenset(x) for x in letters)


@dataclass(frozen=True)
class LassoWord:
    """The infinite word ``prefix · cycle^ω``."""

    prefix: tuple
    cycle: tuple

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(frozenset(x) for x in self.prefix))
        object.__setattr__(self, "cycle", tuple(frozenset(x) for x in self.cycle))
        if not self.cycle:
            raise ValueError("lasso cycle must be nonempty")

    def take(self, n: int) -> tuple[frozenset[str], ...]:
        out = list(self.prefix[:n])
        while len(out) < n:
            out.append(self.cycle[(len(out) - len(self.prefix)) % len(self.cycle)])
        return tuple(out)


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi <= 1:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    @property
    def midpoint(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def intersects(self, other: "Interval") -> bool:
        return max(self.lo, other.lo) <= min(self.hi, other.hi)

    def issubset(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def __str__(self):
        return f"[{self.lo}, {self.hi}]"


# ---------------------------------------------------------------------------
# Node table


def _flatten(f: Formula) -> list[tuple]:
    """Post-order list of ``(node, child_indices)`` for the desugared formula.

    Structurally equal subformulas share one entry.
    """
    table: list[tuple] = []
    index: dict[Formula, int] = {}

    def visit(g: Formula) -> int:
        if g in index:
            return index[g]
        kids = tuple(visit(c) for c in g.children())
        index[g] = len(table)
        table.append((g, kids))
        return index[g]

    visit(desugar(f))
    return table


def _powers(lam: Fraction, n: int) -> list[Fraction]:
    out = [ONE]
    for _ in range(n):
        out.append(out[-1] * lam)
    return out


# ---------------------------------------------------------------------------
# Interval semantics


def eval_interval(f: Formula, w: Sequence[frozenset]) -> Interval:
    """Bounds on ``⟦f, ρ⟧`` valid for every infinite extension ``ρ`` of ``w``.

    On the empty suffix every non-constant formula is only known to lie in
    ``[0, 1]``.  The supremum of the until clause is enumerated explicitly over
    start offsets ``i`` up to the end of ``w``; offset ``len(w)`` carries the
    bound for the unseen tail.
    """
    n = len(w)
    table = _flatten(f)
    lo: list[list[Fraction]] = []
    hi: list[list[Fraction]] = []
    for node, kids in table:
        L = [ZERO] * (n + 1)
        H = [ONE] * (n + 1)
        if isinstance(node, Truth):
            L = [ONE] * (n + 1)
        elif isinstance(node, Falsity):
            H = [ZERO] * (n + 1)
        elif isinstance(node, Atom):
            for k in range(n):
                v = ONE if node.name in w[k] else ZERO
                L[k] = H[k] = v
        elif isinstance(node, Not):
            (c,) = kids
            L = [1 - h for h in hi[c]]
            H = [1 - l for l in lo[c]]
        elif isinstance(node, Or):
            a, b = kids
            L = [max(x, y) for x, y in zip(lo[a], lo[b])]
            H = [max(x, y) for x, y in zip(hi[a], hi[b])]
        elif isinstance(node, Next):
            (c,) = kids
            lam = node.discount
            for k in range(n):
                L[k] = lam * lo[c][k + 1]
                H[k] = lam * hi[c][k + 1]
        elif isinstance(node, Until):
            # the one-step expansion is monotone, so unfolding it over the
            # bounds equals the explicit sup over offsets; the tail at n is
            # bounded by ⟦φ2⟧ there
            a, b = kids
            lam = node.discount
            L[n], H[n] = lo[b][n], hi[b][n]
            for k in range(n - 1, -1, -1):
                L[k] = max(lo[b][k], min(lo[a][k], lam * L[k + 1]))
                H[k] = max(hi[b][k], min(hi[a][k], lam * H[k + 1]))
        else:
            raise TypeError(f"unexpected node {node!r}")
        lo.append(L)
        hi.append(H)
    return Interval(lo[-1][0], hi[-1][0])


# ---------------------------------------------------------------------------
# Finite-word value


def _padding_value(table: list[tuple]) -> list[Fraction]:
    """Value of every node on the all-empty word ``∅^ω`` (shift invariant)."""
    c: list[Fraction] = []
    for node, kids in table:
        if isinstance(node, (Truth,)):
            v = ONE
        elif isinstance(node, (Falsity, Atom)):
            v = ZERO
        elif isinstance(node, Not):
            v = 1 - c[kids[0]]
        elif isinstance(node, Or):
            v = max(c[kids[0]], c[kids[1]])
        elif isinstance(node, Next):
            v = node.discount * c[kids[0]]
        elif isinstance(node, Until):
            v = c[kids[1]]  # the i = 0 term dominates on a constant word
        else:
            raise TypeError(f"unexpected node {node!r}")
        c.append(v)
    return c


def eval_finite(f: Formula, w: Sequence[frozenset]) -> Fraction:
    """Value of ``f`` on ``w`` with no proposition holding past its end.

    This is the exact value on the extension ``w · ∅^ω``, so it always lies in
    :func:`eval_interval`.  Until is evaluated right to left with the one-step
    expansion ``U(k) = max(⟦φ2⟧(k), min(⟦φ1⟧(k), λ·U(k+1)))``.
    """
    n = len(w)
    table = _flatten(f)
    pad = _padding_value(table)
    vals: list[list[Fraction]] = []
    for idx, (node, kids) in enumerate(table):
        V = [pad[idx]] * (n + 1)
        if isinstance(node, Atom):
            for k in range(n):
                V[k] = ONE if node.name in w[k] else ZERO
        elif isinstance(node, Not):
            V = [1 - x for x in vals[kids[0]]]
        elif isinstance(node, Or):
            V = [max(x, y) for x, y in zip(vals[kids[0]], vals[kids[1]])]
        elif isinstance(node, Next):
            child = vals[kids[0]]
            for k in range(n):
                V[k] = node.discount * child[k + 1]
        elif isinstance(node, Until):
            v1, v2 = vals[kids[0]], vals[kids[1]]
            lam = node.discount
            for k in range(n - 1, -1, -1):
                V[k] = max(v2[k], min(v1[k], lam * V[k + 1]))
        vals.append(V)
    return vals[-1][0]


# ---------------------------------------------------------------------------
# Infinite words


def horizon(f: Formula, eps) -> int:
    """Smallest ``T`` with ``λ_max^T <= eps`` (0 for propositional formulas)."""
    eps = Fraction(eps)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    ds = discounts(f)
    if not ds:
        return 0
    lam = max(ds)
    t, p = 0, ONE
    while p > eps:
        t += 1
        p *= lam
    return t


def eval_lasso(f: Formula, rho: LassoWord, tol) -> Interval:
    """Interval of width at most ``tol`` around ``⟦f, prefix·cycle^ω⟧``."""
    tol = Fraction(tol)
    if tol <= 0:
        raise ValueError("tol must be positive")
    t = horizon(f, min(tol, Fraction(1, 2))) if discounts(f) else 0
    return eval_interval(f, rho.take(max(t, 1)))


# ---------------------------------------------------------------------------
# JSON


def word_from_json(data) -> tuple[frozenset[str], ...]:
    if not isinstance(data, list) or not all(isinstance(x, list) for x in data):
        raise ValueError("a word is a JSON array of arrays of proposition names")
    return word(*data)


def word_to_json(w) -> list[list[str]]:
    return [sorted(x) for x in w]


def lasso_from_json(data) -> LassoWord:
    if not isinstance(data, dict) or set(data) != {"prefix", "cycle"}:
        raise ValueError('a lasso word is {"prefix": [...], "cycle": [...]}')
    return LassoWord(word_from_json(data["prefix"]), word_from_json(data["cycle"]))

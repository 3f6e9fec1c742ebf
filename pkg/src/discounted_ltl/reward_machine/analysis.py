"""SCC decomposition and invariant checking for compiled reward machines."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..formula import Formula, propositions
from ..semantics import eval_interval
from .machine import RewardMachine, rm_eval_bounds, rm_eval_finite


class InvariantI2Violation(ValueError):
    """An SCC carries two different internal rewards, or one outside ``{0, 1-λ}``."""

    def __init__(self, message: str, witness: tuple):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class SccReport:
    components: tuple[tuple[int, ...], ...]  # reverse topological order
    types: dict  # component index -> internal reward, for components with an internal edge

    def component_of(self, q: int) -> int:
        for k, comp in enumerate(self.components):
            if q in comp:
                return k
        raise KeyError(q)


def tarjan(n: int, succ) -> list[list[int]]:
    """Iterative Tarjan; components come out in reverse topological order."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(succ(w))))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def scc_decompose(m: RewardMachine, strict: bool = True) -> SccReport:
    """Partition states into SCCs and read off each internal reward.

    Raises:
        InvariantI2Violation: when ``strict`` and some SCC has two internal
            rewards or an internal reward other than ``0`` and ``1-λ``.
    """
    comps = tarjan(m.num_states, lambda q: sorted(set(m.delta[q])))
    where = {}
    for k, comp in enumerate(comps):
        for q in comp:
            where[q] = k
    types: dict[int, Fraction] = {}
    first_edge: dict[int, tuple] = {}
    allowed = {Fraction(0), 1 - m.lam}
    for q, i, q2, r in m.edges():
        k = where[q]
        if where[q2] != k:
            continue
        edge = (q, i, q2, r)
        if k not in types:
            types[k] = r
            first_edge[k] = edge
            if strict and r not in allowed:
                raise InvariantI2Violation(
                    f"SCC {k} has internal reward {r} outside {{0, {1 - m.lam}}}", (edge,)
                )
        elif r != types[k] and strict:
            raise InvariantI2Violation(
                f"SCC {k} has internal rewards {types[k]} and {r}", (first_edge[k], edge)
            )
    return SccReport(tuple(tuple(c) for c in comps), types)


@dataclass
class Violation:
    invariant: str  # "I1", "I2" or "I3"
    message: str
    witness: object = None


@dataclass
class InvariantReport:
    violations: list[Violation] = field(default_factory=list)
    words_checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def failed(self, invariant: str) -> list[Violation]:
        return [v for v in self.violations if v.invariant == invariant]


def check_invariants(
    m: RewardMachine,
    f: Optional[Formula] = None,
    trials: int = 200,
    max_len: int = 10,
    seed: int = 0,
) -> InvariantReport:
    """Check I3 exhaustively, I2 through the SCC partition, and I1 on random words.

    I1 requires, for every sampled word ``w``, that the machine's bounds meet
    ``eval_interval(f, w)`` and that the partial sum lies within ``2·λ^|w|``
    of every point of that interval.
    """
    report = InvariantReport()
    high = 1 - m.lam if m.lam > 0 else Fraction(1)
    for q, i, q2, r in m.edges():
        if not 0 <= r <= high:
            report.violations.append(
                Violation("I3", f"reward {r} on ({q}, {i}) outside [0, {high}]", (q, i, q2, r))
            )
    try:
        scc_decompose(m)
    except InvariantI2Violation as exc:
        report.violations.append(Violation("I2", str(exc), exc.witness))
    if f is None or trials <= 0:
        return report
    extra = propositions(f) - set(m.props)
    if extra:
        report.violations.append(Violation("I1", f"propositions {sorted(extra)} missing from alphabet"))
        return report
    rng = random.Random(seed)
    letters = m.letters
    for _ in range(trials):
        n = rng.randint(0, max_len)
        w = tuple(rng.choice(letters) for _ in range(n))
        report.words_checked += 1
        iv = eval_interval(f, w)
        rb = rm_eval_bounds(m, w)
        partial = rm_eval_finite(m, w)
        slack = 2 * m.lam ** n
        if not rb.intersects(iv) or max(abs(partial - iv.lo), abs(partial - iv.hi)) > slack:
            report.violations.append(
                Violation("I1", f"machine {rb} vs semantics {iv} on word of length {n}", w)
            )
    return report

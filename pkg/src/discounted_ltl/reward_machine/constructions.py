"""Inductive reward-machine constructions for uniformly discounted LTL.

Every machine produced here pays rewards in ``[0, 1-λ]`` and its discounted
sum on an infinite word equals the formula's value on that word.  The scaled
reward deficits (``zeta``) and bookkeeping values (``v``) are exact fractions;
state identity depends on their exact equality.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence

from ..formula import (
    ANY,
    And,
    Atom,
    Falsity,
    Finally,
    Formula,
    Globally,
    Next,
    Not,
    Or,
    Truth,
    Until,
    is_uniform,
    propositions,
    to_text,
)
from ..semantics import eval_interval
from .machine import (
    DEFAULT_BUDGET,
    Base,
    Ev,
    Left,
    Pair,
    RewardMachine,
    Right,
    Start,
    Un,
    Wrapped,
    alphabet,
    explore,
)

DEFAULT_DISCOUNT = Fraction(1, 2)


class NonUniformFormula(ValueError):
    pass


def _check_lam(lam) -> Fraction:
    lam = Fraction(lam)
    if not 0 < lam < 1:
        raise ValueError(f"construction needs 0 < λ < 1, got {lam}")
    return lam


def _same_alphabet(m1: RewardMachine, m2: RewardMachine) -> None:
    if m1.lam != m2.lam:
        raise ValueError(f"operand discounts differ: {m1.lam} vs {m2.lam}")
    if m1.props != m2.props:
        raise ValueError(f"operand alphabets differ: {m1.props} vs {m2.props}")


def _constant(tag: str, value: Fraction, lam: Fraction, props: Sequence[str]) -> RewardMachine:
    k = 1 << len(props)
    return RewardMachine(tuple(props), lam, [Base(tag)], [[0] * k], [[value] * k], kind=tag)


def rm_true(lam, props: Sequence[str] = ()) -> RewardMachine:
    lam = Fraction(lam)
    return _constant("true", 1 - lam, lam, props)


def rm_false(lam, props: Sequence[str] = ()) -> RewardMachine:
    return _constant("false", Fraction(0), Fraction(lam), props)


def rm_atomic(p: str, lam, props: Optional[Sequence[str]] = None) -> RewardMachine:
    """Three-state machine for a single proposition (ids 0, 1, 2 = q0, q1, q2)."""
    lam = _check_lam(lam)
    props = tuple(props) if props is not None else (p,)
    if p not in props:
        raise ValueError(f"{p!r} not in alphabet {props}")
    high = 1 - lam
    zero = Fraction(0)
    letters = alphabet(props)
    k = len(letters)
    delta = [[1 if p in s else 2 for s in letters], [1] * k, [2] * k]
    reward = [[high if p in s else zero for s in letters], [high] * k, [zero] * k]
    return RewardMachine(props, lam, [Base("q0"), Base("q1"), Base("q2")], delta, reward, kind=f"atom:{p}")


def rm_negation(m: RewardMachine) -> RewardMachine:
    """Same graph, every reward ``c`` replaced by ``(1-λ) - c``."""
    high = 1 - m.lam
    return RewardMachine(
        m.props,
        m.lam,
        [Wrapped("not", q) for q in range(m.num_states)],
        [list(row) for row in m.delta],
        [[high - c for c in row] for row in m.reward],
        m.initial,
        (m,),
        "not",
    )


def rm_next(m: RewardMachine) -> RewardMachine:
    """Prepend a fresh initial state that pays 0 and enters ``m``."""
    k = 1 << len(m.props)
    delta = [[m.initial + 1] * k] + [[q2 + 1 for q2 in row] for row in m.delta]
    reward = [[Fraction(0)] * k] + [list(row) for row in m.reward]
    payloads = [Start()] + [Wrapped("next", q) for q in range(m.num_states)]
    return RewardMachine(m.props, m.lam, payloads, delta, reward, 0, (m,), "next")


def rm_disjunction(m1: RewardMachine, m2: RewardMachine, budget: int = DEFAULT_BUDGET) -> RewardMachine:
    """Machine for the pointwise max of ``m1`` and ``m2``.

    Pair states ``(q1, q2, ζ)`` track ``ζ = (R1(w) - R2(w)) / λ^|w|``.  Once
    ``|ζ| >= 1`` the leader can no longer be overtaken and the next step moves
    into a copy of that operand.
    """
    _same_alphabet(m1, m2)
    lam = _check_lam(m1.lam)
    d1, r1, d2, r2 = m1.delta, m1.reward, m2.delta, m2.reward

    def step(p, i):
        if isinstance(p, Left):
            return Left(d1[p.q1][i]), r1[p.q1][i]
        if isinstance(p, Right):
            return Right(d2[p.q2][i]), r2[p.q2][i]
        a, b, z = r1[p.q1][i], r2[p.q2][i], p.zeta
        f = a - b + z
        r = a + min(0, z) if f >= 0 else b - max(0, z)
        if z >= 1:
            return Left(d1[p.q1][i]), r
        if z <= -1:
            return Right(d2[p.q2][i]), r
        return Pair(d1[p.q1][i], d2[p.q2][i], f / lam), r

    start = Pair(m1.initial, m2.initial, Fraction(0))
    return explore(start, step, m1.props, lam, (m1, m2), "or", budget)


def rm_eventually(m1: RewardMachine, budget: int = DEFAULT_BUDGET, dedup: bool = False) -> RewardMachine:
    """Subset construction tracking ``max_i X^i φ1`` over the prefix read so far.

    With ``dedup`` an element ``(q, ζ)`` is discarded when ``(q, ζ')`` with
    ``ζ' > ζ`` is also present.
    """
    lam = _check_lam(m1.lam)
    d1, r1, q0 = m1.delta, m1.reward, m1.initial

    def step(p, i):
        fs = [(q, r1[q][i] + z) for q, z in p.elems]
        m = max(f for _, f in fs)
        elems = set()
        for q, f in fs:
            z2 = (f - m) / lam
            if z2 > -1:
                elems.add((d1[q][i], z2))
        v2 = (p.v - m) / lam
        if v2 > -1:
            elems.add((q0, v2))
        else:
            v2 = Fraction(-1)
        if dedup:
            best: dict[int, Fraction] = {}
            for q, z in elems:
                if q not in best or z > best[q]:
                    best[q] = z
            elems = set(best.items())
        return Ev(v2, tuple(sorted(elems))), m

    start = Ev(Fraction(0), ((q0, Fraction(0)),))
    return explore(start, step, m1.props, lam, (m1,), "eventually", budget)


def rm_until(m1: RewardMachine, m2: RewardMachine, budget: int = DEFAULT_BUDGET) -> RewardMachine:
    """Nested subset construction for ``φ1 U φ2``.

    Each set in ``sets`` follows one candidate ``ψ_i = X^i φ2 ∧ ⋀_{j<i} X^j φ1``
    (elements are ``(side, q, ζ)`` with ``side`` naming the operand); the
    reward is the max over candidates of the min over their elements.
    ``pending`` follows the conjunction of the ``X^j φ1`` started so far and
    seeds the next candidate.
    """
    _same_alphabet(m1, m2)
    lam = _check_lam(m1.lam)
    deltas = (None, m1.delta, m2.delta)
    rewards = (None, m1.reward, m2.reward)
    q01, q02 = m1.initial, m2.initial

    def advance(elems, i, m):
        out = set()
        for side, q, z in elems:
            z2 = (rewards[side][q][i] + z - m) / lam
            if z2 < 1:
                out.add((side, deltas[side][q][i], z2))
        return out

    def step(p, i):
        mins = [min(rewards[side][q][i] + z for side, q, z in s) for s in p.sets]
        m = max(mins)
        kept = {tuple(sorted(advance(s, i, m))) for s, n in zip(p.sets, mins) if n > -1}
        v2 = (p.v - m) / lam
        if v2 > -1:
            # the φ1 instance started at this position reads the current letter,
            # so it enters with the pre-step deficit p.v
            pending = advance(set(p.pending) | {(1, q01, p.v)}, i, m)
            kept.add(tuple(sorted(pending | {(2, q02, v2)})))
            return Un(v2, tuple(sorted(pending)), tuple(sorted(kept))), m
        return Un(Fraction(-1), (), tuple(sorted(kept))), m

    start = Un(Fraction(0), (), (((2, q02, Fraction(0)),),))
    return explore(start, step, m1.props, lam, (m1, m2), "until", budget)


def _rm_zero_discount(f: Formula, props: Sequence[str]) -> RewardMachine:
    # with λ = 0 the value is fixed by the first letter
    letters = alphabet(props)
    k = len(letters)
    first = [eval_interval(f, (s,)).lo for s in letters]
    return RewardMachine(
        tuple(props), Fraction(0), [Base("init"), Base("done")],
        [[1] * k, [1] * k], [first, [Fraction(0)] * k], kind="zero-discount",
    )


def compile_formula(
    f: Formula,
    lam=None,
    props: Optional[Sequence[str]] = None,
    budget: int = DEFAULT_BUDGET,
    dedup: bool = False,
) -> RewardMachine:
    """Reward machine whose discounted sum equals ``⟦f, ρ⟧`` for every word ``ρ``.

    Args:
        f: a uniformly discounted formula.
        lam: the machine discount.  Required to match the formula's common
            discount; defaults to it, or to 1/2 for propositional formulas.
        props: extra propositions to include in the alphabet.
        budget: maximum number of states per construction step.
        dedup: enable the dominated-element pruning of the eventually construction.
    """
    u = is_uniform(f)
    if u is None:
        raise NonUniformFormula(f"formula {to_text(f)!r} mixes discount factors")
    if u is ANY:
        lam = DEFAULT_DISCOUNT if lam is None else Fraction(lam)
    elif lam is not None and Fraction(lam) != u:
        raise NonUniformFormula(f"formula discount {u} does not match λ = {Fraction(lam)}")
    else:
        lam = u
    if not 0 <= lam < 1:
        raise ValueError(f"λ must lie in [0, 1), got {lam}")
    alpha = tuple(sorted(propositions(f) | set(props or ())))
    if lam == 0:
        return _rm_zero_discount(f, alpha)

    cache: dict[Formula, RewardMachine] = {}

    def build(g: Formula) -> RewardMachine:
        if g in cache:
            return cache[g]
        if isinstance(g, Atom):
            m = rm_atomic(g.name, lam, alpha)
        elif isinstance(g, Truth):
            m = rm_true(lam, alpha)
        elif isinstance(g, Falsity):
            m = rm_false(lam, alpha)
        elif isinstance(g, Not):
            m = rm_negation(build(g.operand))
        elif isinstance(g, Or):
            m = rm_disjunction(build(g.left), build(g.right), budget)
        elif isinstance(g, And):
            m = rm_negation(
                rm_disjunction(rm_negation(build(g.left)), rm_negation(build(g.right)), budget)
            )
        elif isinstance(g, Next):
            m = rm_next(build(g.operand))
        elif isinstance(g, Until):
            m = rm_until(build(g.left), build(g.right), budget)
        elif isinstance(g, Finally):
            m = rm_eventually(build(g.operand), budget, dedup)
        elif isinstance(g, Globally):
            m = rm_negation(rm_eventually(rm_negation(build(g.operand)), budget, dedup))
        else:
            raise TypeError(f"not a formula: {g!r}")
        cache[g] = m
        return m

    return build(f)

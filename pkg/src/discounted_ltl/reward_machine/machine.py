"""Reward machine data type, state payloads, evaluation and JSON format."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Optional, Sequence

from ..semantics import Interval

DEFAULT_BUDGET = 10**6


class StateBudgetExceeded(RuntimeError):
    """A construction explored more states than its budget allows."""


# ---------------------------------------------------------------------------
# Alphabet


def alphabet(props: Sequence[str]) -> list[frozenset[str]]:
    """All valuations of ``props``; letter ``i`` holds ``props[j]`` iff bit ``j`` of ``i`` is set."""
    return [frozenset(p for j, p in enumerate(props) if i >> j & 1) for i in range(1 << len(props))]


def letter_index(props: Sequence[str], sigma: Iterable[str]) -> int:
    idx = 0
    for name in sigma:
        try:
            idx |= 1 << props.index(name)
        except ValueError:
            raise ValueError(f"proposition {name!r} is not in the alphabet {list(props)}") from None
    return idx


# ---------------------------------------------------------------------------
# Payloads.  Integers inside payloads are state ids of the operand machines.


@dataclass(frozen=True, order=True)
class Base:
    tag: str


@dataclass(frozen=True, order=True)
class Start:
    """Fresh initial state added by the next-operator construction."""


@dataclass(frozen=True, order=True)
class Wrapped:
    op: str  # "not" or "next"
    inner: int


@dataclass(frozen=True, order=True)
class Pair:
    q1: int
    q2: int
    zeta: Fraction


@dataclass(frozen=True, order=True)
class Left:
    q1: int


@dataclass(frozen=True, order=True)
class Right:
    q2: int


@dataclass(frozen=True, order=True)
class Ev:
    v: Fraction
    elems: tuple  # sorted ((q, zeta), ...)


@dataclass(frozen=True, order=True)
class Un:
    v: Fraction
    pending: tuple  # I: sorted ((side, q, zeta), ...), side 1 or 2
    sets: tuple  # X: sorted tuple of sorted element tuples


PAYLOAD_TYPES = {cls.__name__: cls for cls in (Base, Start, Wrapped, Pair, Left, Right, Ev, Un)}


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RewardMachine:
    """Deterministic transducer ``(Q, δ, r, q0, λ)`` over the valuations of ``props``.

    ``delta[q][i]`` and ``reward[q][i]`` give the successor and reward of state
    ``q`` on letter ``i`` (see :func:`alphabet`).  States are numbered in BFS
    order from the initial state, so every state is reachable.
    """

    props: tuple[str, ...]
    lam: Fraction
    payloads: list
    delta: list[list[int]]
    reward: list[list[Fraction]]
    initial: int = 0
    operands: tuple = ()
    kind: str = "machine"

    @property
    def num_states(self) -> int:
        return len(self.payloads)

    @property
    def letters(self) -> list[frozenset[str]]:
        return alphabet(self.props)

    def index(self, sigma: Iterable[str]) -> int:
        return letter_index(self.props, sigma)

    def run(self, w) -> list[int]:
        """States visited while reading ``w`` (length ``len(w) + 1``)."""
        q = self.initial
        out = [q]
        for sigma in w:
            q = self.delta[q][self.index(sigma)]
            out.append(q)
        return out

    def state_after(self, w) -> int:
        return self.run(w)[-1]

    def payload_of(self, w):
        return self.payloads[self.state_after(w)]

    def edges(self):
        for q, row in enumerate(self.delta):
            for i, q2 in enumerate(row):
                yield q, i, q2, self.reward[q][i]

    def describe(self, q: int) -> str:
        """Readable nested rendering of the payload of state ``q``."""
        return _describe(self, self.payloads[q])

    def same_as(self, other: "RewardMachine") -> bool:
        return (
            self.props == other.props
            and self.lam == other.lam
            and self.payloads == other.payloads
            and self.delta == other.delta
            and self.reward == other.reward
            and self.initial == other.initial
        )


def _fmt(x: Fraction) -> str:
    return str(x)


def _describe(m: RewardMachine, payload) -> str:
    def sub(k, q):
        return m.operands[k].describe(q) if k < len(m.operands) else f"#{q}"

    if isinstance(payload, Base):
        return payload.tag
    if isinstance(payload, Start):
        return "start"
    if isinstance(payload, Wrapped):
        return sub(0, payload.inner)
    if isinstance(payload, Pair):
        return f"({sub(0, payload.q1)}, {sub(1, payload.q2)}, {_fmt(payload.zeta)})"
    if isinstance(payload, Left):
        return f"L:{sub(0, payload.q1)}"
    if isinstance(payload, Right):
        return f"R:{sub(1, payload.q2)}"
    if isinstance(payload, Ev):
        inner = ", ".join(f"({sub(0, q)}, {_fmt(z)})" for q, z in payload.elems)
        return f"({_fmt(payload.v)}, {{{inner}}})"
    if isinstance(payload, Un):
        def elem(e):
            side, q, z = e
            return f"({sub(side - 1, q)}, {_fmt(z)})"

        pend = ", ".join(elem(e) for e in payload.pending)
        sets = ", ".join("{" + ", ".join(elem(e) for e in s) + "}" for s in payload.sets)
        return f"({_fmt(payload.v)}, {{{pend}}}, {{{sets}}})"
    return repr(payload)


def explore(
    initial: Hashable,
    step: Callable[[Hashable, int], tuple[Hashable, Fraction]],
    props: Sequence[str],
    lam: Fraction,
    operands: tuple = (),
    kind: str = "machine",
    budget: int = DEFAULT_BUDGET,
) -> RewardMachine:
    """Build the reachable part of a machine given by a payload-level step function."""
    n_letters = 1 << len(props)
    ids = {initial: 0}
    payloads = [initial]
    delta: list[list[int]] = []
    reward: list[list[Fraction]] = []
    queue = deque([initial])
    while queue:
        p = queue.popleft()
        row_d, row_r = [], []
        for i in range(n_letters):
            nxt, r = step(p, i)
            j = ids.get(nxt)
            if j is None:
                if len(payloads) >= budget:
                    raise StateBudgetExceeded(
                        f"{kind} construction exceeded the budget of {budget} states"
                    )
                j = ids[nxt] = len(payloads)
                payloads.append(nxt)
                queue.append(nxt)
            row_d.append(j)
            row_r.append(Fraction(r))
        delta.append(row_d)
        reward.append(row_r)
    return RewardMachine(tuple(props), Fraction(lam), payloads, delta, reward, 0, operands, kind)


# ---------------------------------------------------------------------------
# Evaluation


def rm_eval_finite(m: RewardMachine, w) -> Fraction:
    """Partial discounted sum ``Σ_t λ^t r(q_t, σ_t)`` along the run on ``w``."""
    total = Fraction(0)
    scale = Fraction(1)
    q = m.initial
    for sigma in w:
        i = m.index(sigma)
        total += scale * m.reward[q][i]
        scale *= m.lam
        q = m.delta[q][i]
    return total


def rm_eval_bounds(m: RewardMachine, w) -> Interval:
    """``[R(w), R(w) + λ^|w|]``, which holds every extension when rewards lie in ``[0, 1-λ]``."""
    base = rm_eval_finite(m, w)
    tail = m.lam ** len(w)
    return Interval(base, min(Fraction(1), base + tail))


# ---------------------------------------------------------------------------
# JSON


def _enc(x):
    if isinstance(x, Fraction):
        return _fmt(x)
    if isinstance(x, tuple):
        return [_enc(y) for y in x]
    if type(x).__name__ in PAYLOAD_TYPES and hasattr(x, "__dataclass_fields__"):
        return {"kind": type(x).__name__, "fields": [_enc(getattr(x, f.name)) for f in fields(x)]}
    return x


def _dec(x):
    if isinstance(x, dict):
        cls = PAYLOAD_TYPES[x["kind"]]
        return cls(*(_dec(y) for y in x["fields"]))
    if isinstance(x, list):
        return tuple(_dec(y) for y in x)
    if isinstance(x, str):
        try:
            return Fraction(x)
        except ValueError:
            return x
    return x


def _dec_payload(x):
    # string fields that are not numbers (Base.tag, Wrapped.op) must stay strings
    cls = PAYLOAD_TYPES[x["kind"]]
    if cls in (Base,):
        return Base(x["fields"][0])
    if cls is Wrapped:
        return Wrapped(x["fields"][0], x["fields"][1])
    return _dec(x)


def machine_to_json(m: RewardMachine) -> dict:
    letters = m.letters
    return {
        "lambda": _fmt(m.lam),
        "alphabet": [sorted(s) for s in letters],
        "states": [{"id": q, "payload": _enc(p)} for q, p in enumerate(m.payloads)],
        "delta": [[q, i, q2] for q, i, q2, _ in m.edges()],
        "reward": [[q, i, _fmt(r)] for q, i, _, r in m.edges()],
        "initial": m.initial,
    }


def machine_from_json(data: dict) -> RewardMachine:
    letters = [frozenset(s) for s in data["alphabet"]]
    props = tuple(sorted(set().union(*letters))) if letters else ()
    if [frozenset(s) for s in alphabet(props)] != letters:
        raise ValueError("alphabet must list every valuation in canonical order")
    states = sorted(data["states"], key=lambda s: s["id"])
    if [s["id"] for s in states] != list(range(len(states))):
        raise ValueError("state ids must be 0..n-1")
    n, k = len(states), len(letters)
    delta: list[list[Optional[int]]] = [[None] * k for _ in range(n)]
    reward: list[list[Optional[Fraction]]] = [[None] * k for _ in range(n)]
    for q, i, q2 in data["delta"]:
        delta[q][i] = q2
    for q, i, r in data["reward"]:
        reward[q][i] = Fraction(r)
    if any(x is None for row in delta for x in row) or any(x is None for row in reward for x in row):
        raise ValueError("delta and reward must be total")
    payloads = [_dec_payload(s["payload"]) if isinstance(s["payload"], dict) else s["payload"] for s in states]
    return RewardMachine(props, Fraction(data["lambda"]), payloads, delta, reward, data["initial"], (), "loaded")

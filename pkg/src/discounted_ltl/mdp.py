"""Labeled MDPs, their product with a reward machine, and policy synthesis.

Probabilities are exact fractions in the model and float64 in the solvers.
Rewards follow the run: at time ``t`` the product collects
``r(q_t, L(s_t))`` and then moves to ``(s_{t+1}, δ(q_t, L(s_t)))``, so the
discounted return of a run equals the machine's value on its label word.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .reward_machine import RewardMachine, letter_index, machine_from_json, machine_to_json

TIE_TOL = 1e-12


class MdpValidationError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledMdp:
    """Finite MDP over named states and actions with a label per state.

    ``trans[s][a]`` is a tuple of ``(successor, probability)`` pairs, or
    ``None`` when action ``a`` is not enabled in ``s``; indices refer to
    ``states`` and ``actions``.
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    initial: int
    labels: tuple[frozenset, ...]
    trans: tuple[tuple[Optional[tuple[tuple[int, Fraction], ...]], ...], ...]

    def __post_init__(self):
        if not 0 <= self.initial < len(self.states):
            raise MdpValidationError("initial state out of range")
        for s, row in enumerate(self.trans):
            if all(d is None for d in row):
                raise MdpValidationError(f"state {self.states[s]!r} has no enabled action")
            for a, dist in enumerate(row):
                if dist is None:
                    continue
                if any(p < 0 for _, p in dist):
                    raise MdpValidationError(
                        f"negative probability at ({self.states[s]!r}, {self.actions[a]!r})"
                    )
                total = sum(p for _, p in dist)
                if total != 1:
                    raise MdpValidationError(
                        f"probabilities at ({self.states[s]!r}, {self.actions[a]!r}) sum to {total}"
                    )

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def propositions(self) -> tuple[str, ...]:
        return tuple(sorted(set().union(*self.labels)))

    def enabled(self, s: int) -> list[int]:
        return [a for a, d in enumerate(self.trans[s]) if d is not None]

    def state_id(self, name: str) -> int:
        return self.states.index(name)

    def action_id(self, name: str) -> int:
        return self.actions.index(name)


def build_mdp(states, actions, initial, labels, transitions, enabled=None) -> LabeledMdp:
    """Assemble a model from names.

    ``transitions`` maps ``(state, action)`` to ``{successor: probability}``;
    ``enabled`` optionally restricts the actions per state.
    """
    states, actions = tuple(states), tuple(actions)
    sid = {s: i for i, s in enumerate(states)}
    aid = {a: i for i, a in enumerate(actions)}
    if len(sid) != len(states) or len(aid) != len(actions):
        raise MdpValidationError("duplicate state or action names")
    trans: list[list] = [[None] * len(actions) for _ in states]
    for (s, a), dist in transitions.items():
        if s not in sid or a not in aid:
            raise MdpValidationError(f"unknown state or action in transition ({s!r}, {a!r})")
        pairs = []
        for t, p in dist.items():
            if t not in sid:
                raise MdpValidationError(f"unknown successor {t!r}")
            pairs.append((sid[t], Fraction(p)))
        trans[sid[s]][aid[a]] = tuple(sorted(pairs))
    if enabled is not None:
        for s, acts in enabled.items():
            for a in actions:
                if a not in acts and trans[sid[s]][aid[a]] is not None:
                    trans[sid[s]][aid[a]] = None
            for a in acts:
                if trans[sid[s]][aid[a]] is None:
                    raise MdpValidationError(f"enabled action {a!r} at {s!r} has no distribution")
    if initial not in sid:
        raise MdpValidationError(f"unknown initial state {initial!r}")
    return LabeledMdp(
        states,
        actions,
        sid[initial],
        tuple(frozenset(labels[s]) for s in states),
        tuple(tuple(row) for row in trans),
    )


def load_mdp(data: dict) -> LabeledMdp:
    """Validate and load the JSON model format.

    ``{"states": [{"id", "label", "enabled"?}], "actions": [...], "initial",
    "transitions": [{"from", "action", "to", "prob"}]}``
    """
    try:
        states = [str(s["id"]) for s in data["states"]]
        labels = {str(s["id"]): list(s.get("label", [])) for s in data["states"]}
        enabled = {
            str(s["id"]): list(s["enabled"]) for s in data["states"] if "enabled" in s
        }
        actions = list(data["actions"])
        initial = str(data["initial"])
        transitions: dict = {}
        for t in data["transitions"]:
            key = (str(t["from"]), t["action"])
            dist = transitions.setdefault(key, {})
            to = str(t["to"])
            dist[to] = dist.get(to, Fraction(0)) + Fraction(str(t["prob"]))
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise MdpValidationError(f"malformed MDP JSON: {exc}") from None
    for s in states:
        acts = enabled.get(s, actions)
        for a in acts:
            if (s, a) not in transitions:
                raise MdpValidationError(f"missing distribution for ({s!r}, {a!r})")
        if s not in enabled:
            enabled[s] = [a for a in actions if (s, a) in transitions]
    return build_mdp(states, actions, initial, labels, transitions, enabled)


def mdp_to_json(m: LabeledMdp) -> dict:
    return {
        "states": [
            {"id": s, "label": sorted(m.labels[i]), "enabled": [m.actions[a] for a in m.enabled(i)]}
            for i, s in enumerate(m.states)
        ],
        "actions": list(m.actions),
        "initial": m.states[m.initial],
        "transitions": [
            {"from": m.states[s], "action": m.actions[a], "to": m.states[t], "prob": str(p)}
            for s in range(m.num_states)
            for a in m.enabled(s)
            for t, p in m.trans[s][a]
        ],
    }


# ---------------------------------------------------------------------------
# Example models


def safety_mdp(p1, p2) -> LabeledMdp:
    """Safe state ``s0`` with two sinks; action ``a_i`` falls into sink ``s_i`` w.p. ``p_i``."""
    p1, p2 = Fraction(p1), Fraction(p2)
    return build_mdp(
        ["s0", "s1", "s2"],
        ["a1", "a2"],
        "s0",
        {"s0": ["safe"], "s1": [], "s2": []},
        {
            ("s0", "a1"): {"s0": 1 - p1, "s1": p1},
            ("s0", "a2"): {"s0": 1 - p2, "s2": p2},
            ("s1", "a1"): {"s1": 1},
            ("s1", "a2"): {"s1": 1},
            ("s2", "a1"): {"s2": 1},
            ("s2", "a2"): {"s2": 1},
        },
    )


def stay_or_move_mdp() -> LabeledMdp:
    """Two states: ``a1`` stays in the ``p`` state ``s0``, ``a2`` moves to the absorbing ``s1``."""
    return build_mdp(
        ["s0", "s1"],
        ["a1", "a2"],
        "s0",
        {"s0": ["p"], "s1": []},
        {
            ("s0", "a1"): {"s0": 1},
            ("s0", "a2"): {"s1": 1},
            ("s1", "a1"): {"s1": 1},
            ("s1", "a2"): {"s1": 1},
        },
    )


def block_mdp(p) -> LabeledMdp:
    """``s0`` leaves for ``s1`` w.p. ``p``; ``s1`` may loop (``a1``) or move on to ``s2`` (``a2``)."""
    p = Fraction(p)
    return build_mdp(
        ["s0", "s1", "s2"],
        ["a1", "a2"],
        "s0",
        {"s0": [], "s1": ["p1"], "s2": ["p2"]},
        {
            ("s0", "a1"): {"s0": 1 - p, "s1": p},
            ("s0", "a2"): {"s0": 1 - p, "s1": p},
            ("s1", "a1"): {"s1": 1},
            ("s1", "a2"): {"s2": 1},
            ("s2", "a1"): {"s2": 1},
            ("s2", "a2"): {"s2": 1},
        },
    )


# ---------------------------------------------------------------------------
# Product


@dataclass
class ProductMdp:
    mdp: LabeledMdp
    machine: RewardMachine
    states: list[tuple[int, int]]  # (s, q), reachable only
    index: dict[tuple[int, int], int]
    reward: np.ndarray  # r(q, L(s)) per product state
    matrices: list  # per action: sparse (n x n) transition matrix
    enabled: np.ndarray  # bool (n, |A|)

    @property
    def lam(self) -> float:
        return float(self.machine.lam)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def initial(self) -> int:
        return 0


def label_indices(mdp: LabeledMdp, machine: RewardMachine) -> list[int]:
    try:
        return [letter_index(machine.props, lab) for lab in mdp.labels]
    except ValueError as exc:
        raise MdpValidationError(f"MDP label outside the machine alphabet: {exc}") from None


def product(mdp: LabeledMdp, machine: RewardMachine) -> ProductMdp:
    """Reachable part of ``mdp × machine``, explored breadth-first from ``(s0, q0)``."""
    lab = label_indices(mdp, machine)
    start = (mdp.initial, machine.initial)
    index = {start: 0}
    states = [start]
    edges: list[list[tuple]] = [[] for _ in mdp.actions]
    queue = deque([start])
    while queue:
        s, q = queue.popleft()
        u = index[(s, q)]
        q2 = machine.delta[q][lab[s]]
        for a in mdp.enabled(s):
            for t, p in mdp.trans[s][a]:
                key = (t, q2)
                if key not in index:
                    index[key] = len(states)
                    states.append(key)
                    queue.append(key)
                edges[a].append((u, index[key], float(p)))
    n = len(states)
    mats = []
    for a_edges in edges:
        if a_edges:
            rows, cols, vals = zip(*a_edges)
        else:
            rows, cols, vals = (), (), ()
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    enabled = np.zeros((n, len(mdp.actions)), dtype=bool)
    for u, (s, _) in enumerate(states):
        enabled[u, mdp.enabled(s)] = True
    reward = np.array([float(machine.reward[q][lab[s]]) for s, q in states])
    return ProductMdp(mdp, machine, states, index, reward, mats, enabled)


@dataclass
class ValueFunction:
    product: ProductMdp
    values: np.ndarray
    iterations: int
    residual: float

    def at(self, s: int, q: int) -> float:
        return float(self.values[self.product.index[(s, q)]])

    @property
    def initial(self) -> float:
        return float(self.values[self.product.initial])


def _q_values(pm: ProductMdp, v: np.ndarray, lam: float) -> np.ndarray:
    q = np.column_stack([pm.reward + lam * (m @ v) for m in pm.matrices])
    return np.where(pm.enabled, q, -np.inf)


def value_iteration(pm: ProductMdp, tol: float = 1e-9, max_iter: int = 10**6) -> ValueFunction:
    """Optimal discounted value, within ``tol`` of the fixed point in sup norm."""
    lam = pm.lam
    if not 0 <= lam < 1:
        raise ValueError("value iteration needs 0 <= λ < 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    threshold = tol * (1 - lam) / (2 * lam) if lam > 0 else 0.0
    v = np.zeros(pm.num_states)
    for it in range(1, max_iter + 1):
        v2 = _q_values(pm, v, lam).max(axis=1)
        res = float(np.max(np.abs(v2 - v))) if len(v) else 0.0
        v = v2
        if res <= threshold:
            return ValueFunction(pm, v, it, res)
    raise RuntimeError(f"value iteration did not converge in {max_iter} sweeps")


# ---------------------------------------------------------------------------
# Policies


@dataclass
class FinitePolicy:
    """Deterministic policy using the reward machine state as memory.

    ``act[(q, s)]`` is the action index played in MDP state ``s`` with memory
    ``q``; memory then advances to ``δ(q, L(s))``.
    """

    machine: RewardMachine
    act: dict[tuple[int, int], int]
    action_names: tuple[str, ...] = ()
    state_names: tuple[str, ...] = ()

    @property
    def initial_memory(self) -> int:
        return self.machine.initial

    def action(self, q: int, s: int) -> int:
        try:
            return self.act[(q, s)]
        except KeyError:
            raise KeyError(f"policy undefined at memory {q}, state {s}") from None

    def update(self, q: int, label) -> int:
        return self.machine.delta[q][self.machine.index(label)]


def extract_policy(pm: ProductMdp, vf: ValueFunction) -> FinitePolicy:
    """Greedy policy; among actions within ``TIE_TOL`` of the best, the smallest index wins."""
    qv = _q_values(pm, vf.values, pm.lam)
    best = qv.max(axis=1, keepdims=True)
    choice = np.argmax(qv >= best - TIE_TOL, axis=1)
    act = {(q, s): int(choice[u]) for u, (s, q) in enumerate(pm.states)}
    return FinitePolicy(pm.machine, act, pm.mdp.actions, pm.mdp.states)


def synthesize(mdp: LabeledMdp, machine: RewardMachine, tol: float = 1e-9):
    """Optimal value at the initial state and a greedy finite-memory policy."""
    pm = product(mdp, machine)
    vf = value_iteration(pm, tol)
    return vf, extract_policy(pm, vf)


def policy_value(
    mdp: LabeledMdp, machine: RewardMachine, policy: FinitePolicy, tol: float = 1e-9
) -> float:
    """Expected discounted reward of ``policy`` by iterative policy evaluation."""
    pm = product(mdp, machine)
    lam = pm.lam
    n = pm.num_states
    rows, cols, vals = [], [], []
    for u, (s, q) in enumerate(pm.states):
        a = policy.action(q, s)
        if not pm.enabled[u, a]:
            raise ValueError(f"policy plays disabled action {mdp.actions[a]!r} in {mdp.states[s]!r}")
        row = pm.matrices[a].getrow(u)
        rows += [u] * row.nnz
        cols += list(row.indices)
        vals += list(row.data)
    chain = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    threshold = tol * (1 - lam) / (2 * lam) if lam > 0 else 0.0
    v = np.zeros(n)
    while True:
        v2 = pm.reward + lam * (chain @ v)
        res = float(np.max(np.abs(v2 - v))) if n else 0.0
        v = v2
        if res <= threshold:
            return float(v[pm.initial])


def policy_to_json(policy: FinitePolicy) -> dict:
    return {
        "machine": machine_to_json(policy.machine),
        "actions": list(policy.action_names),
        "states": list(policy.state_names),
        "act": [
            [q, policy.state_names[s] if policy.state_names else s,
             policy.action_names[a] if policy.action_names else a]
            for (q, s), a in sorted(policy.act.items())
        ],
    }


def policy_from_json(data: dict) -> FinitePolicy:
    machine = machine_from_json(data["machine"])
    actions = tuple(data.get("actions", ()))
    states = tuple(data.get("states", ()))
    act = {}
    for q, s, a in data["act"]:
        s_i = states.index(s) if states else int(s)
        a_i = actions.index(a) if actions else int(a)
        act[(int(q), s_i)] = a_i
    return FinitePolicy(machine, act, actions, states)


# ---------------------------------------------------------------------------
# Simulation


@dataclass
class Trajectory:
    states: list[int]
    actions: list[int]
    word: list[frozenset] = field(default_factory=list)


def _sample(rng: np.random.Generator, dist) -> int:
    x = rng.random()
    acc = 0.0
    for t, p in dist:
        acc += float(p)
        if x < acc:
            return t
    return dist[-1][0]


def simulate(mdp: LabeledMdp, policy: FinitePolicy, steps: int, seed=0) -> Trajectory:
    """Run ``steps`` transitions; the word holds the ``steps + 1`` visited labels."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    rng = np.random.default_rng(seed)
    s, q = mdp.initial, policy.initial_memory
    traj = Trajectory([s], [], [mdp.labels[s]])
    for _ in range(steps):
        a = policy.action(q, s)
        q = policy.update(q, mdp.labels[s])
        s = _sample(rng, mdp.trans[s][a])
        traj.actions.append(a)
        traj.states.append(s)
        traj.word.append(mdp.labels[s])
    return traj


def switch_time(word: Sequence[frozenset], prop: str = "p") -> Optional[int]:
    """Index of the first letter without ``prop`` (``None`` if it holds throughout)."""
    for t, sigma in enumerate(word):
        if prop not in sigma:
            return t
    return None


# ---------------------------------------------------------------------------
# Block lengths for the two-discount example


def block_value(lam1, lam2, k0: int, k1: int) -> Fraction:
    """``min(λ1^k0 (1 - λ2^k1), λ2^(k0 + k1))`` for the run ``s0^k0 s1^k1 s2^ω``."""
    lam1, lam2 = Fraction(lam1), Fraction(lam2)
    return min(lam1**k0 * (1 - lam2**k1), lam2 ** (k0 + k1))


def best_block_search(lam1, lam2, k0: int, k_max: int = 1000) -> int:
    """Smallest ``k1`` in ``[0, k_max]`` maximizing :func:`block_value`."""
    lam1, lam2 = Fraction(lam1), Fraction(lam2)
    if not 0 < lam1 < lam2 < 1:
        raise ValueError("need 0 < λ1 < λ2 < 1")
    if k0 < 0:
        raise ValueError("k0 must be nonnegative")
    best_k, best_v = 0, None
    for k1 in range(k_max + 1):
        v = block_value(lam1, lam2, k0, k1)
        if best_v is None or v > best_v:
            best_k, best_v = k1, v
    if best_k == k_max:
        raise ValueError(f"argmax at the search boundary k_max={k_max}; increase k_max")
    return best_k

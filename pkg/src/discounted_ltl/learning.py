"""Learning discounted LTL objectives in MDPs with unknown transitions.

Two learners live here.  :func:`pac_learn` handles arbitrary discount
factors by unrolling the MDP to a finite horizon and running optimistic,
model-based exploration on the resulting history tree.  :func:`rl_product`
runs tabular Q-learning on the product with a compiled reward machine and
needs a uniformly discounted formula.
"""
from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .formula import Formula
from .mdp import FinitePolicy, LabeledMdp, _sample
from .reward_machine import RewardMachine, StateBudgetExceeded
from .semantics import eval_finite, horizon

DEFAULT_BUDGET = 10**6


# ---------------------------------------------------------------------------
# Environment


class Environment:
    """Interaction interface: learners see states, labels and action names only."""

    actions: tuple[str, ...] = ()
    num_states: int = 0

    def seed(self, seed) -> None:
        raise NotImplementedError

    def reset(self) -> tuple[int, frozenset]:
        raise NotImplementedError

    def step(self, action: int) -> tuple[int, frozenset]:
        raise NotImplementedError

    def available(self, state: int) -> list[int]:
        return list(range(len(self.actions)))


class MdpEnvironment(Environment):
    """Simulator backed by a :class:`LabeledMdp`."""

    def __init__(self, mdp: LabeledMdp, seed=0):
        self._mdp = mdp
        self.actions = mdp.actions
        self.num_states = mdp.num_states
        self.seed(seed)
        self._state: Optional[int] = None
        self.steps_taken = 0

    def seed(self, seed) -> None:
        self._rng = np.random.default_rng(seed)

    def reset(self):
        self._state = self._mdp.initial
        return self._state, self._mdp.labels[self._state]

    def step(self, action: int):
        if self._state is None:
            raise RuntimeError("call reset() first")
        dist = self._mdp.trans[self._state][action]
        if dist is None:
            raise ValueError(f"action {self.actions[action]!r} is not enabled")
        self._state = _sample(self._rng, dist)
        self.steps_taken += 1
        return self._state, self._mdp.labels[self._state]

    def available(self, state: int) -> list[int]:
        return self._mdp.enabled(state)


# ---------------------------------------------------------------------------
# Policies and reports


@dataclass
class HistoryPolicy:
    """Action as a function of the label history and the current state.

    ``act[(word, s)]`` where ``word`` holds the labels seen so far, including
    that of ``s``.  Histories outside the table fall back to ``default``.
    """

    act: dict
    horizon: int
    default: int = 0

    def action(self, word, s: int) -> int:
        return self.act.get((tuple(word), s), self.default)


@dataclass
class LearnReport:
    seed: object
    episodes: int
    steps: int
    value_trace: list = field(default_factory=list)
    suboptimality: Optional[float] = None
    budget_exhausted: bool = False
    horizon: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Known-model unrolling


@dataclass
class UnrolledMdp:
    """The history tree of ``mdp`` up to depth ``horizon``.

    Node ``k`` is ``(s, word)`` where ``word`` holds the labels of the run so
    far (so its depth is ``len(word) - 1``).  Leaves sit at depth
    ``horizon`` and pay ``eval_finite(formula, word)``; inner nodes pay 0.
    """

    mdp: LabeledMdp
    formula: Formula
    horizon: int
    nodes: list
    children: list  # per node: {action: [(child, prob)]}
    leaf_reward: dict  # node -> float

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def depth(self, k: int) -> int:
        return len(self.nodes[k][1]) - 1


def unroll(mdp: LabeledMdp, f: Formula, eps, budget: int = DEFAULT_BUDGET) -> UnrolledMdp:
    T = horizon(f, eps)
    root = (mdp.initial, (mdp.labels[mdp.initial],))
    index = {root: 0}
    nodes = [root]
    children: list[dict] = []
    frontier = [0]
    for _ in range(T):
        nxt = []
        for k in frontier:
            s, w = nodes[k]
            kids: dict = {}
            for a in mdp.enabled(s):
                out = []
                for t, p in mdp.trans[s][a]:
                    if p == 0:
                        continue
                    key = (t, w + (mdp.labels[t],))
                    j = index.get(key)
                    if j is None:
                        if len(nodes) >= budget:
                            raise StateBudgetExceeded(
                                f"unrolling to horizon {T} exceeded {budget} nodes; "
                                "use a larger eps or fewer propositions"
                            )
                        j = index[key] = len(nodes)
                        nodes.append(key)
                        nxt.append(j)
                    out.append((j, float(p)))
                kids[a] = out
            children.append(kids)
        frontier = nxt
    while len(children) < len(nodes):
        children.append({})
    leaves = {k: float(eval_finite(f, nodes[k][1])) for k in frontier}
    return UnrolledMdp(mdp, f, T, nodes, children, leaves)


def backward_induction(u: UnrolledMdp) -> tuple[float, HistoryPolicy]:
    """Optimal finite-horizon value and policy; ties go to the smallest action index."""
    value = [0.0] * u.num_nodes
    act = {}
    for k in range(u.num_nodes - 1, -1, -1):
        if k in u.leaf_reward:
            value[k] = u.leaf_reward[k]
            continue
        best_a, best_v = None, -math.inf
        for a in sorted(u.children[k]):
            v = sum(p * value[j] for j, p in u.children[k][a])
            if v > best_v + 1e-12:
                best_a, best_v = a, v
        value[k] = best_v
        act[(u.nodes[k][1], u.nodes[k][0])] = best_a
    return value[0], HistoryPolicy(act, u.horizon)


def evaluate_history_policy(mdp: LabeledMdp, f: Formula, policy: HistoryPolicy) -> float:
    """Exact expectation of ``eval_finite`` on the depth-``horizon`` label word under ``policy``."""
    T = policy.horizon
    leaf_cache: dict = {}
    layer = {(mdp.initial, (mdp.labels[mdp.initial],)): 1.0}
    for _ in range(T):
        nxt: dict = {}
        for (s, w), mass in layer.items():
            a = policy.action(w, s)
            if mdp.trans[s][a] is None:
                a = mdp.enabled(s)[0]
            for t, p in mdp.trans[s][a]:
                if p:
                    key = (t, w + (mdp.labels[t],))
                    nxt[key] = nxt.get(key, 0.0) + mass * float(p)
        layer = nxt
    total = 0.0
    for (_, w), mass in layer.items():
        if w not in leaf_cache:
            leaf_cache[w] = float(eval_finite(f, w))
        total += mass * leaf_cache[w]
    return total


# ---------------------------------------------------------------------------
# PAC learning on the unrolled tree


def visit_threshold(num_states: int, num_actions: int, eps: float, p: float) -> int:
    """Samples per state-action pair before its empirical model is trusted."""
    return math.ceil(2 * math.log(2 * num_states * num_actions / p) / eps**2)


class _Planner:
    """Optimistic backward induction over the implicit history tree."""

    def __init__(self, f, T, counts, totals, known, labels, available, leaf_cache):
        self.f, self.T = f, T
        self.counts, self.totals, self.known = counts, totals, known
        self.labels, self.available = labels, available
        self.leaf_cache = leaf_cache
        self.memo: dict = {}

    def leaf(self, w):
        v = self.leaf_cache.get(w)
        if v is None:
            v = self.leaf_cache[w] = float(eval_finite(self.f, w))
        return v

    def solve(self, s: int, w: tuple):
        """Return ``(value, action, reaches_unknown)`` at node ``(s, w)``."""
        key = (s, w)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if len(w) - 1 >= self.T:
            out = (self.leaf(w), None, False)
        else:
            best = None
            for a in self.available(s):
                if not self.known[s][a]:
                    cand = (1.0, a, True)
                else:
                    n = self.totals[s][a]
                    v, unk = 0.0, False
                    for t, c in sorted(self.counts[s][a].items()):
                        sub = self.solve(t, w + (self.labels[t],))
                        v += c / n * sub[0]
                        unk = unk or sub[2]
                    cand = (v, a, unk)
                if best is None or cand[0] > best[0] + 1e-12:
                    best = cand
            out = best
        self.memo[key] = out
        return out


def pac_learn(
    env: Environment,
    f: Formula,
    eps: float,
    p: float,
    seed=0,
    m: Optional[int] = None,
    max_episodes: int = 100_000,
) -> tuple[HistoryPolicy, LearnReport]:
    """R-MAX style exploration on the depth-``T`` history tree, ``T = horizon(f, eps/2)``.

    A state-action pair becomes known after ``m`` visits (see
    :func:`visit_threshold`); until then planning assumes it leads to the
    maximal value 1.  Learning stops once the greedy optimistic policy can no
    longer reach an unknown pair, or after ``max_episodes`` (reported as
    ``budget_exhausted``).
    """
    if not (0 < eps < 1 and 0 < p < 1):
        raise ValueError("eps and p must lie in (0, 1)")
    env.seed(seed)
    T = horizon(f, Fraction(eps) / 2)
    nS, nA = env.num_states, len(env.actions)
    if m is None:
        m = visit_threshold(nS, nA, eps, p)
    counts = [[{} for _ in range(nA)] for _ in range(nS)]
    totals = [[0] * nA for _ in range(nS)]
    known = [[False] * nA for _ in range(nS)]
    labels: dict[int, frozenset] = {}
    leaf_cache: dict = {}
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * T + 1000))

    def plan():
        return _Planner(f, T, counts, totals, known, labels, env.available, leaf_cache)

    report = LearnReport(seed=seed, episodes=0, steps=0, horizon=T, extra={"visit_threshold": m})
    try:
        s0, l0 = env.reset()
        labels[s0] = l0
        planner = plan()
        while True:
            root_v, _, exploring = planner.solve(s0, (l0,))
            if not exploring:
                break
            if report.episodes >= max_episodes:
                report.budget_exhausted = True
                break
            report.episodes += 1
            report.value_trace.append(root_v)
            s, lab = env.reset()
            w = (lab,)
            replan = False
            for _ in range(T):
                _, a, _ = planner.solve(s, w)
                t, lab = env.step(a)
                report.steps += 1
                labels[t] = lab
                if not known[s][a]:
                    counts[s][a][t] = counts[s][a].get(t, 0) + 1
                    totals[s][a] += 1
                    if totals[s][a] >= m:
                        known[s][a] = True
                        replan = True
                elif t not in counts[s][a]:
                    # a successor never sampled while learning
                    counts[s][a][t] = 1
                    totals[s][a] += 1
                    replan = True
                s, w = t, w + (lab,)
                if replan:
                    planner = plan()
                    replan = False
        act = {}
        for (s, w), (_, a, _) in planner.memo.items():
            if a is not None:
                act[(w, s)] = a
        policy = HistoryPolicy(act, T, default=env.available(s0)[0])
        report.suboptimality = root_v - _empirical_value(planner, s0, (l0,), act)
    finally:
        sys.setrecursionlimit(old_limit)
    return policy, report


def _empirical_value(planner: _Planner, s0, w0, act) -> float:
    # value of the extracted policy under the learned model, with unknown pairs pessimistic (0)
    memo: dict = {}

    def val(s, w):
        if (s, w) in memo:
            return memo[(s, w)]
        if len(w) - 1 >= planner.T:
            v = planner.leaf(w)
        else:
            a = act.get((w, s))
            if a is None or not planner.known[s][a]:
                v = 0.0
            else:
                n = planner.totals[s][a]
                v = sum(c / n * val(t, w + (planner.labels[t],)) for t, c in planner.counts[s][a].items())
        memo[(s, w)] = v
        return v

    return val(s0, w0)


# ---------------------------------------------------------------------------
# Q-learning on the product


@dataclass(frozen=True)
class QHyper:
    """Q-learning hyperparameters.

    The learning rate for a state-action pair visited ``n`` times is
    ``max(alpha_min, alpha / n**alpha_power)``; exploration is ε-greedy with
    ``epsilon * epsilon_decay**episode`` floored at ``epsilon_min``.  Q-values
    start at ``q_init`` (1 is the largest achievable value, so the default is
    optimistic).
    """

    episodes: int = 4000
    steps: int = 400
    alpha: float = 1.0
    alpha_power: float = 0.0
    alpha_min: float = 0.05
    epsilon: float = 0.2
    epsilon_decay: float = 0.999
    epsilon_min: float = 0.0
    q_init: float = 1.0


def input_independent_values(m: RewardMachine, tol: float = 1e-12) -> dict[int, float]:
    """Machine states whose future rewards no longer depend on the input.

    Computes the best and worst achievable discounted sums from every state
    (value iteration over letters) and returns the common value wherever they
    agree within ``tol``.  The product can stop an episode in such a state.
    """
    lam = float(m.lam)
    if m.num_states == 0:
        return {}
    delta = np.array(m.delta, dtype=np.int64)
    reward = np.array([[float(r) for r in row] for row in m.reward])
    lo = np.zeros(m.num_states)
    hi = np.zeros(m.num_states)
    stop = tol * (1 - lam) / 4
    while True:
        lo2 = (reward + lam * lo[delta]).min(axis=1)
        hi2 = (reward + lam * hi[delta]).max(axis=1)
        done = max(np.max(np.abs(lo2 - lo)), np.max(np.abs(hi2 - hi))) <= stop
        lo, hi = lo2, hi2
        if done:
            break
    return {q: float((lo[q] + hi[q]) / 2) for q in range(m.num_states) if hi[q] - lo[q] <= tol}


def _greedy(qrow: np.ndarray, avail: list[int], rng, tie_tol=1e-12) -> int:
    vals = qrow[avail]
    best = vals.max()
    ties = [a for a, v in zip(avail, vals) if v >= best - tie_tol]
    return ties[0] if len(ties) == 1 else int(rng.choice(ties))


def rl_product(
    env: Environment,
    machine: RewardMachine,
    hyper: QHyper = QHyper(),
    seed=0,
) -> tuple[FinitePolicy, LearnReport]:
    """Tabular Q-learning over ``(s, q)`` with reward ``r(q, L(s))`` and discount λ.

    Episodes end after ``hyper.steps`` steps or on reaching a machine state
    whose remaining value is input independent; that value then serves as the
    bootstrap target.
    """
    env.seed(seed)
    rng = np.random.default_rng(seed)
    lam = float(machine.lam)
    nA = len(env.actions)
    settled = input_independent_values(machine)
    Q: dict[tuple[int, int], np.ndarray] = {}
    visits: dict[tuple[int, int], np.ndarray] = {}
    avail_cache: dict[int, list[int]] = {}
    reward = [[float(r) for r in row] for row in machine.reward]
    report = LearnReport(seed=seed, episodes=0, steps=0, extra={"hyper": asdict(hyper)})
    max_r = 0.0

    def avail(s):
        if s not in avail_cache:
            avail_cache[s] = env.available(s)
        return avail_cache[s]

    def qrow(x):
        row = Q.get(x)
        if row is None:
            row = Q[x] = np.full(nA, hyper.q_init)
            visits[x] = np.zeros(nA, dtype=np.int64)
        return row

    start = None
    for ep in range(hyper.episodes):
        eps_t = max(hyper.epsilon_min, hyper.epsilon * hyper.epsilon_decay**ep)
        s, lab = env.reset()
        q = machine.initial
        start = (s, q)
        for _ in range(hyper.steps):
            if q in settled:
                break
            x = (s, q)
            row = qrow(x)
            av = avail(s)
            if rng.random() < eps_t:
                a = int(rng.choice(av))
            else:
                a = _greedy(row, av, rng)
            i = machine.index(lab)
            r = reward[q][i]
            max_r = max(max_r, r)
            q2 = machine.delta[q][i]
            s2, lab2 = env.step(a)
            report.steps += 1
            if q2 in settled:
                target = r + lam * settled[q2]
            else:
                nxt = qrow((s2, q2))
                target = r + lam * float(nxt[avail(s2)].max())
            visits[x][a] += 1
            alpha = max(hyper.alpha_min, hyper.alpha / visits[x][a] ** hyper.alpha_power)
            row[a] += alpha * (target - row[a])
            s, q, lab = s2, q2, lab2
        report.episodes += 1
        if start in Q:
            report.value_trace.append(float(Q[start][avail(start[0])].max()))
    act = {}
    for (s, q), row in Q.items():
        av = avail(s)
        vals = row[av]
        act[(q, s)] = av[int(np.argmax(vals >= vals.max() - 1e-12))]
    report.extra["max_reward_seen"] = max_r
    report.extra["q_range"] = (
        [float(min(r.min() for r in Q.values())), float(max(r.max() for r in Q.values()))] if Q else [0.0, 0.0]
    )
    return FinitePolicy(machine, _DefaultAct(act, lambda s: env.available(s)[0]), env.actions), report


class _DefaultAct(dict):
    """Action table that answers unvisited ``(q, s)`` with the first available action."""

    def __init__(self, table, fallback):
        super().__init__(table)
        self._fallback = fallback

    def __missing__(self, key):
        return self._fallback(key[1])

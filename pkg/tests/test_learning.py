from fractions import Fraction

import numpy as np
import pytest

from discounted_ltl.formula import parse
from discounted_ltl.learning import (
    Environment,
    HistoryPolicy,
    MdpEnvironment,
    QHyper,
    backward_induction,
    evaluate_history_policy,
    input_independent_values,
    pac_learn,
    rl_product,
    unroll,
    visit_threshold,
)
from discounted_ltl.mdp import build_mdp, policy_value, safety_mdp, stay_or_move_mdp, synthesize
from discounted_ltl.reward_machine import StateBudgetExceeded, compile_formula, rm_atomic
from discounted_ltl.semantics import eval_finite, horizon

SAFE = parse("G[0.9] safe")


def corridor():
    # "go" reaches p in two steps; "stop" parks in a p-free sink
    return build_mdp(
        ["a", "b", "c", "x"], ["go", "stop"], "a",
        {"a": [], "b": [], "c": ["p"], "x": []},
        {
            ("a", "go"): {"b": 1}, ("a", "stop"): {"x": 1},
            ("b", "go"): {"c": 1}, ("b", "stop"): {"x": 1},
            ("c", "go"): {"c": 1}, ("c", "stop"): {"c": 1},
            ("x", "go"): {"x": 1}, ("x", "stop"): {"x": 1},
        },
    )


class HiddenEnv(Environment):
    """Delegates to a simulator while exposing nothing but the interaction interface."""

    def __init__(self, mdp):
        inner = MdpEnvironment(mdp)
        self.actions, self.num_states = inner.actions, inner.num_states
        self.seed, self.reset, self.step, self.available = inner.seed, inner.reset, inner.step, inner.available


class TestUnroll:
    def test_size_bound(self):
        mdp = safety_mdp("0.1", "0.2")
        u = unroll(mdp, SAFE, Fraction(1, 10))
        T = u.horizon
        assert T == horizon(SAFE, Fraction(1, 10))
        assert u.num_nodes <= sum(mdp.num_states * 2**t for t in range(T + 1))

    def test_leaf_rewards(self):
        f = parse("p U[1/2] X[1/2] !p")
        u = unroll(corridor(), f, Fraction(1, 8))
        assert u.leaf_reward
        for k, r in u.leaf_reward.items():
            assert u.depth(k) == u.horizon
            assert r == float(eval_finite(f, u.nodes[k][1]))

    def test_propositional(self):
        u = unroll(corridor(), parse("!p"), Fraction(1, 10))
        assert u.horizon == 0 and u.num_nodes == 1
        assert backward_induction(u)[0] == 1.0

    def test_switch_example(self):
        f = parse("G[0.99] p & F[0.99] !p")
        value, _ = backward_induction(unroll(stay_or_move_mdp(), f, Fraction(1, 20)))
        assert abs(value - 0.4998370298991993) <= 0.1

    @pytest.mark.parametrize("eps", [Fraction(1, 10), Fraction(1, 20)])
    def test_agrees_with_product(self, eps):
        mdp = safety_mdp("0.1", "0.05")
        vf, _ = synthesize(mdp, compile_formula(SAFE))
        value, policy = backward_induction(unroll(mdp, SAFE, eps))
        assert abs(value - vf.initial) <= eps
        assert evaluate_history_policy(mdp, SAFE, policy) == pytest.approx(value, abs=1e-12)

    def test_budget(self):
        with pytest.raises(StateBudgetExceeded, match="larger eps"):
            unroll(safety_mdp("0.1", "0.2"), SAFE, Fraction(1, 100), budget=50)


class TestPac:
    def test_threshold(self):
        assert visit_threshold(3, 2, 0.05, 0.1) == 3830  # ceil(800 ln 120)

    def test_corridor_exact(self):
        f = parse("F[1/2] p")
        mdp = corridor()
        policy, report = pac_learn(MdpEnvironment(mdp), f, 0.1, 0.1, seed=0, m=5)
        assert evaluate_history_policy(mdp, f, policy) == 0.25
        assert not report.budget_exhausted and report.suboptimality == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("p1, p2, action", [(0, "0.05", 0), ("0.05", 0, 1)])
    def test_safety_scenarios(self, p1, p2, action):
        mdp = safety_mdp(p1, p2)
        opt = synthesize(mdp, compile_formula(SAFE))[0].initial
        policy, report = pac_learn(HiddenEnv(mdp), SAFE, 0.05, 0.1, seed=3)
        assert policy.action((frozenset({"safe"}),), 0) == action
        assert opt - evaluate_history_policy(mdp, SAFE, policy) <= 0.05
        assert report.horizon == horizon(SAFE, Fraction(1, 40))

    def test_seeded(self):
        mdp = safety_mdp("0.1", "0.2")
        a = pac_learn(MdpEnvironment(mdp), SAFE, 0.1, 0.2, seed=9, m=30)
        b = pac_learn(MdpEnvironment(mdp), SAFE, 0.1, 0.2, seed=9, m=30)
        assert a[0].act == b[0].act and a[1].to_json() == b[1].to_json()

    def test_budget_reported(self):
        _, report = pac_learn(MdpEnvironment(safety_mdp(0, "0.05")), SAFE, 0.05, 0.1, max_episodes=2)
        assert report.budget_exhausted and report.episodes == 2

    def test_history_policy_default(self):
        pol = HistoryPolicy({((frozenset(),), 0): 1}, horizon=3, default=0)
        assert pol.action([frozenset()], 0) == 1
        assert pol.action([frozenset({"p"})], 0) == 0


class TestQLearning:
    def test_settled_states(self):
        vals = input_independent_values(rm_atomic("p", Fraction(2, 3)))
        assert set(vals) == {1, 2}
        assert vals[1] == pytest.approx(1.0) and vals[2] == pytest.approx(0.0)

    def test_safety(self):
        mdp = safety_mdp(0, "0.05")
        m = compile_formula(SAFE)
        policy, report = rl_product(MdpEnvironment(mdp), m, QHyper(episodes=300, steps=100), seed=1)
        assert policy_value(mdp, m, policy) == pytest.approx(1.0, abs=1e-6)
        lo, hi = report.extra["q_range"]
        assert 0 <= lo and hi <= 1 + 1e-12
        assert report.extra["max_reward_seen"] <= float(1 - m.lam)

    def test_seeded(self):
        mdp = safety_mdp("0.1", "0.1")
        m = compile_formula(SAFE)
        hyper = QHyper(episodes=50, steps=40)
        a = rl_product(MdpEnvironment(mdp), m, hyper, seed=5)
        b = rl_product(MdpEnvironment(mdp), m, hyper, seed=5)
        assert dict(a[0].act) == dict(b[0].act)
        assert a[1].value_trace == b[1].value_trace

    def test_corridor(self):
        mdp = corridor()
        m = compile_formula(parse("F[1/2] p"))
        policy, _ = rl_product(HiddenEnv(mdp), m, QHyper(episodes=200, steps=10), seed=0)
        assert policy_value(mdp, m, policy) == pytest.approx(0.25, abs=1e-9)

    def test_values_bounded_on_switch_example(self):
        m = compile_formula(parse("G[0.99] p & F[0.99] !p"), dedup=True)
        _, report = rl_product(MdpEnvironment(stay_or_move_mdp()), m, QHyper(episodes=200), seed=0)
        lo, hi = report.extra["q_range"]
        assert 0 <= lo and hi <= 1 + 1e-12
        assert np.all(np.diff(report.value_trace) <= 1e-12)

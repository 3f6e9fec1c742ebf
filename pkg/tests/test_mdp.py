import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from discounted_ltl.formula import parse
from discounted_ltl.mdp import (
    FinitePolicy,
    MdpValidationError,
    best_block_search,
    block_value,
    build_mdp,
    extract_policy,
    load_mdp,
    mdp_to_json,
    policy_from_json,
    policy_to_json,
    policy_value,
    product,
    safety_mdp,
    simulate,
    stay_or_move_mdp,
    switch_time,
    synthesize,
    value_iteration,
)
from discounted_ltl.reward_machine import compile_formula, rm_eval_finite
from discounted_ltl.semantics import LassoWord

LAM = Fraction(99, 100)


def example_value(k):
    return float(1 - max(LAM**k, 1 - LAM**k))


@pytest.fixture(scope="module")
def switch_machine():
    return compile_formula(parse("G[0.99] p & F[0.99] !p"), dedup=True)


@pytest.fixture(scope="module")
def safe_machine():
    return compile_formula(parse("G[0.9] safe"))


def safety_json(p1, p2):
    trans = [
        ("s0", "a1", "s0", 1 - Fraction(p1)), ("s0", "a1", "s1", Fraction(p1)),
        ("s0", "a2", "s0", 1 - Fraction(p2)), ("s0", "a2", "s2", Fraction(p2)),
    ] + [(s, a, s, 1) for s in ("s1", "s2") for a in ("a1", "a2")]
    return {
        "states": [{"id": "s0", "label": ["safe"]}, {"id": "s1", "label": []}, {"id": "s2", "label": []}],
        "actions": ["a1", "a2"],
        "initial": "s0",
        "transitions": [{"from": f, "action": a, "to": t, "prob": str(p)} for f, a, t, p in trans],
    }


class TestLoad:
    def test_safety_model(self):
        m = load_mdp(safety_json("0", "1/20"))
        assert m.states == ("s0", "s1", "s2")
        assert m.trans[0][1] == ((0, Fraction(19, 20)), (2, Fraction(1, 20)))
        assert m.labels[0] == {"safe"}

    def test_matches_builder(self):
        assert load_mdp(safety_json("1/20", "0")) == safety_mdp("1/20", 0)
        assert load_mdp(mdp_to_json(stay_or_move_mdp())) == stay_or_move_mdp()

    def test_bad_sum(self):
        data = safety_json("0", "1/20")
        data["transitions"][0]["prob"] = "0.9"
        with pytest.raises(MdpValidationError, match=r"\('s0', 'a1'\) sum to 9/10"):
            load_mdp(data)

    def test_missing_distribution(self):
        data = safety_json("0", "1/20")
        data["transitions"] = [t for t in data["transitions"] if t["from"] != "s1"]
        with pytest.raises(MdpValidationError, match="missing"):
            load_mdp(data)

    def test_enabled_subset(self):
        data = json.loads(json.dumps(mdp_to_json(stay_or_move_mdp())))
        data["states"][1]["enabled"] = ["a1"]
        m = load_mdp(data)
        assert m.enabled(1) == [0]

    def test_schema_error(self):
        with pytest.raises(MdpValidationError):
            load_mdp({"states": []})


class TestProduct:
    def test_size_and_rewards(self, switch_machine):
        mdp = stay_or_move_mdp()
        pm = product(mdp, switch_machine)
        assert pm.num_states <= mdp.num_states * switch_machine.num_states
        for u, (s, q) in enumerate(pm.states):
            i = switch_machine.index(mdp.labels[s])
            assert pm.reward[u] == float(switch_machine.reward[q][i])
        for a, mat in enumerate(pm.matrices):
            rows = np.asarray(mat.sum(axis=1)).ravel()
            assert np.allclose(rows[pm.enabled[:, a]], 1.0)

    def test_projection(self, safe_machine):
        mdp = safety_mdp("1/10", "1/5")
        pm = product(mdp, safe_machine)
        for a, mat in enumerate(pm.matrices):
            coo = mat.tocoo()
            for u, v, p in zip(coo.row, coo.col, coo.data):
                s, q = pm.states[u]
                t, q2 = pm.states[v]
                assert q2 == safe_machine.delta[q][safe_machine.index(mdp.labels[s])]
                assert p == pytest.approx(float(dict(mdp.trans[s][a])[t]))

    def test_label_outside_alphabet(self):
        with pytest.raises(MdpValidationError):
            product(safety_mdp(0, 0), compile_formula(parse("G[0.9] p")))


class TestValueIteration:
    def test_deterministic_safety(self, safe_machine):
        vf = value_iteration(product(safety_mdp(0, "0.05"), safe_machine), 1e-9)
        assert vf.initial == pytest.approx(1.0, abs=1e-9)

    def test_switch_example(self, switch_machine):
        best = max(example_value(k) for k in range(201))
        vf, policy = synthesize(stay_or_move_mdp(), switch_machine, 1e-9)
        assert vf.initial == pytest.approx(best, abs=1e-6)
        assert np.all((vf.values >= -1e-12) & (vf.values <= 1 + 1e-12))

    def test_residual(self, safe_machine):
        pm = product(safety_mdp("0.1", "0.2"), safe_machine)
        tol = 1e-8
        vf = value_iteration(pm, tol)
        lam = pm.lam
        assert vf.residual <= tol * (1 - lam) / (2 * lam)
        qv = np.column_stack([pm.reward + lam * (m @ vf.values) for m in pm.matrices])
        bellman = np.where(pm.enabled, qv, -np.inf).max(axis=1)
        assert np.max(np.abs(bellman - vf.values)) <= tol


class TestPolicies:
    def test_switch_time(self, switch_machine):
        mdp = stay_or_move_mdp()
        _, policy = synthesize(mdp, switch_machine)
        tr = simulate(mdp, policy, 150, seed=0)
        assert switch_time(tr.word) == 69
        assert tr.word[:69] == [frozenset({"p"})] * 69

    def test_safety_choice(self, safe_machine):
        _, pol = synthesize(safety_mdp(0, "0.05"), safe_machine)
        assert pol.action(safe_machine.initial, 0) == 0
        _, pol = synthesize(safety_mdp("0.05", 0), safe_machine)
        assert pol.action(safe_machine.initial, 0) == 1

    def test_greedy_value(self, safe_machine):
        mdp = safety_mdp("0.1", "0.2")
        tol = 1e-8
        vf, pol = synthesize(mdp, safe_machine, tol)
        lam = float(safe_machine.lam)
        assert abs(policy_value(mdp, safe_machine, pol, tol) - vf.initial) <= 2 * tol * lam / (1 - lam)

    def test_always_move(self, switch_machine):
        mdp = stay_or_move_mdp()
        pol = FinitePolicy(switch_machine, {(q, s): 1 for q in range(switch_machine.num_states) for s in (0, 1)})
        # the initial state already carries p, so the earliest switch gives the word p (¬p)^ω
        assert policy_value(mdp, switch_machine, pol) == pytest.approx(example_value(1), abs=1e-9)

    def test_scaling_invariance(self, safe_machine):
        mdp = safety_mdp("0.1", "0.2")
        pm = product(mdp, safe_machine)
        vf = value_iteration(pm)
        a = extract_policy(pm, vf)
        pm.reward = pm.reward * 3.0
        b = extract_policy(pm, value_iteration(pm))
        assert a.act == b.act

    def test_beats_memoryless(self):
        mdp = safety_mdp("0.3", "0.1")
        m = compile_formula(parse("safe U[1/2] !safe"))
        tol = 1e-9
        vf, best = synthesize(mdp, m, tol)
        opt = policy_value(mdp, m, best, tol)
        pm = product(mdp, m)
        assert len(pm.states) <= 10
        for choice in itertools.product(range(2), repeat=len(pm.states)):
            pol = FinitePolicy(m, {(q, s): a for (s, q), a in zip(pm.states, choice)})
            assert opt >= policy_value(mdp, m, pol, tol) - 2 * tol

    def test_reward_timing(self):
        # on a deterministic chain the product return is the machine's value on the label word
        mdp = build_mdp(
            ["a", "b", "c"], ["go"], "a", {"a": ["p"], "b": [], "c": ["q"]},
            {("a", "go"): {"b": 1}, ("b", "go"): {"c": 1}, ("c", "go"): {"b": 1}},
        )
        m = compile_formula(parse("p U[2/3] X[2/3] q"), props=["p", "q"])
        pol = FinitePolicy(m, {(q, s): 0 for q in range(m.num_states) for s in range(3)})
        word = LassoWord([["p"]], [[], ["q"]]).take(120)
        assert policy_value(mdp, m, pol, 1e-12) == pytest.approx(float(rm_eval_finite(m, word)), abs=1e-10)

    def test_json_round_trip(self, safe_machine):
        mdp = safety_mdp(0, "0.05")
        _, pol = synthesize(mdp, safe_machine)
        back = policy_from_json(json.loads(json.dumps(policy_to_json(pol))))
        assert back.act == pol.act
        assert back.machine.same_as(pol.machine)


class TestSimulate:
    def test_seeded(self, safe_machine):
        mdp = safety_mdp("0.2", "0.3")
        _, pol = synthesize(mdp, safe_machine)
        a, b = simulate(mdp, pol, 50, seed=4), simulate(mdp, pol, 50, seed=4)
        assert a == b
        assert len(a.word) == 51 and len(a.actions) == 50

    def test_monte_carlo(self, safe_machine):
        mdp = safety_mdp(0, "0.05")
        pol = FinitePolicy(safe_machine, {(q, s): 1 for q in range(safe_machine.num_states) for s in range(3)})
        exact = policy_value(mdp, safe_machine, pol)
        T = 66
        rng = np.random.default_rng(0)
        samples = np.array(
            [float(rm_eval_finite(safe_machine, simulate(mdp, pol, T - 1, seed=rng.integers(2**32)).word))
             for _ in range(10_000)]
        )
        err = 3 * samples.std() / math.sqrt(len(samples)) + 0.9**T
        assert abs(samples.mean() - exact) <= err


class TestBlockSearch:
    @pytest.mark.parametrize("lams", [("0.6", "0.9"), ("0.5", "0.8")])
    def test_monotone(self, lams):
        ks = [best_block_search(*lams, k0) for k0 in range(21)]
        assert all(a <= b for a, b in zip(ks, ks[1:]))
        assert ks[-1] > ks[0]

    def test_local_optimum(self):
        k = best_block_search("0.6", "0.9", 10)
        v = block_value("0.6", "0.9", 10, k)
        assert v >= block_value("0.6", "0.9", 10, k + 1)
        assert v >= block_value("0.6", "0.9", 10, k - 1)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            best_block_search("0.9", "0.9", 0)
        with pytest.raises(ValueError, match="boundary"):
            best_block_search("0.6", "0.9", 0, k_max=3)

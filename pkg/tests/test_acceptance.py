"""Acceptance suite; every test prints one PASS/FAIL line for its criterion."""
import itertools
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest

from corpus import LAMBDAS, core_formulas
from discounted_ltl.formula import parse
from discounted_ltl.learning import (
    MdpEnvironment,
    backward_induction,
    evaluate_history_policy,
    pac_learn,
    rl_product,
    unroll,
)
from discounted_ltl.mdp import (
    best_block_search,
    block_value,
    safety_mdp,
    simulate,
    stay_or_move_mdp,
    switch_time,
    synthesize,
)
from discounted_ltl.reward_machine import (
    Ev,
    Pair,
    alphabet,
    compile_formula,
    rm_atomic,
    rm_eval_bounds,
    rm_eval_finite,
    rm_eventually,
    scc_decompose,
)
from discounted_ltl.semantics import LassoWord, eval_interval, eval_lasso

SWITCH = "G[0.99] p & F[0.99] !p"
SAFE = parse("G[0.9] safe")
K_STAR = 69


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def run(number, title, budget):
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield
            status = "PASS"
        finally:
            took = time.perf_counter() - start
            if took > budget:
                status = "FAIL"
            with capsys.disabled():
                print(f"\nACCEPTANCE {number} {status}: {title} ({took:.1f}s, budget {budget}s)")
        assert took <= budget, f"took {took:.1f}s, budget {budget}s"

    return run


@pytest.fixture(scope="module")
def corpus_machines():
    out = []
    for lam in LAMBDAS:
        for f in core_formulas(lam):
            out.append((f, lam, compile_formula(f, lam=lam, props=("p", "q"), budget=10**6)))
    return out


class TestFigures:
    def test_criterion_1(self, criterion):
        with criterion(1, "figure reproduction", 1):
            m = rm_atomic("p", Fraction(2, 3))
            assert m.num_states == 3
            assert {r for row in m.reward for r in row} == {Fraction(1, 3), 0}
            assert m.reward[0] == [0, Fraction(1, 3)]

            ev = compile_formula(parse("F[2/3] p"))
            z = Fraction(0)
            assert ev.num_states == 6
            assert Ev(z, ((0, z),)) in ev.payloads
            assert Ev(Fraction(-1, 2), ((0, Fraction(-1, 2)), (1, z))) in ev.payloads
            assert Ev(Fraction(-1), ((1, Fraction(-3, 4)), (1, z))) in ev.payloads

            dis = compile_formula(parse("p | X[2/3] q"))
            zetas = {pl.zeta for pl in dis.payloads if isinstance(pl, Pair)}
            assert zetas == {Fraction(x) for x in ("0", "1/2", "3/4", "5/4", "-1/2", "9/8", "-5/4")}


class TestOracle:
    def test_criterion_2(self, criterion, corpus_machines):
        with criterion(2, "oracle equivalence on the depth-3 corpus", 300):
            letters = alphabet(("p", "q"))
            bad = []
            for k, (f, lam, m) in enumerate(corpus_machines):
                rng = random.Random(k)
                slack = 2 * lam**12
                for _ in range(200):
                    w = tuple(rng.choice(letters) for _ in range(12))
                    iv = eval_interval(f, w)
                    mid = (iv.lo + iv.hi) / 2
                    if not rm_eval_bounds(m, w).intersects(iv) or abs(rm_eval_finite(m, w) - mid) > slack:
                        bad.append((f, lam, w))
            assert not bad, bad[:3]

    def test_criterion_3(self, criterion, corpus_machines):
        with criterion(3, "I2 and I3 on the depth-3 corpus", 300):
            for f, lam, m in corpus_machines:
                assert all(0 <= r <= 1 - lam for *_, r in m.edges()), f
                report = scc_decompose(m)
                assert set(report.types.values()) <= {Fraction(0), 1 - lam}, f


class TestEventuallyUntil:
    def test_criterion_4(self, criterion):
        with criterion(4, "F and true-U agree on all words of length 8", 10):
            for lam in LAMBDAS:
                a = rm_eventually(rm_atomic("p", lam))
                b = compile_formula(parse(f"true U[{lam}] p"))
                for w in itertools.product(alphabet(("p",)), repeat=8):
                    assert rm_eval_finite(a, w) == rm_eval_finite(b, w)


class TestSwitchExample:
    def test_criterion_5(self, criterion):
        with criterion(5, "switch example value and switch time", 10):
            lam = Fraction(99, 100)
            values = [1 - max(lam**k, 1 - lam**k) for k in range(201)]
            best = max(values)
            assert values.index(best) == K_STAR
            mdp = stay_or_move_mdp()
            vf, policy = synthesize(mdp, compile_formula(parse(SWITCH), dedup=True))
            assert abs(vf.initial - float(best)) <= 1e-6
            assert switch_time(simulate(mdp, policy, 200).word) == K_STAR


class TestBlocks:
    def test_criterion_6(self, criterion):
        with criterion(6, "best block length is monotone in the preceding block", 10):
            for lams in (("0.6", "0.9"), ("0.5", "0.8")):
                ks = [best_block_search(*lams, k0) for k0 in range(21)]
                assert all(a <= b for a, b in zip(ks, ks[1:])), ks
                assert ks[-1] > ks[0]


class TestPac:
    def test_criterion_7(self, criterion):
        with criterion(7, "PAC pipeline consistency", 600):
            mdp = stay_or_move_mdp()
            f = parse(SWITCH)
            vi = synthesize(mdp, compile_formula(f, dedup=True))[0].initial
            bi, _ = backward_induction(unroll(mdp, f, 0.05))
            assert abs(bi - vi) <= 0.1

            for p1, p2, action in ((0, "0.05", 0), ("0.05", 0, 1)):
                safety = safety_mdp(p1, p2)
                opt = synthesize(safety, compile_formula(SAFE))[0].initial
                good = right = 0
                for seed in range(20):
                    policy, _ = pac_learn(MdpEnvironment(safety), SAFE, 0.05, 0.1, seed=seed)
                    good += opt - evaluate_history_policy(safety, SAFE, policy) <= 0.05
                    right += policy.action((frozenset({"safe"}),), 0) == action
                assert good >= 18, (p1, p2, good)
                assert right >= 18, (p1, p2, right)


class TestRl:
    def test_criterion_8(self, criterion):
        with criterion(8, "Q-learning on the product recovers the switch time", 600):
            mdp = stay_or_move_mdp()
            m = compile_formula(parse(SWITCH), dedup=True)
            hits = []
            for seed in range(10):
                policy, _ = rl_product(MdpEnvironment(mdp, seed=seed), m, seed=seed)
                k = switch_time(simulate(mdp, policy, 300, seed=seed).word)
                hits.append(k is not None and abs(k - K_STAR) <= 2)
            assert sum(hits) >= 8, hits


class TestClosedForms:
    TOL = 1e-9

    def close(self, f, prefix, cycle, expected):
        iv = eval_lasso(parse(f), LassoWord(prefix, cycle), Fraction(1, 10**10))
        return abs(float((iv.lo + iv.hi) / 2) - float(expected)) <= self.TOL

    def test_criterion_9(self, criterion):
        with criterion(9, "closed forms on lasso words", 10):
            P, N, Q = ["p"], [], ["q"]
            for lam in (Fraction(1, 2), Fraction(2, 3), Fraction(9, 10)):
                for n in range(6):
                    assert self.close(f"F[{lam}] p", [N] * n, [P], lam**n)
                    assert self.close(f"G[{lam}] p", [P] * n, [N], 1 - lam**n)
                assert self.close(f"X[{lam}] p", [N], [P], lam)
                assert self.close(f"p | X[{lam}] q", [P], [N], 1)
                assert self.close(f"p | X[{lam}] q", [N, Q], [N], lam)
                assert self.close(f"p | X[{lam}] q", [N, N], [Q], 0)
            l1, l2 = Fraction(3, 5), Fraction(9, 10)
            for n, m in ((0, 1), (2, 3), (4, 7)):
                # one block of m p-letters after n misses, then ¬p forever
                expected = l1**n * (1 - l2**m)
                assert self.close("F[0.6] G[0.9] p", [N] * n + [P] * m, [N], expected)
                assert block_value(l1, l2, n, m) <= expected

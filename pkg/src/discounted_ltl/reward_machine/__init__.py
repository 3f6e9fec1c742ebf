"""Reward machines for uniformly discounted LTL."""
from .analysis import (
    InvariantI2Violation,
    InvariantReport,
    SccReport,
    Violation,
    check_invariants,
    scc_decompose,
)
from .constructions import (
    NonUniformFormula,
    compile_formula,
    rm_atomic,
    rm_disjunction,
    rm_eventually,
    rm_false,
    rm_negation,
    rm_next,
    rm_true,
    rm_until,
)
from .dot import to_dot
from .machine import (
    DEFAULT_BUDGET,
    Base,
    Ev,
    Left,
    Pair,
    RewardMachine,
    Right,
    Start,
    StateBudgetExceeded,
    Un,
    Wrapped,
    alphabet,
    letter_index,
    machine_from_json,
    machine_to_json,
    rm_eval_bounds,
    rm_eval_finite,
)

compile = compile_formula  # noqa: A001

__all__ = [name for name in dir() if not name.startswith("_")]

"""Discounted LTL: quantitative semantics, reward-machine compilation, and policy learning."""
from .formula import (
    ANY,
    And,
    Atom,
    Falsity,
    Finally,
    Formula,
    FormulaSyntaxError,
    Globally,
    Next,
    Not,
    Or,
    Truth,
    Until,
    desugar,
    is_uniform,
    max_discount,
    parse,
    to_text,
)
from .semantics import (
    Interval,
    LassoWord,
    eval_finite,
    eval_interval,
    eval_lasso,
    horizon,
    word,
)

__version__ = "0.1.0"

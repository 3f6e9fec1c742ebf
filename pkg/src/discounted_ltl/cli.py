"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 invariant
violation, 4 state budget exceeded.  Errors are printed to stderr as a JSON
object ``{"error": kind, "message": ...}``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from typing import Optional, Sequence

from .formula import ANY, FormulaSyntaxError, formula_size, is_uniform, max_discount, parse, to_text
from .learning import MdpEnvironment, QHyper, evaluate_history_policy, pac_learn, rl_product
from .mdp import (
    MdpValidationError,
    load_mdp,
    policy_from_json,
    policy_to_json,
    policy_value,
    simulate,
    synthesize,
)
from .reward_machine import (
    DEFAULT_BUDGET,
    NonUniformFormula,
    StateBudgetExceeded,
    check_invariants,
    compile_formula,
    machine_from_json,
    machine_to_json,
    to_dot,
)
from .semantics import eval_interval, eval_lasso, lasso_from_json, word_from_json, word_to_json

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_INVARIANT, EXIT_BUDGET = range(5)


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _num(x: Fraction) -> dict:
    return {"exact": str(x), "decimal": f"{float(x):.12f}"}


def _dump(obj, out) -> None:
    out.write(json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=False) + "\n")


def _load_json(arg: str):
    """Inline JSON text, or the path of a JSON file."""
    try:
        if os.path.exists(arg):
            with open(arg, encoding="utf-8") as fh:
                return json.load(fh)
        return json.loads(arg)
    except json.JSONDecodeError as exc:
        raise CliError("validation", f"invalid JSON: {exc}", EXIT_VALIDATION) from None


def _write(path: Optional[str], text: str, out) -> None:
    if path is None or path == "-":
        out.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _formula(args):
    return parse(args.formula)


def _lam(args):
    return Fraction(args.lam) if getattr(args, "lam", None) else None


# ---------------------------------------------------------------------------
# Commands


def cmd_parse(args, out):
    f = _formula(args)
    u = is_uniform(f)
    try:
        lam_max = str(max_discount(f))
    except ValueError:
        lam_max = None
    _dump(
        {
            "formula": to_text(f),
            "ast": repr(f),
            "size": formula_size(f),
            "uniform": u is not None,
            "discount": None if u is None or u is ANY else str(u),
            "lambda_max": lam_max,
        },
        out,
    )


def cmd_eval(args, out):
    f = _formula(args)
    data = _load_json(args.word)
    try:
        if args.lasso:
            rho = lasso_from_json(data)
            iv = eval_lasso(f, rho, Fraction(args.tol))
        else:
            iv = eval_interval(f, word_from_json(data))
    except ValueError as exc:
        raise CliError("validation", str(exc), EXIT_VALIDATION) from None
    _dump({"interval": [str(iv.lo), str(iv.hi)], "lo": _num(iv.lo), "hi": _num(iv.hi)}, out)


def _compile(args):
    f = _formula(args)
    props = args.props.split(",") if getattr(args, "props", None) else None
    return f, compile_formula(f, _lam(args), props, args.budget, args.dedup)


def cmd_compile(args, out):
    f, m = _compile(args)
    text = json.dumps(machine_to_json(m), indent=2) + "\n"
    _write(args.output, text, out)
    if args.dot:
        _write(args.dot, to_dot(m), out)
    if args.output not in (None, "-"):
        _dump({"states": m.num_states, "lambda": str(m.lam), "output": args.output}, out)


def cmd_check(args, out):
    f = _formula(args)
    m = machine_from_json(_load_json(args.rm))
    report = check_invariants(m, f, args.trials, args.max_len, args.seed)
    _dump(
        {
            "ok": report.ok,
            "words_checked": report.words_checked,
            "violations": [
                {"invariant": v.invariant, "message": v.message, "witness": _witness(v.witness)}
                for v in report.violations
            ],
        },
        out,
    )
    if not report.ok:
        return EXIT_INVARIANT
    return EXIT_OK


def _witness(w):
    if isinstance(w, tuple) and w and all(isinstance(x, frozenset) for x in w):
        return word_to_json(w)
    return json.loads(json.dumps(w, default=str))


def _mdp(args):
    return load_mdp(_load_json(args.mdp))


def cmd_synthesize(args, out):
    f, m = _compile(args)
    mdp = _mdp(args)
    vf, policy = synthesize(mdp, m, args.tol)
    if args.output:
        _write(args.output, json.dumps(policy_to_json(policy), indent=2) + "\n", out)
    _dump(
        {
            "value": round(vf.initial, 12),
            "product_states": vf.product.num_states,
            "machine_states": m.num_states,
            "iterations": vf.iterations,
        },
        out,
    )


def cmd_learn(args, out):
    f = _formula(args)
    mdp = _mdp(args)
    env = MdpEnvironment(mdp, args.seed)
    if args.mode == "pac":
        policy, report = pac_learn(env, f, args.eps, args.conf, seed=args.seed, max_episodes=args.max_episodes)
        value = evaluate_history_policy(mdp, f, policy)
        first = policy.action((mdp.labels[mdp.initial],), mdp.initial)
    else:
        m = compile_formula(f, _lam(args), None, args.budget, args.dedup)
        hyper = QHyper(**_hyper_overrides(args))
        policy, report = rl_product(env, m, hyper, seed=args.seed)
        value = policy_value(mdp, m, policy)
        first = policy.action(m.initial, mdp.initial)
        if args.output:
            _write(args.output, json.dumps(policy_to_json(policy), indent=2) + "\n", out)
    result = {
        "mode": args.mode,
        "seed": args.seed,
        "episodes": report.episodes,
        "steps": report.steps,
        "budget_exhausted": report.budget_exhausted,
        "policy_value": round(value, 12),
        "initial_action": mdp.actions[first],
    }
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2, default=str)
    _dump(result, out)
    if report.budget_exhausted:
        return EXIT_BUDGET
    return EXIT_OK


def _hyper_overrides(args) -> dict:
    out = {}
    for name in ("episodes", "steps", "alpha", "epsilon", "epsilon_decay"):
        v = getattr(args, f"rl_{name}", None)
        if v is not None:
            out[name] = v
    return out


def cmd_simulate(args, out):
    mdp = _mdp(args)
    policy = policy_from_json(_load_json(args.policy))
    if policy.state_names and tuple(policy.state_names) != mdp.states:
        raise CliError("validation", "policy was synthesized for a different MDP", EXIT_VALIDATION)
    tr = simulate(mdp, policy, args.steps, args.seed)
    _dump(
        {
            "states": [mdp.states[s] for s in tr.states],
            "actions": [mdp.actions[a] for a in tr.actions],
            "word": word_to_json(tr.word),
        },
        out,
    )


def cmd_export_dot(args, out):
    m = machine_from_json(_load_json(args.rm))
    _write(args.output, to_dot(m), out)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dltl", description="Discounted LTL: evaluation, compilation, synthesis, learning.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def formula_arg(sp):
        sp.add_argument("-f", "--formula", required=True)

    def compile_args(sp):
        sp.add_argument("--lam", help="discount of the machine (defaults to the formula's)")
        sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)

    sp = sub.add_parser("parse", help="print the AST and discount information")
    formula_arg(sp)
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("eval", help="interval value on a finite or lasso word")
    formula_arg(sp)
    sp.add_argument("--word", required=True, help="JSON text or file")
    sp.add_argument("--lasso", action="store_true")
    sp.add_argument("--tol", default="1e-9")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("compile", help="compile to a reward machine (JSON)")
    formula_arg(sp)
    compile_args(sp)
    sp.add_argument("--props", help="comma-separated extra propositions")
    sp.add_argument("--dedup", action="store_true", help="prune dominated eventually elements")
    sp.add_argument("-o", "--output")
    sp.add_argument("--dot")
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("check", help="check invariants of a machine against a formula")
    formula_arg(sp)
    sp.add_argument("--rm", required=True)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--max-len", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("synthesize", help="optimal policy for a known MDP")
    formula_arg(sp)
    compile_args(sp)
    sp.add_argument("--mdp", required=True)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--no-dedup", dest="dedup", action="store_false")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("learn", help="learn a policy by interacting with a simulated MDP")
    formula_arg(sp)
    compile_args(sp)
    sp.add_argument("--mdp", required=True)
    sp.add_argument("--mode", choices=("pac", "rl"), default="pac")
    sp.add_argument("--eps", type=float, default=0.05)
    sp.add_argument("--conf", type=float, default=0.1, help="failure probability p")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-episodes", type=int, default=100_000)
    sp.add_argument("--no-dedup", dest="dedup", action="store_false")
    sp.add_argument("--rl-episodes", type=int)
    sp.add_argument("--rl-steps", type=int)
    sp.add_argument("--rl-alpha", type=float)
    sp.add_argument("--rl-epsilon", type=float)
    sp.add_argument("--rl-epsilon-decay", type=float)
    sp.add_argument("--report", help="write the learning report JSON here")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("simulate", help="sample a run of a synthesized policy")
    sp.add_argument("--mdp", required=True)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--steps", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("export-dot", help="render a machine JSON as Graphviz DOT")
    sp.add_argument("--rm", required=True)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_export_dot)
    return p


def run(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise CliError("usage", "a subcommand is required", EXIT_USAGE)
        code = args.func(args, out)
        return EXIT_OK if code is None else code
    except CliError as exc:
        kind, message, code = exc.kind, str(exc), exc.code
    except FormulaSyntaxError as exc:
        kind, message, code = "syntax", str(exc), EXIT_VALIDATION
    except NonUniformFormula as exc:
        kind, message, code = "non_uniform", str(exc), EXIT_VALIDATION
    except MdpValidationError as exc:
        kind, message, code = "mdp", str(exc), EXIT_VALIDATION
    except StateBudgetExceeded as exc:
        kind, message, code = "budget", str(exc), EXIT_BUDGET
    except (ValueError, KeyError, TypeError) as exc:
        kind, message, code = "validation", str(exc), EXIT_VALIDATION
    except OSError as exc:
        kind, message, code = "io", str(exc), EXIT_VALIDATION
    err.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Graphviz export in the ``guard, reward`` edge style."""
from __future__ import annotations

from collections import defaultdict

from .machine import RewardMachine


def _guard(props, letters: list[int]) -> str:
    # letters sharing an edge are summarized by the literals they all agree on
    if len(letters) == 1 << len(props):
        return "⊤"
    lits = []
    for j, p in enumerate(props):
        bits = {i >> j & 1 for i in letters}
        if bits == {1}:
            lits.append(p)
        elif bits == {0}:
            lits.append("¬" + p)
    if len(letters) == 1 << (len(props) - len(lits)):
        return " ∧ ".join(lits)
    return " ∨ ".join(_letter(props, i) for i in letters)


def _letter(props, i: int) -> str:
    parts = [p if i >> j & 1 else "¬" + p for j, p in enumerate(props)]
    return "(" + " ∧ ".join(parts) + ")" if len(parts) > 1 else parts[0]


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(m: RewardMachine, name: str = "rm") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=circle];", '  init [shape=point, label=""];']
    for q in range(m.num_states):
        lines.append(f"  s{q} [label={_quote(f's{q}')}, tooltip={_quote(m.describe(q))}];")
    lines.append(f"  init -> s{m.initial};")
    for q in range(m.num_states):
        groups: dict = defaultdict(list)
        for i in range(1 << len(m.props)):
            groups[(m.delta[q][i], m.reward[q][i])].append(i)
        for (q2, r), letters in sorted(groups.items(), key=lambda kv: kv[1][0]):
            label = f"{_guard(m.props, letters)}, {r}"
            lines.append(f"  s{q} -> s{q2} [label={_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"

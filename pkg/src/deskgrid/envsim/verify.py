"""Verifiers: deterministic goal predicates over EnvState.

A goal is a plain dict of subgoal clauses. Each registered verifier exposes
per-subgoal satisfaction so callers can compute partial credit, pending
markers for agent contexts, and the terminal accuracy in [0, 1].
"""

from __future__ import annotations

from .state import EnvState, parse_cell, cell_name, SHEET_ROWS
from ..errors import UnknownVerifier


def _label(value: str) -> str:
    return value.replace(" ", "_")


def _sort_key(value: str):
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def _column_sorted(state: EnvState, col_letter: str) -> bool:
    col, _ = parse_cell(col_letter + "1")
    values = []
    for row in range(SHEET_ROWS):
        v = state.sheet.get(cell_name(col, row))
        if v:
            values.append(v)
    if len(values) < 2:
        return False
    return values == sorted(values, key=_sort_key)


def computed_sum(state: EnvState, rng_spec: str) -> str:
    from .apis import _parse_range, _fmt_num
    cells = _parse_range(rng_spec) or []
    total = 0.0
    for name in cells:
        try:
            total += float(state.sheet.get(name))
        except ValueError:
            continue
    return _fmt_num(total)


def sheet_subgoals(goal: dict, state: EnvState) -> list[tuple[str, bool]]:
    subgoals = []
    literal_cells = goal.get("cells", {})
    for cell, expected in sorted(literal_cells.items()):
        ok = state.sheet.get(cell) == str(expected)
        subgoals.append((f"{cell.lower()}={_label(str(expected))}", ok))
    for hint in goal.get("sum_hints", []):
        # a hint whose dest has no literal expectation is verified by computation
        if hint["dest"].upper() in {c.upper() for c in literal_cells}:
            continue
        want = computed_sum(state, hint["range"])
        ok = state.sheet.get(hint["dest"]) == want
        subgoals.append(
            (f"sum={hint['range'].lower()}>{hint['dest'].lower()}", ok))
    for col in goal.get("sorted_columns", []):
        subgoals.append((f"sorted={col.lower()}", _column_sorted(state, col)))
    return subgoals


def files_subgoals(goal: dict, state: EnvState) -> list[tuple[str, bool]]:
    subgoals = []
    for d in goal.get("dirs", []):
        subgoals.append((f"dir={d}", d in state.files.dirs))
    for path, content in sorted(goal.get("files", {}).items()):
        if content is None:
            ok = path in state.files.files
            subgoals.append((f"file={path}", ok))
        else:
            ok = state.files.files.get(path) == content
            subgoals.append((f"file={path}={_label(content)}", ok))
    return subgoals


def editor_subgoals(goal: dict, state: EnvState) -> list[tuple[str, bool]]:
    text = state.editor.text
    subgoals = []
    for needle in goal.get("contains", []):
        subgoals.append((f"has={_label(needle)}", needle in text))
    if "equals" in goal:
        subgoals.append((f"equals={_label(goal['equals'])}", text == goal["equals"]))
    if "case" in goal:
        mode = goal["case"]
        want = text.lower() if mode == "lower" else text.upper()
        ok = len(text) > 0 and text == want
        subgoals.append((f"case={mode}", ok))
    return subgoals


_VERIFIERS = {
    "sheet.cells": sheet_subgoals,
    "files.tree": files_subgoals,
    "editor.text": editor_subgoals,
}


def verifier_ids() -> list[str]:
    return sorted(_VERIFIERS)


def subgoals(verifier_id: str, goal: dict, state: EnvState) -> list[tuple[str, bool]]:
    try:
        fn = _VERIFIERS[verifier_id]
    except KeyError:
        raise UnknownVerifier(verifier_id) from None
    return fn(goal, state)


def accuracy(verifier_id: str, goal: dict, state: EnvState) -> float:
    parts = subgoals(verifier_id, goal, state)
    if not parts:
        return 1.0
    return sum(1 for _, ok in parts if ok) / len(parts)


def goal_text(goal: dict) -> str:
    """Canonical one-line rendering of a goal, used in agent contexts."""
    pieces = []
    if goal.get("cells"):
        cells = " ".join(f"{c.lower()}={_label(str(v))}"
                         for c, v in sorted(goal["cells"].items()))
        pieces.append(f"cells {cells}")
    for hint in goal.get("sum_hints", []):
        pieces.append(f"sum {hint['range'].lower()}>{hint['dest'].lower()}")
    for col in goal.get("sorted_columns", []):
        pieces.append(f"sort {col.lower()}")
    if goal.get("dirs"):
        pieces.append("dirs " + " ".join(goal["dirs"]))
    if goal.get("files"):
        rendered = []
        for path, content in sorted(goal["files"].items()):
            rendered.append(path if content is None else f"{path}={_label(content)}")
        pieces.append("files " + " ".join(rendered))
    if goal.get("contains"):
        pieces.append("write " + " ".join(_label(n) for n in goal["contains"]))
    if "equals" in goal:
        pieces.append(f"equals {_label(goal['equals'])}")
    if "case" in goal:
        pieces.append(f"case {goal['case']}")
    return "; ".join(pieces)

"""The shipped task suite: five domains, verifiable goals, scripted solutions.

Every task is solvable two ways: a GUI-only action sequence and a strictly
shorter API sequence (at most ceil(gui/3) actions). Scripted solvers run
against a scratch environment, so the emitted plans are correct by
construction; tests replay both and compare verify outputs.
"""

from __future__ import annotations

from .actions import api_call, click, key, type_text
from .env import CELL_W, CELL_H, create_env
from .state import parse_cell
from .tasks import TaskSpec

DOMAINS = ("os", "office", "daily", "professional", "workflow")


def _sheet_task(tid, domain, cells=None, sums=None, sorted_cols=None,
                initial=None, slack=5):
    goal: dict = {}
    if cells:
        goal["cells"] = cells
    if sums:
        goal["sum_hints"] = sums
    if sorted_cols:
        goal["sorted_columns"] = sorted_cols
    return _finish(TaskSpec(tid, "sheet", goal, 0, "sheet.cells",
                            initial or {}, domain), slack)


def _files_task(tid, domain, dirs=None, files=None, initial=None, slack=5):
    goal: dict = {}
    if dirs:
        goal["dirs"] = dirs
    if files:
        goal["files"] = files
    return _finish(TaskSpec(tid, "files", goal, 0, "files.tree",
                            initial or {}, domain), slack)


def _editor_task(tid, domain, contains=None, equals=None, case=None,
                 initial=None, slack=5):
    goal: dict = {}
    if contains:
        goal["contains"] = contains
    if equals is not None:
        goal["equals"] = equals
    if case:
        goal["case"] = case
    return _finish(TaskSpec(tid, "editor", goal, 0, "editor.text",
                            initial or {}, domain), slack)


def _finish(task: TaskSpec, slack: int) -> TaskSpec:
    # max_steps budgets the GUI path plus DONE plus exploration slack
    probe = TaskSpec(task.task_id, task.app, task.goal, 99, task.verifier_id,
                     task.initial_state, task.domain)
    gui_len = len(solve_gui(probe))
    return TaskSpec(task.task_id, task.app, task.goal, gui_len + 1 + slack,
                    task.verifier_id, task.initial_state, task.domain)


def _ablation_tasks() -> list[TaskSpec]:
    t = []
    # --- os: directory trees and file contents ---
    t.append(_files_task("os-01", "os", dirs=["docs"]))
    t.append(_files_task("os-02", "os", dirs=["projects", "notes"]))
    t.append(_files_task("os-03", "os", files={"todo.txt": None}))
    t.append(_files_task("os-04", "os", files={"log.txt": "ready"}))
    t.append(_files_task("os-05", "os", dirs=["docs", "docs/img"]))
    t.append(_files_task("os-06", "os", dirs=["alpha", "beta", "gamma"]))
    t.append(_files_task("os-07", "os", files={"readme.md": "hello"}))
    t.append(_files_task("os-08", "os", dirs=["src"], files={"src/main.py": None}))
    t.append(_files_task("os-09", "os", files={"a.txt": "x", "b.txt": "y"}))
    t.append(_files_task("os-10", "os", dirs=["backup"],
                         files={"backup/data.txt": "42"}))
    # --- office: spreadsheet headers and labels ---
    t.append(_sheet_task("office-01", "office", cells={"A1": "Month", "B1": "Total"}))
    t.append(_sheet_task("office-02", "office", cells={"A1": "Name", "B1": "Score"}))
    t.append(_sheet_task("office-03", "office",
                         cells={"A1": "Item", "B1": "Price", "C1": "Qty"}))
    t.append(_sheet_task("office-04", "office",
                         cells={"A2": "Jan", "A3": "Feb", "A4": "Mar"}))
    t.append(_sheet_task("office-05", "office", cells={"A1": "Region", "B1": "Sales"}))
    t.append(_sheet_task("office-06", "office", cells={"B2": "Alpha", "C3": "Beta"}))
    t.append(_sheet_task("office-07", "office",
                         cells={"A1": "Task", "B1": "Owner", "C1": "Due"}))
    t.append(_sheet_task("office-08", "office",
                         cells={"A1": "Q1", "B1": "Q2", "C1": "Q3", "D1": "Q4"}))
    t.append(_sheet_task("office-09", "office", cells={"A5": "North", "B5": "South"}))
    t.append(_sheet_task("office-10", "office",
                         cells={"A1": "Date", "B1": "Open", "C1": "Close"}))
    # --- daily: notes and formatting in the editor ---
    t.append(_editor_task("daily-01", "daily", contains=["hello"]))
    t.append(_editor_task("daily-02", "daily", equals="meeting at noon"))
    t.append(_editor_task("daily-03", "daily", case="lower",
                          initial={"text": "REPORT DRAFT"}))
    t.append(_editor_task("daily-04", "daily", contains=["alpha", "beta"]))
    t.append(_editor_task("daily-05", "daily", contains=["standup 9am"]))
    t.append(_editor_task("daily-06", "daily", case="upper",
                          initial={"text": "quiet hours"}))
    t.append(_editor_task("daily-07", "daily", equals="done"))
    t.append(_editor_task("daily-08", "daily",
                          contains=["groceries", "milk", "eggs"]))
    t.append(_editor_task("daily-09", "daily", contains=["ship v2"], case="lower"))
    t.append(_editor_task("daily-10", "daily", equals="backup complete"))
    # --- professional: computed cells and ordering ---
    t.append(_sheet_task("pro-01", "professional", cells={"A4": "8"},
                         sums=[{"range": "A1:A2", "dest": "A4"}],
                         initial={"cells": {"A1": "3", "A2": "5"}}))
    # computed-sum goals: the answer never appears in the goal text
    t.append(_sheet_task("pro-02", "professional",
                         sums=[{"range": "B1:B3", "dest": "B5"}],
                         initial={"cells": {"B1": "10", "B2": "20", "B3": "30"}}))
    t.append(_sheet_task("pro-03", "professional", sorted_cols=["A"],
                         initial={"cells": {"A1": "5", "A2": "7", "A3": "2"}}))
    t.append(_sheet_task("pro-04", "professional", sorted_cols=["C"],
                         initial={"cells": {"C1": "zeta", "C2": "alpha", "C3": "mid"}}))
    t.append(_sheet_task("pro-05", "professional",
                         sums=[{"range": "A1:A2", "dest": "A3"}],
                         initial={"cells": {"A1": "1.5", "A2": "2.5"}}))
    t.append(_sheet_task("pro-06", "professional", sorted_cols=["B"],
                         initial={"cells": {"B1": "9", "B2": "3", "B3": "7"}}))
    t.append(_sheet_task("pro-07", "professional",
                         sums=[{"range": "D1:D2", "dest": "D4"}],
                         initial={"cells": {"D1": "100", "D2": "250"}}))
    t.append(_sheet_task("pro-08", "professional", cells={"A1": "sorted"},
                         sorted_cols=["B"],
                         initial={"cells": {"B1": "4", "B2": "1", "B3": "3"}}))
    t.append(_sheet_task("pro-09", "professional",
                         sums=[{"range": "A1:A3", "dest": "A4"},
                               {"range": "B1:B3", "dest": "B4"}],
                         initial={"cells": {"A1": "1", "A2": "2", "A3": "3",
                                            "B1": "4", "B2": "5", "B3": "6"}}))
    t.append(_sheet_task("pro-10", "professional",
                         sums=[{"range": "B1:B2", "dest": "B5"}],
                         sorted_cols=["A"],
                         initial={"cells": {"A1": "c", "A2": "a", "A3": "b",
                                            "B1": "5", "B2": "7"}}))
    # --- workflow: longer compositional jobs ---
    t.append(_sheet_task("flow-01", "workflow",
                         cells={"A1": "Month", "B1": "Total", "A2": "Jan", "A3": "Feb"}))
    t.append(_files_task("flow-02", "workflow", dirs=["work", "work/reports"],
                         files={"work/reports/q1.txt": "draft"}))
    t.append(_sheet_task("flow-03", "workflow", cells={"A1": "Sales"},
                         sums=[{"range": "A2:A4", "dest": "A5"}],
                         initial={"cells": {"A2": "5", "A3": "10", "A4": "15"}}))
    t.append(_editor_task("flow-04", "workflow", equals="PROJECT X\nREADY"))
    t.append(_files_task("flow-05", "workflow", dirs=["inbox", "archive"],
                         files={"inbox/note.txt": None}))
    t.append(_sheet_task("flow-06", "workflow",
                         cells={"A1": "id", "B1": "name", "C1": "role",
                                "D1": "team", "E1": "site"}))
    t.append(_sheet_task("flow-07", "workflow",
                         cells={"A1": "Data", "B1": "Rate"},
                         sums=[{"range": "D1:D2", "dest": "D5"}],
                         sorted_cols=["C"],
                         initial={"cells": {"C1": "w2", "C2": "w1", "C3": "w3",
                                            "D1": "40", "D2": "2"}}))
    t.append(_files_task("flow-08", "workflow",
                         files={"a/1.txt": "x", "b/2.txt": "y"}))
    t.append(_editor_task("flow-09", "workflow", equals="status: green\nnext: ship"))
    t.append(_sheet_task("flow-10", "workflow",
                         cells={"A1": "W", "B1": "X", "A2": "Y", "B2": "Z"},
                         sums=[{"range": "C1:C3", "dest": "D1"}],
                         initial={"cells": {"C1": "9", "C2": "2", "C3": "5"}}))
    return t


_SMOKE_IDS = ("os-01", "os-02", "office-01", "office-02", "daily-01",
              "daily-02", "pro-01", "pro-03", "flow-01", "flow-02")


def task_suite(profile: str) -> list[TaskSpec]:
    tasks = _ablation_tasks()
    if profile == "ablation":
        return tasks
    if profile == "smoke":
        by_id = {t.task_id: t for t in tasks}
        return [by_id[tid] for tid in _SMOKE_IDS]
    raise ValueError(f"unknown suite profile {profile!r}")


# --- scripted solvers (content actions only; runners append DONE) ---

def solve_api(task: TaskSpec) -> list[str]:
    goal = task.goal
    plan: list[str] = []
    if task.app == "sheet":
        literal = dict(sorted(goal.get("cells", {}).items()))
        hidden = [h for h in goal.get("sum_hints", [])
                  if h["dest"].upper() not in {c.upper() for c in literal}]
        if len(literal) > 1:
            plan.append(api_call("sheet.set_cells",
                                 **{c.lower(): str(v) for c, v in literal.items()}).raw_text)
        elif literal:
            (c, v), = literal.items()
            plan.append(api_call("sheet.set_cell", cell=c, value=v).raw_text)
        for hint in hidden:
            plan.append(api_call("sheet.sum_range",
                                 range=hint["range"], dest=hint["dest"]).raw_text)
        for col in goal.get("sorted_columns", []):
            plan.append(api_call("sheet.sort_column", col=col).raw_text)
    elif task.app == "files":
        files = sorted(goal.get("files", {}).items())
        file_prefixes = set()
        for path, _ in files:
            parts = path.split("/")
            for i in range(1, len(parts)):
                file_prefixes.add("/".join(parts[:i]))
        remaining = [d for d in goal.get("dirs", []) if d not in file_prefixes]
        if len(remaining) > 1:
            plan.append(api_call("files.mkdirs", paths=";".join(remaining)).raw_text)
        elif remaining:
            plan.append(api_call("files.mkdir", path=remaining[0]).raw_text)
        for path, content in files:
            if content is None:
                plan.append(api_call("files.touch", path=path).raw_text)
            else:
                plan.append(api_call("files.write", path=path, text=content).raw_text)
    else:
        equals = goal.get("equals")
        if equals is not None and "\n" in equals:
            for line in equals.split("\n"):
                plan.append(api_call("editor.append_line", text=line).raw_text)
        elif equals is not None:
            plan.append(api_call("editor.insert", text=equals).raw_text)
        elif goal.get("contains"):
            plan.append(api_call("editor.insert",
                                 text=" ".join(goal["contains"])).raw_text)
        if "case" in goal:
            text_now = goal.get("equals") or " ".join(goal.get("contains", []))
            wanted = text_now.lower() if goal["case"] == "lower" else text_now.upper()
            if text_now != wanted or not text_now:
                plan.append(api_call("editor.set_case", mode=goal["case"]).raw_text)
    return plan


def solve_gui(task: TaskSpec) -> list[str]:
    """Plan a GUI-only solution by acting against a scratch environment."""
    env = create_env(task, 0)
    plan: list[str] = []

    def emit(action) -> None:
        raw = action if isinstance(action, str) else action.raw_text
        outcome = env.step(raw)
        if not outcome.accepted:
            raise RuntimeError(f"gui planner emitted rejected action {raw!r} "
                               f"for {task.task_id}")
        plan.append(raw)

    goal = task.goal
    if task.app == "sheet":
        from . import verify as verify_mod
        for cell, value in sorted(goal.get("cells", {}).items()):
            loc = parse_cell(cell)
            emit(click(loc[0] * CELL_W, loc[1] * CELL_H))
            emit(type_text(str(value)))
        literal = {c.upper() for c in goal.get("cells", {})}
        for hint in goal.get("sum_hints", []):
            if hint["dest"].upper() in literal:
                continue
            loc = parse_cell(hint["dest"])
            emit(click(loc[0] * CELL_W, loc[1] * CELL_H))
            emit(type_text(verify_mod.computed_sum(env.state, hint["range"])))
        for col in goal.get("sorted_columns", []):
            loc = parse_cell(col + "1")
            emit(click(loc[0] * CELL_W, 0))
            emit(key("ctrl+shift+s"))
    elif task.app == "files":
        def to_root():
            while env.state.files.cwd:
                emit(key("backspace"))

        def descend(path: str) -> None:
            for comp in path.split("/"):
                if env.state.focus != f"entry:{comp}":
                    idx = env.state.files.listing().index(comp)
                    emit(click(0, idx * CELL_H))
                emit(key("enter"))

        dirs = sorted(goal.get("dirs", []), key=lambda d: (d.count("/"), d))
        for d in dirs:
            if d in env.state.files.dirs:
                continue
            parent, leaf = "/".join(d.split("/")[:-1]), d.split("/")[-1]
            to_root()
            if parent:
                descend(parent)
            emit(key("ctrl+n"))
            emit(type_text(leaf))
        for path, content in sorted(goal.get("files", {}).items()):
            parent, leaf = "/".join(path.split("/")[:-1]), path.split("/")[-1]
            to_root()
            if parent:
                if parent not in env.state.files.dirs:
                    # build missing parents with the same dir flow
                    parts = parent.split("/")
                    for i in range(1, len(parts) + 1):
                        prefix = "/".join(parts[:i])
                        if prefix not in env.state.files.dirs:
                            up = "/".join(parts[:i - 1])
                            to_root()
                            if up:
                                descend(up)
                            emit(key("ctrl+n"))
                            emit(type_text(parts[i - 1]))
                    to_root()
                descend(parent)
            emit(key("ctrl+t"))
            emit(type_text(leaf))
            if content is not None:
                emit(key("enter"))
                emit(type_text(content))
                emit(key("escape"))
    else:
        emit(click(0, 0))
        equals = goal.get("equals")
        if equals is not None:
            lines = equals.split("\n")
            emit(type_text(lines[0]))
            for line in lines[1:]:
                emit(key("enter"))
                emit(type_text(line))
        elif goal.get("contains"):
            emit(type_text(" ".join(goal["contains"])))
        if "case" in goal and env.verify() < 1.0:
            emit(key("ctrl+a"))
            emit(key("ctrl+l" if goal["case"] == "lower" else "ctrl+u"))

    if env.verify() < 1.0:
        raise RuntimeError(f"gui plan leaves {task.task_id} unsolved")
    return plan

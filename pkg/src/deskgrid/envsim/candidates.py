"""Agent-side context construction and candidate-action enumeration.

Both operate purely on (task, observation text): the rollout side never
touches a live environment object, so the same code runs against local
and remote sessions. Candidate order is deterministic - GUI primitives,
then API calls, then DONE - and capped at MAX_CANDIDATES.
"""

from __future__ import annotations

from . import verify
from .actions import api_call, click, done, key, scroll, type_text
from .env import CELL_W, CELL_H
from .state import parse_cell, parse_observation
from .tasks import TaskSpec

MAX_CANDIDATES = 64
_MAX_DECOYS = 6


def _range_values(state, rng_spec: str) -> list[str]:
    from .apis import _parse_range
    values = []
    for name in _parse_range(rng_spec) or []:
        v = state.sheet.get(name)
        if v and v not in values:
            values.append(v)
    return values


def build_context(task: TaskSpec, obs_text: str, last_action: str = "") -> str:
    """Serialize what the agent knows at this step into one canonical line."""
    state = parse_observation(obs_text)
    parts = verify.subgoals(task.verifier_id, task.goal, state)
    pending = [label for label, ok in parts if not ok]
    solved = [label for label, ok in parts if ok]
    segs = [
        f"task:{task.task_id}",
        f"app:{task.app}",
        f"goal:{task.goal_text()}",
        "pending:" + (" ".join(pending) if pending else "none"),
        "solved:" + (" ".join(solved) if solved else "none"),
        f"focus:{state.focus or 'none'}",
    ]
    if task.app == "files":
        segs.append(f"cwd:/{state.files.cwd}")
        segs.append("list:" + (",".join(state.files.listing()) or "none"))
        if state.files.naming:
            segs.append("naming:1")
        if state.files.open_file:
            segs.append(f"open:{state.files.open_file}")
    if task.app == "editor":
        segs.append(f"cursor:{state.editor.cursor}")
        if state.editor.selected_all:
            segs.append("sel:1")
    segs.append(f"last:{last_action or 'none'}")
    segs.append(f"step:{state.step_count}")
    return " | ".join(segs)


def context_segments(context: str) -> dict[str, str]:
    out = {}
    for seg in context.split(" | "):
        if ":" in seg:
            name, value = seg.split(":", 1)
            out[name] = value
    return out


def enumerate_candidates(task: TaskSpec, obs_text: str,
                         include_api: bool = True) -> list[str]:
    state = parse_observation(obs_text)
    goal = task.goal
    gui: list[str] = []
    apis: list[str] = []

    if task.app == "sheet":
        cells = sorted(goal.get("cells", {}).items())
        literal_names = {name.upper() for name, _ in cells}
        hidden_hints = [h for h in goal.get("sum_hints", [])
                        if h["dest"].upper() not in literal_names]
        for name, value in cells:
            loc = parse_cell(name)
            if loc:
                gui.append(click(loc[0] * CELL_W, loc[1] * CELL_H).raw_text)
        for _, value in cells:
            gui.append(type_text(str(value)).raw_text)
        for hint in hidden_hints:
            loc = parse_cell(hint["dest"])
            if loc:
                gui.append(click(loc[0] * CELL_W, loc[1] * CELL_H).raw_text)
            gui.append(type_text(verify.computed_sum(state, hint["range"])).raw_text)
            for v in _range_values(state, hint["range"])[:3]:
                gui.append(type_text(v).raw_text)
        gui.append(key("enter").raw_text)
        if goal.get("sorted_columns"):
            for col in goal["sorted_columns"]:
                loc = parse_cell(col + "1")
                if loc:
                    gui.append(click(loc[0] * CELL_W, 0).raw_text)
            gui.append(key("ctrl+shift+s").raw_text)
        if include_api:
            for name, value in cells:
                apis.append(api_call("sheet.set_cell", cell=name, value=value).raw_text)
            if len(cells) > 1:
                bulk = {name.lower(): str(v) for name, v in cells}
                apis.append(api_call("sheet.set_cells", **bulk).raw_text)
            decoys = 0
            for name, _ in cells:
                for other, value in cells:
                    if other != name and decoys < _MAX_DECOYS:
                        apis.append(api_call("sheet.set_cell", cell=name, value=value).raw_text)
                        decoys += 1
            for hint in goal.get("sum_hints", []):
                apis.append(api_call("sheet.sum_range",
                                     range=hint["range"], dest=hint["dest"]).raw_text)
            for hint in hidden_hints:
                for v in _range_values(state, hint["range"])[:3]:
                    apis.append(api_call("sheet.set_cell",
                                         cell=hint["dest"], value=v).raw_text)
            for col in goal.get("sorted_columns", []):
                apis.append(api_call("sheet.sort_column", col=col).raw_text)

    elif task.app == "files":
        dirs = list(goal.get("dirs", []))
        files = sorted(goal.get("files", {}).items())
        leafs: list[str] = []
        for path in dirs + [p for p, _ in files]:
            for comp in path.split("/"):
                if comp not in leafs:
                    leafs.append(comp)
        listing = state.files.listing()
        for i in range(min(len(listing), 4)):
            gui.append(click(0, i * CELL_H).raw_text)
        for combo in ("ctrl+n", "ctrl+t", "enter", "escape", "backspace"):
            gui.append(key(combo).raw_text)
        seen = set()
        for name in leafs:
            if name not in seen:
                seen.add(name)
                gui.append(type_text(name).raw_text)
        for _, content in files:
            if content and content not in seen:
                seen.add(content)
                gui.append(type_text(content).raw_text)
        if include_api:
            for d in dirs:
                apis.append(api_call("files.mkdir", path=d).raw_text)
            if len(dirs) > 1:
                apis.append(api_call("files.mkdirs", paths=";".join(dirs)).raw_text)
            for path, content in files:
                if content is None:
                    apis.append(api_call("files.touch", path=path).raw_text)
                else:
                    apis.append(api_call("files.write", path=path, text=content).raw_text)
            if files:
                apis.append(api_call("files.delete", path=files[0][0]).raw_text)

    else:  # editor
        gui.append(click(0, 0).raw_text)
        needles = list(goal.get("contains", []))
        if len(needles) > 1:
            needles.append(" ".join(goal["contains"]))
        equals = goal.get("equals")
        if equals is not None:
            needles.extend(equals.split("\n"))
        for needle in needles:
            gui.append(type_text(needle).raw_text)
        if "case" in goal or equals is not None or needles:
            gui.append(key("enter").raw_text)
        if "case" in goal:
            gui.append(key("ctrl+a").raw_text)
            gui.append(key("ctrl+l").raw_text)
            gui.append(key("ctrl+u").raw_text)
        if include_api:
            for needle in needles:
                apis.append(api_call("editor.insert", text=needle).raw_text)
                apis.append(api_call("editor.append_line", text=needle).raw_text)
            if "case" in goal:
                apis.append(api_call("editor.set_case", mode="lower").raw_text)
                apis.append(api_call("editor.set_case", mode="upper").raw_text)

    gui.append(scroll(1).raw_text)
    gui.append(scroll(-1).raw_text)

    out: list[str] = []
    seen: set[str] = set()
    for raw in gui + apis:
        if raw not in seen:
            seen.add(raw)
            out.append(raw)
    # DONE is always available, even when the cap truncates the tail
    return out[:MAX_CANDIDATES - 1] + [done().raw_text]

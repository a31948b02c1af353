"""The simulated desktop environment: one app instance driven by hybrid actions.

A handle is single-threaded; one in-flight step at a time. Identical
(task, seed) pairs produce bit-identical observations, and the whole step
function is a pure transition on the serialized state.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import verify
from .actions import Action, parse_action
from .apis import PRIMITIVES, ApiDescriptor, app_apis, default_registry
from .state import (EnvState, build_state, serialize_observation, parse_cell,
                    cell_name, SHEET_COLS, SHEET_ROWS)
from .tasks import TaskSpec
from ..errors import EpisodeFinished

# click-grid geometry: 32x24 cells mapped onto app widgets
CELL_W = 4   # grid columns per sheet column
CELL_H = 3   # grid rows per sheet row / per list row


@dataclass(frozen=True)
class StepOutcome:
    observation: str
    done: bool
    accepted: bool
    malformed: bool
    changed: bool = False   # accepted AND the action was not a no-op


def click_target_sheet(col: int, row: int) -> str | None:
    c, r = col // CELL_W, row // CELL_H
    if c < SHEET_COLS and r < SHEET_ROWS:
        return cell_name(c, r)
    return None


def click_row_index(row: int) -> int:
    return row // CELL_H


class DesktopEnv:
    def __init__(self, task: TaskSpec, seed: int,
                 extra_apis: dict[str, ApiDescriptor] | None = None):
        task.validate()
        self.task = task
        self.seed = seed
        self.registry = default_registry()
        if extra_apis:
            self.registry.update(extra_apis)
        self.api_log: list = []
        self.state = build_state(task.app, task.initial_state)
        self.done = False

    # --- views ---

    def api_names(self) -> list[str]:
        return app_apis(self.registry, self.task.app)

    def observation(self) -> str:
        return serialize_observation(self.state, self.api_names(), self.task.max_steps)

    def verify(self) -> float:
        return verify.accuracy(self.task.verifier_id, self.task.goal, self.state)

    def subgoals(self) -> list[tuple[str, bool]]:
        return verify.subgoals(self.task.verifier_id, self.task.goal, self.state)

    def reset(self) -> str:
        self.state = build_state(self.task.app, self.task.initial_state)
        self.done = False
        self.api_log.clear()
        return self.observation()

    # --- transition ---

    def step(self, action: Action | str) -> StepOutcome:
        if self.done:
            raise EpisodeFinished(self.task.task_id)
        if isinstance(action, str):
            action = parse_action(action)

        accepted = False
        changed = False
        if action.kind == "malformed":
            accepted = False
        elif action.kind == "done":
            accepted = True
            changed = True  # terminating the episode is a real transition
            self.done = True
        else:
            before = self.state.signature()
            if action.kind == "api":
                accepted = self._apply_api(action)
            else:
                accepted = self._apply_gui(action)
            changed = accepted and self.state.signature() != before

        self.state.step_count += 1
        if self.state.step_count >= self.task.max_steps:
            self.done = True
        return StepOutcome(
            observation=self.observation(),
            done=self.done,
            accepted=accepted,
            malformed=(action.kind == "malformed"),
            changed=changed,
        )

    def _apply_api(self, action: Action) -> bool:
        desc = self.registry.get(action.api_name)
        if desc is None or not action.api_name.startswith(self.task.app + "."):
            return False
        ok, _ = desc.execute(self.state, action.arg_map(), log=self.api_log)
        return ok

    def _apply_gui(self, action: Action) -> bool:
        app = self.task.app
        if app == "sheet":
            return self._gui_sheet(action)
        if app == "files":
            return self._gui_files(action)
        return self._gui_editor(action)

    def _gui_sheet(self, action: Action) -> bool:
        st = self.state
        if action.kind == "click":
            target = click_target_sheet(action.col, action.row)
            if target is None:
                return False
            st.focus = f"cell:{target}"
            return True
        if not st.focus.startswith("cell:"):
            return False
        cell = st.focus[5:]
        if action.kind == "type":
            st.sheet.set(cell, action.text)
            return True
        if action.kind == "key":
            if action.text == "enter":
                loc = parse_cell(cell)
                if loc and loc[1] + 1 < SHEET_ROWS:
                    st.focus = f"cell:{cell_name(loc[0], loc[1] + 1)}"
                return True
            if action.text == "ctrl+shift+s":
                ok, _ = PRIMITIVES["sort_column"](st, {"col": cell[0]})
                return ok
            return False
        if action.kind == "scroll":
            loc = parse_cell(cell)
            if loc is None:
                return False
            row = max(0, min(SHEET_ROWS - 1, loc[1] + action.row))
            st.focus = f"cell:{cell_name(loc[0], row)}"
            return True
        return False

    def _gui_files(self, action: Action) -> bool:
        st = self.state
        fs = st.files
        if action.kind == "click":
            listing = fs.listing()
            idx = click_row_index(action.row)
            if idx >= len(listing):
                return False
            st.focus = f"entry:{listing[idx]}"
            fs.naming = False
            return True
        if action.kind == "scroll":
            listing = fs.listing()
            if not listing:
                return False
            cur = 0
            if st.focus.startswith("entry:") and st.focus[6:] in listing:
                cur = listing.index(st.focus[6:])
            idx = max(0, min(len(listing) - 1, cur + action.row))
            st.focus = f"entry:{listing[idx]}"
            fs.naming = False
            return True
        if action.kind == "key":
            combo = action.text
            if combo == "ctrl+n":
                if "untitled" in fs.listing():
                    return False
                fs.dirs.add(fs.join("untitled"))
                st.focus = "entry:untitled"
                fs.naming = True
                return True
            if combo == "ctrl+t":
                if "untitled.txt" in fs.listing():
                    return False
                fs.files[fs.join("untitled.txt")] = ""
                st.focus = "entry:untitled.txt"
                fs.naming = True
                return True
            if combo == "enter":
                if not st.focus.startswith("entry:"):
                    return False
                path = fs.join(st.focus[6:])
                if path in fs.dirs:
                    fs.cwd = path
                    st.focus = ""
                    fs.naming = False
                    return True
                if path in fs.files:
                    fs.open_file = path
                    st.focus = "content"
                    return True
                return False
            if combo == "escape":
                if fs.open_file:
                    fs.open_file = ""
                    st.focus = ""
                    return True
                if fs.naming:
                    fs.naming = False
                    return True
                return False
            if combo == "backspace":
                if not fs.cwd:
                    return False
                fs.cwd = "/".join(fs.cwd.split("/")[:-1])
                st.focus = ""
                return True
            return False
        if action.kind == "type":
            if fs.open_file:
                fs.files[fs.open_file] = action.text
                return True
            if fs.naming and st.focus.startswith("entry:"):
                new_name = action.text
                if not new_name or "/" in new_name:
                    return False
                old = fs.join(st.focus[6:])
                new = fs.join(new_name)
                if new in fs.dirs or new in fs.files:
                    return False
                if old in fs.dirs:
                    fs.dirs.discard(old)
                    fs.dirs.add(new)
                elif old in fs.files:
                    fs.files[new] = fs.files.pop(old)
                else:
                    return False
                st.focus = f"entry:{new_name}"
                fs.naming = False
                return True
            return False
        return False

    def _gui_editor(self, action: Action) -> bool:
        st = self.state
        ed = st.editor
        if action.kind == "click":
            lines = ed.text.split("\n")
            line = min(click_row_index(action.row), len(lines) - 1)
            col = min(action.col, len(lines[line]))
            ed.cursor = sum(len(l) + 1 for l in lines[:line]) + col
            ed.clamp()
            ed.selected_all = False
            st.focus = "buffer"
            return True
        if st.focus != "buffer":
            return False
        if action.kind == "type":
            ed.clamp()
            ed.text = ed.text[:ed.cursor] + action.text + ed.text[ed.cursor:]
            ed.cursor += len(action.text)
            ed.selected_all = False
            return True
        if action.kind == "key":
            combo = action.text
            if combo == "enter":
                ed.text = ed.text[:ed.cursor] + "\n" + ed.text[ed.cursor:]
                ed.cursor += 1
                return True
            if combo == "ctrl+a":
                if not ed.text:
                    return False
                ed.selected_all = True
                return True
            if combo in ("ctrl+l", "ctrl+u"):
                if not ed.selected_all or not ed.text:
                    return False
                ed.text = ed.text.lower() if combo == "ctrl+l" else ed.text.upper()
                ed.selected_all = False
                return True
            if combo == "end":
                ed.cursor = len(ed.text)
                return True
            return False
        if action.kind == "scroll":
            lines = ed.text.split("\n")
            at = ed.text[:ed.cursor].count("\n")
            line = max(0, min(len(lines) - 1, at + action.row))
            ed.cursor = sum(len(l) + 1 for l in lines[:line])
            return True
        return False


def create_env(task: TaskSpec, seed: int,
               extra_apis: dict[str, ApiDescriptor] | None = None) -> DesktopEnv:
    return DesktopEnv(task, seed, extra_apis=extra_apis)

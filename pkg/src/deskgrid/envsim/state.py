"""Mutable app state for the three simulated desktop apps.

Each app keeps a small, fully serializable store:

  sheet  - 8x8 grid of string cells (A1..H8)
  files  - directory tree with file contents and a cwd for GUI navigation
  editor - flat text buffer with a cursor and a select-all flag

``serialize_observation`` renders the canonical textual view an agent sees;
it is complete, so ``parse_observation`` can reconstruct the state without
touching the live environment.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

SHEET_COLS = 8
SHEET_ROWS = 8

_COL_LETTERS = "ABCDEFGH"


def cell_name(col: int, row: int) -> str:
    return f"{_COL_LETTERS[col]}{row + 1}"


def parse_cell(name: str) -> tuple[int, int] | None:
    name = name.strip().upper()
    if len(name) < 2 or name[0] not in _COL_LETTERS:
        return None
    try:
        row = int(name[1:]) - 1
    except ValueError:
        return None
    col = _COL_LETTERS.index(name[0])
    if not (0 <= row < SHEET_ROWS):
        return None
    return col, row


@dataclass
class SheetStore:
    cells: dict = field(default_factory=dict)  # "A1" -> str

    def get(self, name: str) -> str:
        return self.cells.get(name.upper(), "")

    def set(self, name: str, value: str) -> None:
        name = name.upper()
        if value == "":
            self.cells.pop(name, None)
        else:
            self.cells[name] = value


@dataclass
class FilesStore:
    dirs: set = field(default_factory=set)    # "docs", "docs/img"
    files: dict = field(default_factory=dict)  # "docs/a.txt" -> content
    cwd: str = ""                              # "" is the root
    naming: bool = False                       # freshly created entry awaits rename
    open_file: str = ""                        # path opened for content editing

    def listing(self) -> list[str]:
        """Child entry names of cwd, dirs first, each group sorted."""
        prefix = self.cwd + "/" if self.cwd else ""
        depth = prefix.count("/")
        ds = sorted(d[len(prefix):] for d in self.dirs
                    if d.startswith(prefix) and d.count("/") == depth)
        fs = sorted(f[len(prefix):] for f in self.files
                    if f.startswith(prefix) and f.count("/") == depth)
        return ds + fs

    def join(self, name: str) -> str:
        return f"{self.cwd}/{name}" if self.cwd else name


@dataclass
class EditorStore:
    text: str = ""
    cursor: int = 0
    selected_all: bool = False

    def clamp(self) -> None:
        self.cursor = max(0, min(self.cursor, len(self.text)))


@dataclass
class EnvState:
    app: str
    sheet: SheetStore = field(default_factory=SheetStore)
    files: FilesStore = field(default_factory=FilesStore)
    editor: EditorStore = field(default_factory=EditorStore)
    focus: str = ""
    step_count: int = 0

    def clone(self) -> "EnvState":
        return copy.deepcopy(self)

    def signature(self) -> str:
        """Serialized state minus the step counter; no-op detection key."""
        doc = json.loads(self.to_json())
        del doc["step_count"]
        return json.dumps(doc, sort_keys=True)

    def to_json(self) -> str:
        doc = {
            "app": self.app,
            "focus": self.focus,
            "step_count": self.step_count,
            "sheet": dict(sorted(self.sheet.cells.items())),
            "files": {
                "dirs": sorted(self.files.dirs),
                "files": dict(sorted(self.files.files.items())),
                "cwd": self.files.cwd,
                "naming": self.files.naming,
                "open_file": self.files.open_file,
            },
            "editor": {
                "text": self.editor.text,
                "cursor": self.editor.cursor,
                "selected_all": self.editor.selected_all,
            },
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "EnvState":
        doc = json.loads(blob)
        state = cls(app=doc["app"], focus=doc["focus"], step_count=doc["step_count"])
        state.sheet.cells = dict(doc["sheet"])
        state.files.dirs = set(doc["files"]["dirs"])
        state.files.files = dict(doc["files"]["files"])
        state.files.cwd = doc["files"]["cwd"]
        state.files.naming = doc["files"]["naming"]
        state.files.open_file = doc["files"]["open_file"]
        state.editor.text = doc["editor"]["text"]
        state.editor.cursor = doc["editor"]["cursor"]
        state.editor.selected_all = doc["editor"]["selected_all"]
        return state


def build_state(app: str, initial: dict | None) -> EnvState:
    """Construct the initial EnvState from a task's initial-state descriptor."""
    state = EnvState(app=app)
    initial = initial or {}
    for name, value in initial.get("cells", {}).items():
        state.sheet.set(name, str(value))
    for d in initial.get("dirs", []):
        _add_dir(state.files, d)
    for path, content in initial.get("files", {}).items():
        _add_dir(state.files, "/".join(path.split("/")[:-1]))
        state.files.files[path] = content
    if "text" in initial:
        state.editor.text = initial["text"]
        state.editor.clamp()
    return state


def _add_dir(store: FilesStore, path: str) -> None:
    parts = [p for p in path.split("/") if p]
    for i in range(1, len(parts) + 1):
        store.dirs.add("/".join(parts[:i]))


_ESC = {"\n": "\\n", "\\": "\\\\", "|": "\\p"}
_UNESC = {"\\n": "\n", "\\\\": "\\", "\\p": "|"}


def _esc(s: str) -> str:
    out = []
    for ch in s:
        out.append(_ESC.get(ch, ch))
    return "".join(out)


def _unesc(s: str) -> str:
    out = []
    i = 0
    while i < len(s):
        if s[i] == "\\" and i + 1 < len(s):
            out.append(_UNESC.get(s[i:i + 2], s[i + 1]))
            i += 2
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def serialize_observation(state: EnvState, api_names: list[str], max_steps: int) -> str:
    """Canonical, deterministic text listing of the app state.

    Stable line order; serializing the same state twice yields identical bytes.
    """
    lines = [f"app:{state.app} focus:{state.focus or 'none'} step:{state.step_count}/{max_steps}"]
    if state.app == "sheet":
        if state.sheet.cells:
            lines.append(f"grid {SHEET_COLS}x{SHEET_ROWS}")
            for name in sorted(state.sheet.cells):
                lines.append(f"{name}={_esc(state.sheet.cells[name])}")
        else:
            lines.append(f"grid {SHEET_COLS}x{SHEET_ROWS} empty")
    elif state.app == "files":
        lines.append(f"cwd:/{state.files.cwd}")
        for d in sorted(state.files.dirs):
            lines.append(f"dir {d}")
        for path in sorted(state.files.files):
            lines.append(f"file {path}={_esc(state.files.files[path])}")
        if state.files.naming:
            lines.append("naming:1")
        if state.files.open_file:
            lines.append(f"open:{state.files.open_file}")
    elif state.app == "editor":
        lines.append(f"cursor:{state.editor.cursor}")
        lines.append(f"text:{_esc(state.editor.text)}")
        if state.editor.selected_all:
            lines.append("selected:all")
    lines.append("apis: " + ",".join(sorted(api_names)))
    return "\n".join(lines)


def parse_observation(text: str) -> EnvState:
    """Rebuild an EnvState from its canonical observation text."""
    lines = text.split("\n")
    head = lines[0].split(" ")
    app = head[0].split(":", 1)[1]
    focus = head[1].split(":", 1)[1]
    step = int(head[2].split(":", 1)[1].split("/")[0])
    state = EnvState(app=app, focus="" if focus == "none" else focus, step_count=step)
    for line in lines[1:]:
        if line.startswith("apis: ") or line.startswith("grid "):
            continue
        if app == "sheet" and "=" in line:
            name, value = line.split("=", 1)
            state.sheet.cells[name] = _unesc(value)
        elif app == "files":
            if line.startswith("cwd:/"):
                state.files.cwd = line[5:]
            elif line.startswith("dir "):
                state.files.dirs.add(line[4:])
            elif line.startswith("file "):
                path, content = line[5:].split("=", 1)
                state.files.files[path] = _unesc(content)
            elif line == "naming:1":
                state.files.naming = True
            elif line.startswith("open:"):
                state.files.open_file = line[5:]
        elif app == "editor":
            if line.startswith("cursor:"):
                state.editor.cursor = int(line[7:])
            elif line.startswith("text:"):
                state.editor.text = _unesc(line[5:])
            elif line == "selected:all":
                state.editor.selected_all = True
    return state


def observation_api_names(text: str) -> list[str]:
    for line in text.split("\n"):
        if line.startswith("apis: "):
            names = line[6:]
            return names.split(",") if names else []
    return []

"""Programmatic API layer for the simulated apps.

APIs are declarative descriptors interpreted against a small table of state
primitives; both the built-in v0 set and artifacts produced by the API
generation pipeline share this executor, so a freshly generated API is
callable from the Api action variant with no extra wiring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .state import EnvState, parse_cell, cell_name, SHEET_ROWS, _add_dir


# --- primitives: name -> fn(state, args) -> (ok, value) ---

def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:g}"


def _parse_range(spec: str) -> list[str] | None:
    # "A1:A3" inclusive, single column or single row
    parts = spec.upper().split(":")
    if len(parts) != 2:
        return None
    a, b = parse_cell(parts[0]), parse_cell(parts[1])
    if a is None or b is None:
        return None
    (c1, r1), (c2, r2) = a, b
    if c1 == c2:
        return [cell_name(c1, r) for r in range(min(r1, r2), max(r1, r2) + 1)]
    if r1 == r2:
        return [cell_name(c, r1) for c in range(min(c1, c2), max(c1, c2) + 1)]
    return None


def _p_set_cell(state: EnvState, args: dict):
    cell = args.get("cell", "")
    if parse_cell(cell) is None or "value" not in args:
        return False, None
    state.sheet.set(cell, args["value"])
    return True, None


def _p_get_cell(state: EnvState, args: dict):
    cell = args.get("cell", "")
    if parse_cell(cell) is None:
        return False, None
    return True, state.sheet.get(cell)


def _p_set_many(state: EnvState, args: dict):
    if not args:
        return False, None
    pending = []
    for cell, value in args.items():
        if parse_cell(cell) is None:
            return False, None
        pending.append((cell, value))
    for cell, value in pending:
        state.sheet.set(cell, value)
    return True, None


def _p_clear_cell(state: EnvState, args: dict):
    cell = args.get("cell", "")
    if parse_cell(cell) is None:
        return False, None
    state.sheet.set(cell, "")
    return True, None


def _p_fill_row(state: EnvState, args: dict):
    try:
        row = int(args.get("row", ""))
    except ValueError:
        return False, None
    values = args.get("values", "").split(";")
    if not (1 <= row <= SHEET_ROWS) or not values:
        return False, None
    for col, value in enumerate(values[:8]):
        state.sheet.set(cell_name(col, row - 1), value)
    return True, None


def _p_sum_range(state: EnvState, args: dict):
    cells = _parse_range(args.get("range", ""))
    dest = args.get("dest", "")
    if cells is None or parse_cell(dest) is None:
        return False, None
    total = 0.0
    for name in cells:
        v = state.sheet.get(name)
        try:
            total += float(v)
        except ValueError:
            continue
    state.sheet.set(dest, _fmt_num(total))
    return True, state.sheet.get(dest)


def _p_count_nonempty(state: EnvState, args: dict):
    cells = _parse_range(args.get("range", ""))
    if cells is None:
        return False, None
    return True, str(sum(1 for name in cells if state.sheet.get(name)))


def _p_sort_column(state: EnvState, args: dict):
    col_spec = args.get("col", "").upper()
    loc = parse_cell(col_spec + "1")
    if loc is None:
        return False, None
    col = loc[0]
    values = [state.sheet.get(cell_name(col, r)) for r in range(SHEET_ROWS)]
    present = [v for v in values if v]

    def key(v: str):
        try:
            return (0, float(v), "")
        except ValueError:
            return (1, 0.0, v)

    present.sort(key=key)
    for r in range(SHEET_ROWS):
        state.sheet.set(cell_name(col, r), present[r] if r < len(present) else "")
    return True, None


def _valid_path(path: str) -> bool:
    return bool(path) and not path.startswith("/") and not path.endswith("/") \
        and ".." not in path.split("/")


def _p_mkdir(state: EnvState, args: dict):
    path = args.get("path", "")
    if not _valid_path(path):
        return False, None
    _add_dir(state.files, path)
    return True, None


def _p_mkdirs(state: EnvState, args: dict):
    paths = [p for p in args.get("paths", "").split(";") if p]
    if not paths or not all(_valid_path(p) for p in paths):
        return False, None
    for p in paths:
        _add_dir(state.files, p)
    return True, None


def _p_touch(state: EnvState, args: dict):
    path = args.get("path", "")
    if not _valid_path(path) or path in state.files.dirs:
        return False, None
    parent = "/".join(path.split("/")[:-1])
    if parent:
        _add_dir(state.files, parent)
    state.files.files.setdefault(path, "")
    return True, None


def _p_write(state: EnvState, args: dict):
    path = args.get("path", "")
    if not _valid_path(path) or path in state.files.dirs or "text" not in args:
        return False, None
    parent = "/".join(path.split("/")[:-1])
    if parent:
        _add_dir(state.files, parent)
    state.files.files[path] = args["text"]
    return True, None


def _p_read(state: EnvState, args: dict):
    path = args.get("path", "")
    if path not in state.files.files:
        return False, None
    return True, state.files.files[path]


def _p_move(state: EnvState, args: dict):
    src, dst = args.get("src", ""), args.get("dst", "")
    if src not in state.files.files or not _valid_path(dst) or dst in state.files.files:
        return False, None
    parent = "/".join(dst.split("/")[:-1])
    if parent:
        _add_dir(state.files, parent)
    state.files.files[dst] = state.files.files.pop(src)
    return True, None


def _p_delete(state: EnvState, args: dict):
    path = args.get("path", "")
    if path in state.files.files:
        del state.files.files[path]
        return True, None
    if path in state.files.dirs:
        nested = [d for d in state.files.dirs if d.startswith(path + "/")]
        inside = [f for f in state.files.files if f.startswith(path + "/")]
        if nested or inside:
            return False, None
        state.files.dirs.discard(path)
        return True, None
    return False, None


def _p_count_entries(state: EnvState, args: dict):
    path = args.get("path", "")
    prefix = path + "/" if path else ""
    if path and path not in state.files.dirs:
        return False, None
    n = sum(1 for d in state.files.dirs if d.startswith(prefix) and d != path)
    n += sum(1 for f in state.files.files if f.startswith(prefix))
    return True, str(n)


def _p_insert(state: EnvState, args: dict):
    if "text" not in args:
        return False, None
    ed = state.editor
    ed.clamp()
    ed.text = ed.text[:ed.cursor] + args["text"] + ed.text[ed.cursor:]
    ed.cursor += len(args["text"])
    ed.selected_all = False
    return True, None


def _p_append_line(state: EnvState, args: dict):
    if "text" not in args:
        return False, None
    ed = state.editor
    ed.text = args["text"] if not ed.text else ed.text + "\n" + args["text"]
    ed.cursor = len(ed.text)
    ed.selected_all = False
    return True, None


def _p_replace(state: EnvState, args: dict):
    old, new = args.get("old"), args.get("new")
    if not old or new is None or old not in state.editor.text:
        return False, None
    state.editor.text = state.editor.text.replace(old, new)
    state.editor.clamp()
    return True, None


def _p_set_case(state: EnvState, args: dict):
    mode = args.get("mode", "")
    if mode not in ("lower", "upper") or not state.editor.text:
        return False, None
    ed = state.editor
    ed.text = ed.text.lower() if mode == "lower" else ed.text.upper()
    return True, None


def _p_get_text(state: EnvState, args: dict):
    return True, state.editor.text


def _p_line_count(state: EnvState, args: dict):
    text = state.editor.text
    return True, str(len(text.split("\n")) if text else 0)


def _p_head_text(state: EnvState, args: dict):
    try:
        n = int(args.get("chars", ""))
    except ValueError:
        return False, None
    if n < 0:
        return False, None
    return True, state.editor.text[:n]


PRIMITIVES = {
    "set_cell": _p_set_cell,
    "get_cell": _p_get_cell,
    "set_many": _p_set_many,
    "clear_cell": _p_clear_cell,
    "fill_row": _p_fill_row,
    "sum_range": _p_sum_range,
    "count_nonempty": _p_count_nonempty,
    "sort_column": _p_sort_column,
    "mkdir": _p_mkdir,
    "mkdirs": _p_mkdirs,
    "touch": _p_touch,
    "write": _p_write,
    "read": _p_read,
    "move": _p_move,
    "delete": _p_delete,
    "count_entries": _p_count_entries,
    "insert": _p_insert,
    "append_line": _p_append_line,
    "replace": _p_replace,
    "set_case": _p_set_case,
    "get_text": _p_get_text,
    "line_count": _p_line_count,
    "head_text": _p_head_text,
}


@dataclass(frozen=True)
class ApiDescriptor:
    """Declarative, interpretable API implementation.

    params "*" passes the raw argument map straight to the primitive.
    error_handling and logging are required by artifact validation; the
    executor honors them by rejecting (never raising) and by recording calls.
    """

    name: str          # app.verb
    params: tuple      # parameter names, or ("*",)
    primitive: str
    doc: str = ""
    error_handling: bool = True
    logging: bool = True
    bindings: tuple = field(default_factory=tuple)  # (primitive_arg, param) overrides

    def execute(self, state: EnvState, args: dict, log: list | None = None):
        if self.primitive not in PRIMITIVES:
            return False, None
        if self.params != ("*",):
            if any(k not in self.params for k in args):
                return False, None
            missing = [p for p in self.params if p not in args]
            if missing:
                return False, None
        call_args = dict(args)
        for prim_arg, param in self.bindings:
            if param in call_args:
                call_args[prim_arg] = call_args.pop(param)
        ok, value = PRIMITIVES[self.primitive](state, call_args)
        if log is not None and self.logging:
            log.append((self.name, dict(args), ok))
        return ok, value


def default_registry() -> dict[str, ApiDescriptor]:
    """Built-in v0 API set; the suite's scripted solutions rely on these."""
    specs = [
        ("sheet.set_cell", ("cell", "value"), "set_cell", "Set one cell to a value."),
        ("sheet.get_cell", ("cell",), "get_cell", "Read one cell."),
        ("sheet.set_cells", ("*",), "set_many", "Set several cells in one call (cell=value pairs)."),
        ("sheet.clear", ("cell",), "clear_cell", "Clear one cell."),
        ("sheet.fill_row", ("row", "values"), "fill_row", "Fill a row left to right; values ';'-separated."),
        ("sheet.sum_range", ("range", "dest"), "sum_range", "Sum numeric cells of a range into dest."),
        ("sheet.sort_column", ("col",), "sort_column", "Sort a column ascending, empties last."),
        ("files.mkdir", ("path",), "mkdir", "Create a directory (and parents)."),
        ("files.mkdirs", ("paths",), "mkdirs", "Create several directories; paths ';'-separated."),
        ("files.touch", ("path",), "touch", "Create an empty file (and parents)."),
        ("files.write", ("path", "text"), "write", "Create or overwrite a file with text."),
        ("files.read", ("path",), "read", "Read a file."),
        ("files.move", ("src", "dst"), "move", "Move a file."),
        ("files.delete", ("path",), "delete", "Delete a file or empty directory."),
        ("editor.insert", ("text",), "insert", "Insert text at the cursor."),
        ("editor.append_line", ("text",), "append_line", "Append a line at the end."),
        ("editor.replace", ("old", "new"), "replace", "Replace all occurrences."),
        ("editor.set_case", ("mode",), "set_case", "Convert the whole buffer to lower or upper case."),
        ("editor.get_text", (), "get_text", "Read the buffer."),
    ]
    return {name: ApiDescriptor(name=name, params=params, primitive=prim, doc=doc)
            for name, params, prim, doc in specs}


def app_apis(registry: dict[str, ApiDescriptor], app: str) -> list[str]:
    return sorted(n for n in registry if n.startswith(app + "."))

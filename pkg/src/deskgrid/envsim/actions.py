"""Hybrid action space: GUI primitives, programmatic API calls, and episode termination.

Every action is a single line of text under a strict grammar:

    CLICK(c,r) | TYPE("...") | KEY("...") | SCROLL(n) | API app.verb(k=v,...) | DONE

``parse_action`` never raises on bad input; it returns an action whose
``well_formed`` flag is False so the reward rule can see malformed emissions.
``format_action(parse_action(s)) == s`` holds for every well-formed string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

GRID_W = 32
GRID_H = 24

_CLICK_RE = re.compile(r"^CLICK\((\d+),(\d+)\)$")
_TYPE_RE = re.compile(r'^TYPE\("((?:[^"\\]|\\.)*)"\)$')
_KEY_RE = re.compile(r'^KEY\("((?:[^"\\]|\\.)*)"\)$')
_SCROLL_RE = re.compile(r"^SCROLL\((-?\d+)\)$")
_API_RE = re.compile(r"^API ([a-z_]+\.[a-z_][a-z0-9_]*)\((.*)\)$")
_ARG_RE = re.compile(r"^([a-z_][a-z0-9_]*)=(.*)$")


@dataclass(frozen=True)
class Action:
    """One parsed action. Exactly one variant, tagged by ``kind``.

    kind: one of click, type, key, scroll, api, done, malformed.
    raw_text keeps the emitted string so malformed actions survive logging.
    """

    kind: str
    raw_text: str
    col: int = 0
    row: int = 0
    text: str = ""
    api_name: str = ""
    args: tuple = field(default_factory=tuple)  # ordered (key, value) pairs

    @property
    def well_formed(self) -> bool:
        return self.kind != "malformed"

    def arg_map(self) -> dict:
        return dict(self.args)


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", lambda m: "\n" if m.group(1) == "n" else m.group(1), s)


def click(col: int, row: int) -> Action:
    return Action(kind="click", raw_text=f"CLICK({col},{row})", col=col, row=row)


def type_text(text: str) -> Action:
    return Action(kind="type", raw_text=f'TYPE("{_escape(text)}")', text=text)


def key(combo: str) -> Action:
    return Action(kind="key", raw_text=f'KEY("{_escape(combo)}")', text=combo)


def scroll(delta: int) -> Action:
    return Action(kind="scroll", raw_text=f"SCROLL({delta})", row=delta)


def api_call(name: str, **kwargs: str) -> Action:
    args = tuple((k, str(v)) for k, v in kwargs.items())
    inner = ",".join(f"{k}={v}" for k, v in args)
    return Action(kind="api", raw_text=f"API {name}({inner})", api_name=name, args=args)


def done() -> Action:
    return Action(kind="done", raw_text="DONE")


def parse_action(raw: str) -> Action:
    """Parse one emitted line. Malformed input yields kind='malformed'."""
    line = raw.strip()
    if line == "DONE":
        return Action(kind="done", raw_text=line)
    m = _CLICK_RE.match(line)
    if m:
        c, r = int(m.group(1)), int(m.group(2))
        if 0 <= c < GRID_W and 0 <= r < GRID_H:
            return Action(kind="click", raw_text=line, col=c, row=r)
        return Action(kind="malformed", raw_text=raw)
    m = _TYPE_RE.match(line)
    if m:
        return Action(kind="type", raw_text=line, text=_unescape(m.group(1)))
    m = _KEY_RE.match(line)
    if m:
        return Action(kind="key", raw_text=line, text=_unescape(m.group(1)))
    m = _SCROLL_RE.match(line)
    if m:
        return Action(kind="scroll", raw_text=line, row=int(m.group(1)))
    m = _API_RE.match(line)
    if m:
        name, argstr = m.group(1), m.group(2)
        args = []
        if argstr:
            for piece in _split_args(argstr):
                am = _ARG_RE.match(piece)
                if not am:
                    return Action(kind="malformed", raw_text=raw)
                args.append((am.group(1), am.group(2)))
        return Action(kind="api", raw_text=line, api_name=name, args=tuple(args))
    return Action(kind="malformed", raw_text=raw)


def _split_args(argstr: str) -> list[str]:
    # values may contain ';' separated lists but never ',' — commas split args
    return argstr.split(",")


def format_action(action: Action) -> str:
    """Canonical single-line form. Inverse of parse_action on well-formed actions."""
    if action.kind == "malformed":
        return action.raw_text
    return action.raw_text

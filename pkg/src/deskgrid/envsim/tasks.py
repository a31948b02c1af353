"""Task records: a verifiable goal bound to an app and an initial state."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import verify
from ..errors import InvalidTask, UnknownVerifier

APPS = ("sheet", "files", "editor")


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    app: str
    goal: dict
    max_steps: int
    verifier_id: str
    initial_state: dict = field(default_factory=dict)
    domain: str = ""

    def validate(self) -> None:
        if self.app not in APPS:
            raise InvalidTask(f"unknown app {self.app!r}")
        if self.max_steps < 1:
            raise InvalidTask(f"max_steps must be >= 1, got {self.max_steps}")
        if self.verifier_id not in verify.verifier_ids():
            raise UnknownVerifier(self.verifier_id)

    def goal_text(self) -> str:
        return verify.goal_text(self.goal)


def dump_tasks(tasks: list[TaskSpec], path: str) -> None:
    """One JSON record per line: id, app, goal, max_steps, domain."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            fh.write(json.dumps({
                "id": t.task_id,
                "app": t.app,
                "goal": t.goal,
                "max_steps": t.max_steps,
                "domain": t.domain,
                "verifier_id": t.verifier_id,
                "initial_state": t.initial_state,
            }, sort_keys=True) + "\n")


def load_tasks(path: str) -> list[TaskSpec]:
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            tasks.append(TaskSpec(
                task_id=doc["id"],
                app=doc["app"],
                goal=doc["goal"],
                max_steps=doc["max_steps"],
                verifier_id=doc["verifier_id"],
                initial_state=doc.get("initial_state", {}),
                domain=doc.get("domain", ""),
            ))
    return tasks

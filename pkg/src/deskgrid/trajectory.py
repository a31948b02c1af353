"""Rollout records shared by the replay engine, BC pipeline, and schedulers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Step:
    context: str            # serialized history visible to the policy at this step
    action: str             # emitted action line
    old_log_prob: float     # log-prob under the generating policy
    well_formed: bool
    accepted: bool
    state_changed: bool = True   # accepted and not a no-op
    reward: int = 0
    candidates: tuple = ()  # action set offered at this state

    def to_doc(self) -> dict:
        return {
            "context": self.context,
            "action": self.action,
            "old_log_prob": self.old_log_prob,
            "well_formed": self.well_formed,
            "accepted": self.accepted,
            "state_changed": self.state_changed,
            "reward": self.reward,
            "candidates": list(self.candidates),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Step":
        return cls(
            context=doc["context"],
            action=doc["action"],
            old_log_prob=doc["old_log_prob"],
            well_formed=doc["well_formed"],
            accepted=doc["accepted"],
            state_changed=doc.get("state_changed", True),
            reward=doc.get("reward", 0),
            candidates=tuple(doc.get("candidates", ())),
        )


@dataclass
class Trajectory:
    task_id: str
    steps: list
    accuracy: float
    policy_version: int
    success: bool = False
    group_key: str = ""     # trajectories sharing a key travel together through replay
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.success = self.accuracy == 1.0
        if not self.group_key:
            self.group_key = f"{self.task_id}@{self.policy_version}"

    def __len__(self) -> int:
        return len(self.steps)

    def action_signature(self) -> tuple:
        return tuple(s.action for s in self.steps)

    def to_line(self) -> str:
        return json.dumps({
            "schema": 1,
            "task_id": self.task_id,
            "accuracy": self.accuracy,
            "policy_version": self.policy_version,
            "success": self.success,
            "group_key": self.group_key,
            "provenance": self.provenance,
            "steps": [s.to_doc() for s in self.steps],
        }, sort_keys=True)

    @classmethod
    def from_line(cls, line: str) -> "Trajectory":
        doc = json.loads(line)
        if doc.get("schema") != 1:
            raise ValueError(f"unsupported trajectory schema {doc.get('schema')!r}")
        return cls(
            task_id=doc["task_id"],
            steps=[Step.from_doc(s) for s in doc["steps"]],
            accuracy=doc["accuracy"],
            policy_version=doc["policy_version"],
            group_key=doc.get("group_key", ""),
            provenance=doc.get("provenance", {}),
        )


def write_log(trajectories, path: str, append: bool = True) -> None:
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for traj in trajectories:
            fh.write(traj.to_line() + "\n")


def read_log(path: str) -> list[Trajectory]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Trajectory.from_line(line))
    return out

"""Rule-based, verifiable step rewards.

A trajectory that fully solves its task pays 1 to every step that was
correctly formatted and substantially contributed - operationalized as:
the env accepted it and it actually changed state. Everything else gets 0:
every step of a failed trajectory, and malformed, rejected, or no-op steps
even inside a successful one.
"""

from __future__ import annotations

from ..errors import IncompleteTrajectory
from ..trajectory import Trajectory

SUCCESS_ACCURACY = 1.0


def contributes(step) -> bool:
    return step.well_formed and step.accepted and step.state_changed


def assign_rewards(traj: Trajectory, accuracy: float) -> list[int]:
    if not traj.steps:
        raise IncompleteTrajectory(traj.task_id)
    solved = accuracy >= SUCCESS_ACCURACY
    rewards = []
    for step in traj.steps:
        r = 1 if solved and contributes(step) else 0
        step.reward = r
        rewards.append(r)
    traj.accuracy = accuracy
    traj.success = solved
    return rewards

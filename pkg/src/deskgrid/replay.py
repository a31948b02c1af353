"""Asynchronous replay engine: bounded trajectory buffer with staleness control.

Many rollout sessions push; one trainer drains. Both paths are linearizable
(single lock), and drain can block with a timeout until enough data arrives.
Trajectories sampled for one task travel as a group - step advantages are
normalized within the group, so splitting one across batches would corrupt
the statistics. Entries older than `staleness_limit` policy versions are
rejected on push and evicted on version advance, which keeps everything the
trainer ever consumes close to the policy that will be updated with it.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .errors import VersionRegression
from .trajectory import Step, Trajectory, read_log, write_log

__all__ = ["ReplayBuffer", "ReplayStats", "Step", "Trajectory",
           "read_log", "write_log"]


@dataclass
class ReplayStats:
    pushes: int = 0
    accepted: int = 0
    rejections: int = 0
    evictions: int = 0
    drained: int = 0
    consumed_gaps: list = field(default_factory=list)  # version gap per drained traj

    def conserved(self, current_size: int) -> bool:
        return self.accepted == self.drained + self.evictions + current_size


class ReplayBuffer:
    def __init__(self, capacity: int = 256, staleness_limit: int = 1,
                 start_version: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.staleness_limit = staleness_limit
        self.current_policy_version = start_version
        self.stats = ReplayStats()
        self._entries: deque[Trajectory] = deque()
        self._lock = threading.Lock()
        self._data_ready = threading.Condition(self._lock)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def push(self, traj: Trajectory) -> bool:
        with self._lock:
            self.stats.pushes += 1
            gap = self.current_policy_version - traj.policy_version
            if gap > self.staleness_limit:
                self.stats.rejections += 1
                return False
            self.stats.accepted += 1
            self._entries.append(traj)
            if len(self._entries) > self.capacity:
                self._entries.popleft()
                self.stats.evictions += 1
            self._data_ready.notify_all()
            return True

    def advance_version(self, new_version: int) -> int:
        with self._lock:
            if new_version <= self.current_policy_version:
                raise VersionRegression(
                    f"{new_version} <= {self.current_policy_version}")
            self.current_policy_version = new_version
            keep = deque()
            evicted = 0
            for traj in self._entries:
                if new_version - traj.policy_version > self.staleness_limit:
                    evicted += 1
                else:
                    keep.append(traj)
            self._entries = keep
            self.stats.evictions += evicted
            return evicted

    # --- draining ---

    def _complete_groups(self) -> list[list[Trajectory]]:
        by_key: dict[str, list[Trajectory]] = {}
        order: list[str] = []
        for traj in self._entries:
            if traj.group_key not in by_key:
                by_key[traj.group_key] = []
                order.append(traj.group_key)
            by_key[traj.group_key].append(traj)
        groups = []
        for key in order:
            members = by_key[key]
            expected = members[0].provenance.get("group_size")
            if expected is not None and len(members) < expected:
                continue  # still being produced; never split it
            groups.append(members)
        return groups

    def _try_drain(self, min_steps: int, max_steps: int):
        chosen: list[list[Trajectory]] = []
        steps = 0
        for group in self._complete_groups():
            group_steps = sum(len(t.steps) for t in group)
            if chosen and steps + group_steps > max_steps:
                break
            chosen.append(group)
            steps += group_steps
            if steps >= min_steps:
                break
        if steps < min_steps:
            return None
        taken = {id(t) for g in chosen for t in g}
        self._entries = deque(t for t in self._entries if id(t) not in taken)
        for group in chosen:
            for traj in group:
                self.stats.drained += 1
                self.stats.consumed_gaps.append(
                    self.current_policy_version - traj.policy_version)
        return chosen

    def drain_batch(self, min_steps: int, max_steps: int,
                    block: bool = False, timeout: float | None = None):
        """Whole task groups totalling in [min_steps, max_steps] steps.

        A single group larger than max_steps is returned alone (atomicity
        overrides the cap). Non-blocking mode returns [] when min_steps
        cannot be met; blocking mode waits up to `timeout` seconds.
        """
        if not block:
            with self._lock:
                return self._try_drain(min_steps, max_steps) or []
        end = None if timeout is None else time.monotonic() + timeout
        with self._data_ready:
            while True:
                got = self._try_drain(min_steps, max_steps)
                if got is not None:
                    return got
                remaining = None if end is None else end - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return []
                self._data_ready.wait(remaining)

"""Episode driver: runs one policy (or teacher) against an env session.

Sessions are duck-typed: LocalSession wraps an in-process environment, and
the cluster client exposes the same observation/step/verify surface for
remote slots. Context construction and candidate enumeration happen here,
on the agent side, from observation text alone.
"""

from __future__ import annotations

import numpy as np

from . import policy as pol
from .envsim import (assign_rewards, build_context, create_env,
                     enumerate_candidates)
from .envsim.tasks import TaskSpec
from .trajectory import Step, Trajectory


class LocalSession:
    def __init__(self, task: TaskSpec, seed: int, extra_apis=None):
        self.task = task
        self.env = create_env(task, seed, extra_apis=extra_apis)

    def observation(self) -> str:
        return self.env.observation()

    def step(self, raw_action: str):
        return self.env.step(raw_action)

    def verify(self) -> float:
        return self.env.verify()

    def release(self) -> None:
        pass


class LocalCluster:
    """In-process stand-in for ClusterClient; same allocate surface."""

    def __init__(self, extra_apis=None):
        self.extra_apis = extra_apis

    def allocate(self, task: TaskSpec, seed: int = 0) -> LocalSession:
        return LocalSession(task, seed, extra_apis=self.extra_apis)


def allocate_when_free(cluster, task, seed, timeout: float = 60.0):
    """Allocate a session, waiting for cluster capacity to free up."""
    import time

    from .errors import NoCapacity
    deadline = time.monotonic() + timeout
    while True:
        try:
            return cluster.allocate(task, seed=seed)
        except NoCapacity:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.02)


def policy_chooser(params: pol.PolicyParams, rng: np.random.Generator | None,
                   greedy: bool = False):
    def choose(task, obs, context, candidates):
        if greedy:
            action = pol.greedy_action(params, context, candidates)
            return action, pol.log_prob(params, context, action, candidates)
        return pol.sample_action(params, context, candidates, rng)
    return choose


def run_episode(session, chooser, policy_version: int = 0,
                include_api: bool = True, provenance: dict | None = None) -> Trajectory:
    """Drive one full episode; returns the reward-assigned trajectory."""
    task = session.task
    obs = session.observation()
    last = ""
    steps: list[Step] = []
    while True:
        context = build_context(task, obs, last)
        candidates = enumerate_candidates(task, obs, include_api=include_api)
        action, lp = chooser(task, obs, context, candidates)
        outcome = session.step(action)
        steps.append(Step(
            context=context,
            action=action,
            old_log_prob=lp,
            well_formed=not outcome.malformed,
            accepted=outcome.accepted,
            state_changed=outcome.changed,
            candidates=tuple(candidates),
        ))
        obs = outcome.observation
        last = action
        if outcome.done:
            break
    accuracy = session.verify()
    traj = Trajectory(task_id=task.task_id, steps=steps, accuracy=accuracy,
                      policy_version=policy_version,
                      provenance=provenance or {})
    assign_rewards(traj, accuracy)
    return traj


def eval_task(params: pol.PolicyParams, task: TaskSpec, seed: int = 0,
              include_api: bool = True) -> Trajectory:
    """Greedy rollout on a local env; used for evaluation tables."""
    session = LocalSession(task, seed)
    chooser = policy_chooser(params, rng=None, greedy=True)
    return run_episode(session, chooser, policy_version=params.version,
                       include_api=include_api)


def eval_suite(params: pol.PolicyParams, tasks, include_api: bool = True):
    """Mean success per domain plus overall; returns (table, trajectories)."""
    by_domain: dict[str, list[float]] = {}
    trajs = []
    for task in tasks:
        traj = eval_task(params, task, include_api=include_api)
        trajs.append(traj)
        by_domain.setdefault(task.domain, []).append(1.0 if traj.success else 0.0)
    table = {d: float(np.mean(v)) for d, v in sorted(by_domain.items())}
    table["avg"] = float(np.mean([1.0 if t.success else 0.0 for t in trajs]))
    return table, trajs


def steps_to_success(params: pol.PolicyParams, task: TaskSpec,
                     include_api: bool = True) -> int | None:
    """Greedy episode's step count when the verifier first reports 1.0.

    Trailing actions after the solving step do not count, so the measure is
    robust to how an episode winds down. None when the episode never solves.
    """
    session = LocalSession(task, 0)
    chooser = policy_chooser(params, rng=None, greedy=True)
    obs = session.observation()
    last = ""
    taken = 0
    while True:
        from .envsim import build_context, enumerate_candidates
        context = build_context(task, obs, last)
        candidates = enumerate_candidates(task, obs, include_api=include_api)
        action, _ = chooser(task, obs, context, candidates)
        outcome = session.step(action)
        taken += 1
        if session.verify() == 1.0:
            return taken
        if outcome.done:
            return None
        obs = outcome.observation
        last = action

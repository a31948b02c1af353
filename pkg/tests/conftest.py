import numpy as np
import pytest

from deskgrid import policy as pol
from deskgrid.envsim import build_context, create_env, enumerate_candidates, task_suite
from deskgrid.trajectory import Step, Trajectory


@pytest.fixture(scope="session")
def ablation_tasks():
    return task_suite("ablation")


@pytest.fixture(scope="session")
def smoke_tasks():
    return task_suite("smoke")


def initial_context(task):
    env = create_env(task, 0)
    obs = env.observation()
    return build_context(task, obs), enumerate_candidates(task, obs)


def make_traj(task_id, step_rewards, version=0, group_key="", flags=None,
              context="task:x | app:sheet | goal:cells a1=v | pending:a1=v | "
                      "solved:none | focus:none | last:none | step:0",
              candidates=("DONE", "SCROLL(1)")):
    """Synthetic trajectory for buffer/advantage tests; flags = (well_formed, accepted)."""
    steps = []
    for i, r in enumerate(step_rewards):
        flag = flags[i] if flags else (True, True, True)
        wf, acc = flag[0], flag[1]
        changed = flag[2] if len(flag) > 2 else acc
        steps.append(Step(context=context, action=candidates[0],
                          old_log_prob=-0.5, well_formed=wf, accepted=acc,
                          state_changed=changed, reward=r,
                          candidates=tuple(candidates)))
    accuracy = 1.0 if any(step_rewards) else 0.0
    traj = Trajectory(task_id=task_id, steps=steps, accuracy=accuracy,
                      policy_version=version, group_key=group_key)
    for s, r in zip(traj.steps, step_rewards):
        s.reward = r
    return traj


def random_params(rng, dim=512, scale=0.5):
    return pol.PolicyParams(weights=rng.normal(0.0, scale, dim), version=0)


def touched_indices(params, context, candidates):
    idx = set()
    for cand in candidates:
        idx.update(h % params.dim for h in pol.feature_hashes(context, cand))
    return sorted(idx)


def fd_gradient(fn, params, indices, h=1e-5):
    """Central finite differences of scalar fn(params) along the given indices."""
    grad = np.zeros(params.dim)
    for i in indices:
        w_plus = params.weights.copy()
        w_plus[i] += h
        w_minus = params.weights.copy()
        w_minus[i] -= h
        up = fn(pol.PolicyParams(weights=w_plus, version=params.version))
        down = fn(pol.PolicyParams(weights=w_minus, version=params.version))
        grad[i] = (up - down) / (2 * h)
    return grad

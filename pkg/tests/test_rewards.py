import random

import pytest

from deskgrid.envsim import assign_rewards
from deskgrid.errors import IncompleteTrajectory

from conftest import make_traj


def rule_oracle(accuracy, flags):
    """The reward rule applied by hand, step by step."""
    if accuracy < 1.0:
        return [0] * len(flags)
    return [1 if wf and acc and changed else 0 for wf, acc, changed in flags]


def test_success_pays_every_clean_step():
    traj = make_traj("t", [0, 0, 0, 0])
    assert assign_rewards(traj, 1.0) == [1, 1, 1, 1]


def test_failure_zeroes_everything():
    traj = make_traj("t", [0, 0, 0], flags=[(True, True)] * 3)
    assert assign_rewards(traj, 0.5) == [0, 0, 0]
    assert assign_rewards(traj, 0.0) == [0, 0, 0]


def test_malformed_step_inside_success_gets_zero():
    flags = [(True, True), (False, False), (True, True)]
    traj = make_traj("t", [0, 0, 0], flags=flags)
    assert assign_rewards(traj, 1.0) == [1, 0, 1]


def test_rejected_but_well_formed_step_gets_zero():
    flags = [(True, True), (True, False)]
    traj = make_traj("t", [0, 0], flags=flags)
    assert assign_rewards(traj, 1.0) == [1, 0]


def test_accepted_noop_step_gets_zero():
    flags = [(True, True, True), (True, True, False), (True, True, True)]
    traj = make_traj("t", [0, 0, 0], flags=flags)
    assert assign_rewards(traj, 1.0) == [1, 0, 1]


def test_empty_trajectory_is_incomplete():
    traj = make_traj("t", [1])
    traj.steps = []
    with pytest.raises(IncompleteTrajectory):
        assign_rewards(traj, 1.0)


def test_rule_matches_hand_oracle_on_random_trajectories():
    rng = random.Random(13)
    for _ in range(200):
        n = rng.randint(1, 9)
        flags = []
        for _ in range(n):
            wf = rng.random() > 0.2
            acc = wf and rng.random() > 0.3    # malformed => rejected
            changed = acc and rng.random() > 0.2  # no-op => unchanged
            flags.append((wf, acc, changed))
        accuracy = rng.choice([0.0, 0.25, 0.5, 1.0])
        traj = make_traj("t", [0] * n, flags=flags)
        got = assign_rewards(traj, accuracy)
        assert got == rule_oracle(accuracy, flags)
        assert all(r in (0, 1) for r in got)
        if accuracy < 1.0:
            assert sum(got) == 0

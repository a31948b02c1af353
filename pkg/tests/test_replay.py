import threading

import pytest

from deskgrid.errors import VersionRegression
from deskgrid.replay import ReplayBuffer
from deskgrid.trajectory import Trajectory, read_log, write_log

from conftest import make_traj


def grouped(task_id, n, steps_each, version=0, size=None):
    key = f"{task_id}@{version}"
    out = []
    for i in range(n):
        t = make_traj(task_id, [1] * steps_each, version=version, group_key=key)
        t.provenance["group_size"] = size if size is not None else n
        out.append(t)
    return out


def test_push_accepts_fresh():
    buf = ReplayBuffer(capacity=4, staleness_limit=1)
    assert buf.push(make_traj("a", [1], version=0))
    assert len(buf) == 1


def test_push_rejects_stale():
    buf = ReplayBuffer(capacity=4, staleness_limit=1, start_version=2)
    assert not buf.push(make_traj("a", [1], version=0))  # gap 2 > K=1
    assert buf.stats.rejections == 1
    assert len(buf) == 0


def test_push_at_capacity_evicts_oldest():
    buf = ReplayBuffer(capacity=2, staleness_limit=5)
    first = make_traj("a", [1])
    buf.push(first)
    buf.push(make_traj("b", [1]))
    assert buf.push(make_traj("c", [1]))
    assert len(buf) == 2
    assert buf.stats.evictions == 1
    drained = buf.drain_batch(min_steps=1, max_steps=10)
    assert all(t.task_id != "a" for g in drained for t in g)


def test_drain_returns_whole_groups_only():
    buf = ReplayBuffer(capacity=64, staleness_limit=3)
    for g in ("x", "y", "z"):
        for t in grouped(g, 4, 2):
            buf.push(t)
    batch = buf.drain_batch(min_steps=20, max_steps=24)
    # recount steps and group integrity after drain
    steps = sum(len(t.steps) for g in batch for t in g)
    assert steps >= 20
    for group in batch:
        assert len(group) == 4
        assert len({t.group_key for t in group}) == 1
    remaining = buf.drain_batch(min_steps=1, max_steps=100)
    drained_keys = {g[0].group_key for g in batch}
    for group in remaining:
        assert group[0].group_key not in drained_keys


def test_drain_empty_nonblocking():
    buf = ReplayBuffer()
    assert buf.drain_batch(min_steps=1, max_steps=10) == []


def test_single_oversize_group_returned_alone():
    buf = ReplayBuffer(capacity=64, staleness_limit=3)
    for t in grouped("big", 4, 10):  # 40 steps > max
        buf.push(t)
    for t in grouped("small", 2, 1):
        buf.push(t)
    batch = buf.drain_batch(min_steps=5, max_steps=16)
    assert len(batch) == 1
    assert batch[0][0].task_id == "big"


def test_incomplete_group_never_split():
    buf = ReplayBuffer(capacity=64, staleness_limit=3)
    for t in grouped("x", 2, 3, size=4):  # 2 of 4 members present
        buf.push(t)
    assert buf.drain_batch(min_steps=1, max_steps=100) == []
    for t in grouped("x", 2, 3, size=4):
        buf.push(t)
    batch = buf.drain_batch(min_steps=1, max_steps=100)
    assert len(batch[0]) == 4


def test_advance_version_and_staleness_eviction():
    buf = ReplayBuffer(capacity=16, staleness_limit=1)
    for t in grouped("a", 2, 1, version=0):
        buf.push(t)
    assert buf.advance_version(1) == 0     # gap 1 == K, kept
    assert buf.advance_version(2) == 2     # gap 2 > K, evicted
    assert len(buf) == 0
    with pytest.raises(VersionRegression):
        buf.advance_version(1)


def test_conservation_accounting():
    buf = ReplayBuffer(capacity=8, staleness_limit=1)
    for i in range(6):
        for t in grouped(f"t{i}", 2, 2, version=0):
            buf.push(t)
    buf.drain_batch(min_steps=4, max_steps=8)
    buf.advance_version(1)
    buf.push(make_traj("late", [1], version=0))
    buf.advance_version(2)  # evicts version-0 leftovers
    buf.push(make_traj("stale", [1], version=0))  # rejected
    assert buf.stats.conserved(len(buf))
    assert buf.stats.pushes == buf.stats.accepted + buf.stats.rejections


def test_consumed_gap_audit():
    buf = ReplayBuffer(capacity=16, staleness_limit=1)
    for t in grouped("a", 2, 2, version=0):
        buf.push(t)
    buf.advance_version(1)
    buf.drain_batch(min_steps=1, max_steps=100)
    assert buf.stats.consumed_gaps == [1, 1]
    assert max(buf.stats.consumed_gaps) <= buf.staleness_limit


def test_blocking_drain_wakes_on_push():
    buf = ReplayBuffer(capacity=16, staleness_limit=1)
    result = {}

    def consumer():
        result["batch"] = buf.drain_batch(min_steps=2, max_steps=8,
                                          block=True, timeout=5.0)

    thread = threading.Thread(target=consumer)
    thread.start()
    for t in grouped("a", 2, 1):
        buf.push(t)
    thread.join(timeout=5.0)
    assert not thread.is_alive()
    assert sum(len(t.steps) for g in result["batch"] for t in g) == 2


def test_blocking_drain_times_out():
    buf = ReplayBuffer()
    assert buf.drain_batch(min_steps=1, max_steps=4, block=True, timeout=0.05) == []


def test_trajectory_log_round_trip(tmp_path):
    path = tmp_path / "log.jsonl"
    trajs = grouped("a", 3, 2, version=4)
    write_log(trajs, str(path), append=False)
    write_log(grouped("b", 1, 1, version=5, size=1), str(path))
    loaded = read_log(str(path))
    assert len(loaded) == 4
    assert loaded[0].task_id == "a" and loaded[0].policy_version == 4
    assert loaded[0].steps[0].candidates == trajs[0].steps[0].candidates
    assert loaded[3].task_id == "b"
    strict = Trajectory.from_line(loaded[0].to_line())
    assert strict.to_line() == loaded[0].to_line()

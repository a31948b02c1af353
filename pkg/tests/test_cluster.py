import json
import time
import urllib.request

import pytest

from deskgrid.cluster import (ClusterClient, Controller, HttpApi, WorkerInfo,
                              WorkerService)
from deskgrid.envsim import task_suite
from deskgrid.errors import (DuplicateLiveWorker, NoCapacity, SessionLost,
                             UnknownWorker)

SMOKE = task_suite("smoke")
HB = 0.05  # fast heartbeats keep fault tests quick


@pytest.fixture
def cluster():
    controller = Controller(heartbeat_interval=HB).start()
    workers = []

    def add_worker(worker_id, slots=4):
        w = WorkerService(worker_id, controller.address, slots, SMOKE,
                          heartbeat_interval=HB).start()
        workers.append(w)
        return w

    yield controller, add_worker
    for w in workers:
        w.stop()
    controller.stop()


def wait_until(predicate, timeout=5.0, interval=0.01):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return False


def test_register_exposes_idle_slots(cluster):
    controller, add_worker = cluster
    add_worker("w1", slots=16)
    status = controller.snapshot_status()
    assert len(status["workers"]) == 1
    assert status["workers"][0]["capacity"] == 16
    idle = [s for s in status["slots"] if s["session_id"] is None]
    assert len(idle) == 16


def test_duplicate_live_registration_rejected(cluster):
    controller, add_worker = cluster
    worker = add_worker("w1")
    with pytest.raises(DuplicateLiveWorker):
        controller.register_worker(WorkerInfo("w1", worker.address, 4))


def test_reregistration_after_death(cluster):
    controller, add_worker = cluster
    worker = add_worker("w1")
    client = ClusterClient(controller.address)
    client.allocate(SMOKE[0], seed=1)
    before = controller.snapshot_status()["counters"]
    worker.kill()
    assert wait_until(lambda: controller.snapshot_status()["workers"][0]["status"] == "dead",
                      timeout=2.0)
    # old sessions were recovered, not carried over
    status = controller.snapshot_status()
    assert status["counters"]["session_lost"] == 1
    assert status["counters"]["allocations"] == before["allocations"]
    add_worker("w1")  # same id, fresh process
    status = controller.snapshot_status()
    assert status["workers"][0]["status"] == "alive"
    assert status["counters"]["session_lost"] == 1  # counters preserved
    assert status["sessions"] == []


def test_heartbeat_unknown_worker(cluster):
    controller, _ = cluster
    with pytest.raises(UnknownWorker):
        controller.heartbeat("ghost", {})


def test_suspect_recovers_on_heartbeat():
    # driven directly so the suspect window cannot race real heartbeats
    controller = Controller(heartbeat_interval=10.0)
    try:
        controller.register_worker(WorkerInfo("w1", ("127.0.0.1", 1), 4))
        with controller.lock:
            controller.state.workers["w1"].last_heartbeat -= 15.0  # one missed beat
        controller.reap_and_reallocate()
        assert controller.state.workers["w1"].status == "suspect"
        controller.heartbeat("w1", {"busy": 0})
        assert controller.state.workers["w1"].status == "alive"
        with controller.lock:
            controller.state.workers["w1"].last_heartbeat -= 31.0  # past the timeout
        controller.reap_and_reallocate()
        assert controller.state.workers["w1"].status == "dead"
    finally:
        controller._server.server_close()


def test_allocate_least_loaded_with_id_tiebreak(cluster):
    controller, add_worker = cluster
    add_worker("w2", slots=8)
    add_worker("w1", slots=8)
    client = ClusterClient(controller.address)
    first = client.allocate(SMOKE[0])
    # equal loads -> lowest worker_id wins
    assert controller.state.sessions[first.session_id].worker_id == "w1"
    second = client.allocate(SMOKE[1])
    assert controller.state.sessions[second.session_id].worker_id == "w2"
    # now w1 busier after another allocation lands on either; pin three more
    third = client.allocate(SMOKE[2])
    assert controller.state.sessions[third.session_id].worker_id == "w1"


def test_no_capacity(cluster):
    controller, add_worker = cluster
    add_worker("w1", slots=1)
    client = ClusterClient(controller.address)
    client.allocate(SMOKE[0])
    with pytest.raises(NoCapacity):
        client.allocate(SMOKE[1])


def test_step_routing_and_terminal_accuracy(cluster):
    controller, add_worker = cluster
    add_worker("w1")
    client = ClusterClient(controller.address)
    session = client.allocate(SMOKE[2], seed=3)  # office-01
    assert "app:sheet" in session.observation()
    out = session.step("API sheet.set_cells(a1=Month,b1=Total)")
    assert out.accepted and not out.done
    out = session.step("DONE")
    assert out.done
    assert session.verify() == 1.0
    session.release()
    counters = controller.snapshot_status()["counters"]
    assert counters["completions"] == 1


def test_duplicate_correlation_id_steps_once(cluster):
    controller, add_worker = cluster
    worker = add_worker("w1")
    client = ClusterClient(controller.address)
    session = client.allocate(SMOKE[2], seed=3)
    first = client.call("Step", {"session_id": session.session_id,
                                 "action": "CLICK(0,0)"},
                        correlation_id="dup-1").payload
    again = client.call("Step", {"session_id": session.session_id,
                                 "action": "CLICK(0,0)"},
                        correlation_id="dup-1").payload
    assert first == again
    env = worker.envs[session.session_id]
    assert env.state.step_count == 1


def test_worker_death_mid_episode(cluster):
    controller, add_worker = cluster
    worker = add_worker("w1")
    client = ClusterClient(controller.address)
    session = client.allocate(SMOKE[0], seed=1)
    session.step("SCROLL(1)")
    worker.kill()
    with pytest.raises((SessionLost, Exception)):
        for _ in range(3):
            session.step("SCROLL(1)")
            time.sleep(0.1)
    assert wait_until(
        lambda: SMOKE[0].task_id in controller.snapshot_status()["recovered_pending"],
        timeout=2 * controller.heartbeat_timeout + 1.0)
    counters = controller.snapshot_status()["counters"]
    assert counters["session_lost"] >= 1
    assert counters["allocations"] == counters["completions"] \
        + len(controller.state.sessions) + counters["session_lost"]


def test_empty_cluster_status_is_zeroed(cluster):
    controller, _ = cluster
    status = controller.snapshot_status()
    assert status["workers"] == [] and status["slots"] == []
    assert all(v == 0 for v in status["counters"].values())
    assert status["train"] == {"paused": False, "phase": "idle"}


def test_status_counts_allocations(cluster):
    controller, add_worker = cluster
    add_worker("w1", slots=8)
    client = ClusterClient(controller.address)
    for i in range(5):
        client.allocate(SMOKE[i % len(SMOKE)], seed=i)
    assert controller.snapshot_status()["counters"]["allocations"] == 5


def test_status_report_over_wire_matches_schema(cluster):
    controller, add_worker = cluster
    add_worker("w1")
    client = ClusterClient(controller.address)
    report = client.status()
    for key in ("proto_version", "workers", "slots", "sessions", "counters",
                "train", "metrics_tail"):
        assert key in report
    assert report["proto_version"] == 1


@pytest.fixture
def http_cluster(cluster):
    controller, add_worker = cluster
    api = HttpApi(controller).start()
    yield controller, add_worker, api
    api.stop()


def _get(api, path):
    host, port = api.address
    with urllib.request.urlopen(f"http://{host}:{port}{path}") as resp:
        return json.loads(resp.read())


def _post(api, path, doc=None):
    host, port = api.address
    req = urllib.request.Request(f"http://{host}:{port}{path}",
                                 data=json.dumps(doc or {}).encode(),
                                 headers={"Content-Type": "application/json"},
                                 method="POST")
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def test_http_status_and_metrics(http_cluster):
    controller, add_worker, api = http_cluster
    add_worker("w1")
    status = _get(api, "/status")
    assert len(status["workers"]) == 1
    assert _get(api, "/metrics") == {"series": []}
    _post(api, "/metrics", {"records": [{"update": 1, "mean_reward": 0.5,
                                         "entropy": 1.2, "kl": 0.0,
                                         "clip_fraction": 0.0, "phase": "rl1"}]})
    series = _get(api, "/metrics")["series"]
    assert len(series) == 1 and series[0]["update"] == 1


def test_http_pause_resume(http_cluster):
    controller, _, api = http_cluster
    _post(api, "/train/pause")
    assert controller.is_paused()
    assert _get(api, "/train/state")["paused"] is True
    _post(api, "/train/resume")
    assert not controller.is_paused()


def test_http_env_reset_bumps_reallocations(http_cluster):
    controller, add_worker, api = http_cluster
    worker = add_worker("w1")
    client = ClusterClient(controller.address)
    session = client.allocate(SMOKE[2], seed=0)
    session.step("API sheet.set_cell(cell=A1,value=Month)")
    assert worker.envs[session.session_id].state.step_count == 1
    _post(api, f"/env/{session.session_id}/reset")
    assert worker.envs[session.session_id].state.step_count == 0
    assert controller.snapshot_status()["counters"]["reallocations"] == 1


def test_http_drain_blocks_new_allocations(http_cluster):
    controller, add_worker, api = http_cluster
    add_worker("w1", slots=2)
    client = ClusterClient(controller.address)
    live = client.allocate(SMOKE[0])
    _post(api, "/worker/w1/drain")
    with pytest.raises(NoCapacity):
        client.allocate(SMOKE[1])
    # in-flight episode still completes
    out = live.step("DONE")
    assert out.done


def test_second_controller_on_same_port_fails(cluster):
    controller, _ = cluster
    with pytest.raises(OSError):
        Controller(port=controller.address[1])


def test_stop_marks_live_sessions_lost(cluster):
    controller, add_worker = cluster
    add_worker("w1")
    client = ClusterClient(controller.address)
    client.allocate(SMOKE[0], seed=0)
    client.allocate(SMOKE[1], seed=0)
    controller.stop()
    assert controller.state.counters["session_lost"] == 2
    assert controller.state.sessions == {}


def test_http_unknown_targets_404(http_cluster):
    _, _, api = http_cluster
    with pytest.raises(urllib.error.HTTPError) as err:
        _post(api, "/worker/ghost/drain")
    assert err.value.code == 404
    with pytest.raises(urllib.error.HTTPError) as err:
        _post(api, "/env/ghost/reset")
    assert err.value.code == 404

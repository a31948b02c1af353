"""Controller service: worker registry, slot allocation, step routing, status.

One writer: every ClusterState mutation happens under a single lock; network
calls to workers run outside it. Failure handling is heartbeat-driven - a
worker that misses one heartbeat interval turns suspect, and after
`heartbeat_timeout` seconds it is declared dead, its sessions are marked
lost, and their task ids become recoverable for re-queue. Step routing is
idempotent per correlation id so clients may retry without double-stepping
an environment.
"""

from __future__ import annotations

import itertools
import json
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

from ..errors import (DuplicateLiveWorker, NoCapacity, RequestTimeout,
                      SessionLost, UnknownWorker)
from . import wire

DEFAULT_HEARTBEAT_INTERVAL = 1.0
DEFAULT_TIMEOUT_INTERVALS = 3


@dataclass
class WorkerInfo:
    worker_id: str
    address: tuple
    capacity: int
    last_heartbeat: float = 0.0
    status: str = "alive"           # alive | suspect | dead
    draining: bool = False
    load_stats: dict = field(default_factory=dict)


@dataclass
class EnvSlot:
    slot_id: str
    worker_id: str
    task_id: str = ""               # "" means idle
    session_id: str = ""
    created_at: float = 0.0


@dataclass
class SessionInfo:
    session_id: str
    task_id: str
    worker_id: str
    slot_id: str
    seed: int
    accuracy: float | None = None
    done: bool = False


class ClusterState:
    def __init__(self):
        self.workers: dict[str, WorkerInfo] = {}
        self.slots: dict[str, EnvSlot] = {}
        self.sessions: dict[str, SessionInfo] = {}
        self.counters = {"allocations": 0, "completions": 0, "session_lost": 0,
                         "failures": 0, "reallocations": 0}
        self.recovered: list[str] = []          # task ids awaiting re-queue
        # session_id -> correlation_id -> StepResult payload (idempotent retry)
        self.step_cache: dict[str, dict] = {}
        self.metrics: list[dict] = []
        self.train = {"paused": False, "phase": "idle"}

    def live_workers(self):
        return [w for w in self.workers.values() if w.status != "dead"]


class Controller:
    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 heartbeat_interval: float = DEFAULT_HEARTBEAT_INTERVAL,
                 timeout_intervals: int = DEFAULT_TIMEOUT_INTERVALS,
                 rpc_timeout: float = 10.0):
        self.state = ClusterState()
        self.lock = threading.RLock()
        self.heartbeat_interval = heartbeat_interval
        self.heartbeat_timeout = heartbeat_interval * timeout_intervals
        self.rpc_timeout = rpc_timeout
        self._session_counter = itertools.count(1)
        self._worker_conns: dict[str, "_WorkerLink"] = {}
        self._conns_lock = threading.Lock()
        self._stopping = threading.Event()

        controller = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                while True:
                    try:
                        msg = wire.read_message(self.request)
                    except (ConnectionError, ValueError, RequestTimeout, OSError):
                        return
                    if msg is None:
                        return
                    reply = controller.dispatch(msg)
                    try:
                        wire.write_message(self.request, reply)
                    except OSError:
                        return

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.address = self._server.server_address
        self._threads = [
            threading.Thread(target=self._server.serve_forever, daemon=True),
            threading.Thread(target=self._monitor_loop, daemon=True),
        ]

    def start(self) -> "Controller":
        for t in self._threads:
            t.start()
        return self

    def stop(self) -> None:
        self._stopping.set()
        with self.lock:
            for session in list(self.state.sessions.values()):
                self._lose_session(session)
        self._server.shutdown()
        self._server.server_close()
        with self._conns_lock:
            links = list(self._worker_conns.values())
        for link in links:
            link.close()

    # --- message dispatch (wire surface) ---

    def dispatch(self, msg: wire.WireMessage) -> wire.WireMessage:
        try:
            if msg.variant == "Register":
                payload = msg.payload
                info = WorkerInfo(worker_id=payload["worker_id"],
                                  address=tuple(payload["address"]),
                                  capacity=int(payload["capacity"]))
                self.register_worker(info)
                return msg.reply("Ack", "controller", {"worker_id": info.worker_id})
            if msg.variant == "Heartbeat":
                self.heartbeat(msg.payload["worker_id"],
                               msg.payload.get("load_stats", {}))
                return msg.reply("Ack", "controller", {})
            if msg.variant == "Allocate":
                session_id, slot, observation = self.allocate(
                    msg.payload["task_id"], int(msg.payload.get("seed", 0)))
                return msg.reply("Allocated", "controller",
                                 {"session_id": session_id, "slot_id": slot.slot_id,
                                  "worker_id": slot.worker_id,
                                  "observation": observation})
            if msg.variant == "Step":
                payload = self.route_step(msg.payload["session_id"],
                                          msg.payload["action"],
                                          msg.correlation_id)
                return msg.reply("StepResult", "controller", payload)
            if msg.variant == "Reset":
                self.reset_session(msg.payload["session_id"])
                return msg.reply("Ack", "controller", {})
            if msg.variant == "Release":
                self.release(msg.payload["session_id"])
                return msg.reply("Ack", "controller", {})
            if msg.variant == "StatusQuery":
                return msg.reply("StatusReport", "controller", self.snapshot_status())
            return msg.error("controller", "BadRequest",
                             f"unexpected variant {msg.variant}")
        except (DuplicateLiveWorker, UnknownWorker, NoCapacity, SessionLost,
                RequestTimeout, KeyError) as exc:
            return msg.error("controller", type(exc).__name__, str(exc))

    # --- operations ---

    def register_worker(self, info: WorkerInfo) -> str:
        with self.lock:
            existing = self.state.workers.get(info.worker_id)
            if existing and existing.status != "dead":
                raise DuplicateLiveWorker(info.worker_id)
            if existing:
                self._reap_worker(existing)  # sessions never survive death
            info.last_heartbeat = time.monotonic()
            info.status = "alive"
            self.state.workers[info.worker_id] = info
            for i in range(info.capacity):
                slot_id = f"{info.worker_id}/{i}"
                self.state.slots[slot_id] = EnvSlot(slot_id=slot_id,
                                                    worker_id=info.worker_id)
        with self._conns_lock:
            link = self._worker_conns.pop(info.worker_id, None)
        if link:
            link.close()
        return info.worker_id

    def heartbeat(self, worker_id: str, load_stats: dict) -> None:
        with self.lock:
            worker = self.state.workers.get(worker_id)
            if worker is None or worker.status == "dead":
                raise UnknownWorker(worker_id)
            worker.last_heartbeat = time.monotonic()
            worker.status = "alive"
            worker.load_stats = dict(load_stats)

    def _busy_count(self, worker_id: str) -> int:
        return sum(1 for s in self.state.slots.values()
                   if s.worker_id == worker_id and s.session_id)

    def allocate(self, task_id: str, seed: int = 0) -> tuple:
        with self.lock:
            candidates = []
            for w in self.state.workers.values():
                if w.status != "alive" or w.draining:
                    continue
                busy = self._busy_count(w.worker_id)
                if busy < w.capacity:
                    candidates.append((busy, w.worker_id))
            if not candidates:
                raise NoCapacity(task_id)
            _, worker_id = min(candidates)  # least loaded, then lowest id
            slot = next(s for sid, s in sorted(self.state.slots.items())
                        if s.worker_id == worker_id and not s.session_id)
            session_id = f"sess-{next(self._session_counter)}"
            slot.session_id = session_id
            slot.task_id = task_id
            slot.created_at = time.time()
            session = SessionInfo(session_id=session_id, task_id=task_id,
                                  worker_id=worker_id, slot_id=slot.slot_id,
                                  seed=seed)
            self.state.sessions[session_id] = session
            self.state.counters["allocations"] += 1
            if task_id in self.state.recovered:
                self.state.recovered.remove(task_id)
                self.state.counters["reallocations"] += 1
            worker = self.state.workers[worker_id]
        reply = self._worker_call(worker, "Allocate",
                                  {"session_id": session_id, "task_id": task_id,
                                   "slot_id": slot.slot_id, "seed": seed})
        if reply.variant != "Allocated":
            with self.lock:
                live = self.state.sessions.get(session_id)
                if live is not None:
                    self._lose_session(live)
                self.state.counters["failures"] += 1
            raise SessionLost(f"worker rejected allocation: {reply.payload}")
        return session_id, slot, reply.payload.get("observation", "")

    def route_step(self, session_id: str, action: str, correlation_id: str) -> dict:
        with self.lock:
            cached = self.state.step_cache.get(session_id, {}).get(correlation_id)
            if cached is not None:
                return cached
            session = self.state.sessions.get(session_id)
            if session is None:
                raise SessionLost(session_id)
            worker = self.state.workers[session.worker_id]
            if worker.status == "dead":
                raise SessionLost(session_id)
        try:
            reply = self._worker_call(worker, "Step",
                                      {"session_id": session_id, "action": action},
                                      correlation_id=correlation_id)
        except (OSError, ConnectionError, RequestTimeout) as exc:
            with self.lock:
                self.state.counters["failures"] += 1
                live = self.state.sessions.get(session_id)
                if live is not None:
                    self._lose_session(live)
            raise SessionLost(f"{session_id}: {exc}") from exc
        if reply.variant != "StepResult":
            raise SessionLost(f"{session_id}: {reply.payload}")
        payload = reply.payload
        with self.lock:
            self.state.step_cache.setdefault(session_id, {})[correlation_id] = payload
            session = self.state.sessions.get(session_id)
            if session is not None and payload.get("done"):
                session.done = True
                session.accuracy = payload.get("accuracy")
        return payload

    def reset_session(self, session_id: str) -> None:
        with self.lock:
            session = self.state.sessions.get(session_id)
            if session is None:
                raise SessionLost(session_id)
            worker = self.state.workers[session.worker_id]
            self.state.counters["reallocations"] += 1
            session.done = False
            session.accuracy = None
        reply = self._worker_call(worker, "Reset", {"session_id": session_id})
        if reply.variant != "Ack":
            raise SessionLost(f"{session_id}: {reply.payload}")

    def release(self, session_id: str) -> None:
        with self.lock:
            session = self.state.sessions.get(session_id)
            if session is None:
                raise SessionLost(session_id)
            worker = self.state.workers[session.worker_id]
        try:
            self._worker_call(worker, "Release", {"session_id": session_id})
        except (OSError, ConnectionError, RequestTimeout):
            pass  # worker side cleanup is best-effort; controller view wins
        with self.lock:
            if session_id in self.state.sessions:
                self._free_slot(session_id)
                self.state.counters["completions"] += 1

    def reap_and_reallocate(self) -> list[str]:
        """Mark dead workers' sessions lost; return their task ids for re-queue."""
        now = time.monotonic()
        recovered = []
        with self.lock:
            for worker in self.state.workers.values():
                if worker.status == "dead":
                    continue
                silence = now - worker.last_heartbeat
                if silence > self.heartbeat_timeout:
                    worker.status = "dead"
                    recovered.extend(self._reap_worker(worker))
                elif silence > self.heartbeat_interval:
                    worker.status = "suspect"
        return recovered

    def _reap_worker(self, worker: WorkerInfo) -> list[str]:
        lost = [s for s in self.state.sessions.values()
                if s.worker_id == worker.worker_id]
        task_ids = []
        for session in lost:
            task_ids.append(session.task_id)
            self._lose_session(session)
        for slot_id in [sid for sid, s in self.state.slots.items()
                        if s.worker_id == worker.worker_id]:
            del self.state.slots[slot_id]
        with self._conns_lock:
            link = self._worker_conns.pop(worker.worker_id, None)
        if link:
            link.close()
        return task_ids

    def _lose_session(self, session: SessionInfo) -> None:
        self.state.recovered.append(session.task_id)
        self._free_slot(session.session_id)
        self.state.counters["session_lost"] += 1

    def _free_slot(self, session_id: str) -> None:
        session = self.state.sessions.pop(session_id, None)
        self.state.step_cache.pop(session_id, None)
        if session is None:
            return
        slot = self.state.slots.get(session.slot_id)
        if slot is not None and slot.session_id == session_id:
            slot.session_id = ""
            slot.task_id = ""

    def snapshot_status(self) -> dict:
        with self.lock:
            st = self.state
            return {
                "proto_version": wire.PROTO_VERSION,
                "workers": [{
                    "worker_id": w.worker_id, "status": w.status,
                    "capacity": w.capacity, "draining": w.draining,
                    "busy": self._busy_count(w.worker_id),
                    "load_stats": dict(w.load_stats),
                } for w in sorted(st.workers.values(), key=lambda w: w.worker_id)],
                "slots": [{
                    "slot_id": s.slot_id, "worker_id": s.worker_id,
                    "task_id": s.task_id or None,
                    "session_id": s.session_id or None,
                    "created_at": s.created_at,
                } for _, s in sorted(st.slots.items())],
                "sessions": [{
                    "session_id": s.session_id, "task_id": s.task_id,
                    "worker_id": s.worker_id, "done": s.done,
                } for s in sorted(st.sessions.values(),
                                  key=lambda s: s.session_id)],
                "counters": dict(st.counters),
                "recovered_pending": list(st.recovered),
                "train": dict(st.train),
                "metrics_tail": st.metrics[-50:],
            }

    # --- trainer-facing control surface (also used by the HTTP endpoints) ---

    def publish_metrics(self, records: list[dict]) -> None:
        with self.lock:
            self.state.metrics.extend(records)

    def metrics_series(self) -> list[dict]:
        with self.lock:
            return list(self.state.metrics)

    def set_paused(self, paused: bool) -> None:
        with self.lock:
            self.state.train["paused"] = paused

    def is_paused(self) -> bool:
        with self.lock:
            return self.state.train["paused"]

    def set_phase(self, phase: str) -> None:
        with self.lock:
            self.state.train["phase"] = phase

    def drain_worker(self, worker_id: str) -> None:
        with self.lock:
            worker = self.state.workers.get(worker_id)
            if worker is None:
                raise UnknownWorker(worker_id)
            worker.draining = True

    # --- plumbing ---

    def _monitor_loop(self) -> None:
        while not self._stopping.is_set():
            self.reap_and_reallocate()
            self._stopping.wait(self.heartbeat_interval / 2)

    def _worker_call(self, worker: WorkerInfo, variant: str, payload: dict,
                     correlation_id: str | None = None) -> wire.WireMessage:
        with self._conns_lock:
            link = self._worker_conns.get(worker.worker_id)
            if link is None or link.address != worker.address:
                link = _WorkerLink(worker.address, self.rpc_timeout)
                self._worker_conns[worker.worker_id] = link
        msg = wire.WireMessage(
            variant=variant,
            correlation_id=correlation_id or f"ctl-{time.monotonic_ns()}",
            sender_id="controller", payload=payload)
        return link.call(msg)


class _WorkerLink:
    """One persistent connection per worker; calls serialized by a lock."""

    def __init__(self, address: tuple, timeout: float):
        self.address = tuple(address)
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._lock = threading.Lock()

    def call(self, msg: wire.WireMessage) -> wire.WireMessage:
        with self._lock:
            if self._sock is None:
                self._sock = socket.create_connection(self.address,
                                                      timeout=self.timeout)
            try:
                wire.write_message(self._sock, msg)
                reply = wire.read_message(self._sock)
            except (OSError, ConnectionError, RequestTimeout):
                self.close_locked()
                raise
            if reply is None:
                self.close_locked()
                raise ConnectionError("worker closed connection")
            return reply

    def close_locked(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def close(self) -> None:
        # never block behind an in-flight call: closing the raw socket makes
        # that call error out promptly, which is the point during a reap
        if self._lock.acquire(blocking=False):
            try:
                self.close_locked()
            finally:
                self._lock.release()
        else:
            sock = self._sock
            if sock is not None:
                try:
                    sock.close()
                except OSError:
                    pass

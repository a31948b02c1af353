"""Worker service: hosts simulated env slots and heartbeats the controller.

A worker serves the same message schema the controller speaks: the
controller forwards Allocate/Step/Reset/Release to the worker that owns the
session. Envs live in-process; the interface is the one a container-backed
worker would implement. kill() stops heartbeats and the RPC server without
any cleanup, which is exactly what a crashed node looks like to the
controller.
"""

from __future__ import annotations

import socket
import socketserver
import threading
import time

from ..envsim import create_env
from ..errors import ControllerUnreachable, EpisodeFinished, RequestTimeout
from . import wire


class WorkerService:
    def __init__(self, worker_id: str, controller_addr: tuple, slots: int,
                 tasks, host: str = "127.0.0.1", port: int = 0,
                 heartbeat_interval: float = 1.0, extra_apis=None,
                 register_retries: int = 5):
        self.worker_id = worker_id
        self.controller_addr = tuple(controller_addr)
        self.capacity = slots
        self.tasks = {t.task_id: t for t in tasks}
        self.extra_apis = extra_apis
        self.heartbeat_interval = heartbeat_interval
        self.register_retries = register_retries
        self.envs: dict[str, object] = {}        # session_id -> env
        self.step_cache: dict[str, dict] = {}    # session -> corr -> payload
        self._lock = threading.Lock()
        self._stopping = threading.Event()
        self._control_sock: socket.socket | None = None

        worker = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                while True:
                    try:
                        msg = wire.read_message(self.request)
                    except (ConnectionError, ValueError, RequestTimeout, OSError):
                        return
                    if msg is None:
                        return
                    reply = worker.dispatch(msg)
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
            threading.Thread(target=self._control_loop, daemon=True),
        ]

    # --- lifecycle ---

    def start(self) -> "WorkerService":
        self._register()
        for t in self._threads:
            t.start()
        return self

    def stop(self) -> None:
        """Graceful stop: heartbeats cease, server closes."""
        self._stopping.set()
        self._server.shutdown()
        self._server.server_close()
        if self._control_sock is not None:
            try:
                self._control_sock.close()
            except OSError:
                pass

    def kill(self) -> None:
        """Abrupt death for fault tests; indistinguishable from a crash."""
        self.stop()

    def busy_slots(self) -> int:
        with self._lock:
            return len(self.envs)

    # --- controller-facing RPC ---

    def dispatch(self, msg: wire.WireMessage) -> wire.WireMessage:
        try:
            if msg.variant == "Allocate":
                return self._handle_allocate(msg)
            if msg.variant == "Step":
                return self._handle_step(msg)
            if msg.variant == "Reset":
                session_id = msg.payload["session_id"]
                with self._lock:
                    env = self.envs.get(session_id)
                    if env is None:
                        return msg.error(self.worker_id, "UnknownSession", session_id)
                    env.reset()
                    self.step_cache.pop(session_id, None)
                return msg.reply("Ack", self.worker_id, {})
            if msg.variant == "Release":
                with self._lock:
                    self.envs.pop(msg.payload["session_id"], None)
                    self.step_cache.pop(msg.payload["session_id"], None)
                return msg.reply("Ack", self.worker_id, {})
            return msg.error(self.worker_id, "BadRequest",
                             f"unexpected variant {msg.variant}")
        except KeyError as exc:
            return msg.error(self.worker_id, "BadRequest", str(exc))

    def _handle_allocate(self, msg: wire.WireMessage) -> wire.WireMessage:
        session_id = msg.payload["session_id"]
        task_id = msg.payload["task_id"]
        seed = int(msg.payload.get("seed", 0))
        task = self.tasks.get(task_id)
        if task is None:
            return msg.error(self.worker_id, "UnknownTask", task_id)
        with self._lock:
            if len(self.envs) >= self.capacity:
                return msg.error(self.worker_id, "NoCapacity", task_id)
            env = create_env(task, seed, extra_apis=self.extra_apis)
            self.envs[session_id] = env
        return msg.reply("Allocated", self.worker_id,
                         {"session_id": session_id,
                          "slot_id": msg.payload.get("slot_id", ""),
                          "observation": env.observation()})

    def _handle_step(self, msg: wire.WireMessage) -> wire.WireMessage:
        session_id = msg.payload["session_id"]
        with self._lock:
            cached = self.step_cache.get(session_id, {}).get(msg.correlation_id)
            if cached is not None:
                return msg.reply("StepResult", self.worker_id, cached)
            env = self.envs.get(session_id)
        if env is None:
            return msg.error(self.worker_id, "UnknownSession", session_id)
        try:
            outcome = env.step(msg.payload["action"])
        except EpisodeFinished:
            return msg.error(self.worker_id, "EpisodeFinished", session_id)
        payload = {
            "observation": outcome.observation,
            "done": outcome.done,
            "accepted": outcome.accepted,
            "malformed": outcome.malformed,
            "changed": outcome.changed,
        }
        if outcome.done:
            payload["accuracy"] = env.verify()
        with self._lock:
            self.step_cache.setdefault(session_id, {})[msg.correlation_id] = payload
        return msg.reply("StepResult", self.worker_id, payload)

    # --- controller control link ---

    def _register(self) -> None:
        last = None
        for attempt in range(self.register_retries):
            try:
                sock = socket.create_connection(self.controller_addr, timeout=5.0)
                wire.write_message(sock, wire.WireMessage(
                    variant="Register", correlation_id=f"{self.worker_id}-reg",
                    sender_id=self.worker_id,
                    payload={"worker_id": self.worker_id,
                             "address": list(self.address),
                             "capacity": self.capacity}))
                reply = wire.read_message(sock)
                if reply is None or reply.variant == "Err":
                    sock.close()
                    raise ControllerUnreachable(
                        f"registration rejected: {reply.payload if reply else 'EOF'}")
                self._control_sock = sock
                return
            except ControllerUnreachable:
                raise
            except (OSError, ConnectionError, RequestTimeout) as exc:
                last = exc
                time.sleep(0.2 * (attempt + 1))
        raise ControllerUnreachable(str(last))

    def _control_loop(self) -> None:
        seq = 0
        while not self._stopping.is_set():
            self._stopping.wait(self.heartbeat_interval)
            if self._stopping.is_set():
                return
            seq += 1
            try:
                wire.write_message(self._control_sock, wire.WireMessage(
                    variant="Heartbeat",
                    correlation_id=f"{self.worker_id}-hb-{seq}",
                    sender_id=self.worker_id,
                    payload={"worker_id": self.worker_id,
                             "load_stats": {"busy": self.busy_slots()}}))
                wire.read_message(self._control_sock)
            except (OSError, ConnectionError, RequestTimeout):
                if self._stopping.is_set():
                    return
                try:
                    self._control_sock = socket.create_connection(
                        self.controller_addr, timeout=5.0)
                except OSError:
                    pass

"""Client side of the wire protocol: sessions, status queries, retries.

Each thread keeps one persistent connection to the controller. Step requests
carry fresh correlation ids; a timed-out request is retried once with the
same id, which the controller resolves from its idempotency cache instead of
stepping the env twice.
"""

from __future__ import annotations

import itertools
import socket
import threading

from ..envsim.env import StepOutcome
from ..errors import (ClusterUnavailable, NoCapacity, RequestTimeout,
                      SessionLost)
from . import wire

_ERROR_TYPES = {
    "NoCapacity": NoCapacity,
    "SessionLost": SessionLost,
    "RequestTimeout": RequestTimeout,
}


class ClusterClient:
    def __init__(self, controller_addr: tuple, client_id: str = "client",
                 timeout: float = 10.0):
        self.controller_addr = tuple(controller_addr)
        self.client_id = client_id
        self.timeout = timeout
        self._local = threading.local()
        self._counter = itertools.count(1)
        self._all_socks: list = []
        self._socks_lock = threading.Lock()

    def _sock(self) -> socket.socket:
        sock = getattr(self._local, "sock", None)
        if sock is None:
            try:
                sock = socket.create_connection(self.controller_addr,
                                                timeout=self.timeout)
            except OSError as exc:
                raise ClusterUnavailable(str(exc)) from exc
            self._local.sock = sock
            with self._socks_lock:
                self._all_socks.append(sock)
        return sock

    def close(self) -> None:
        """Close every connection this client ever opened (any thread)."""
        with self._socks_lock:
            for sock in self._all_socks:
                try:
                    sock.close()
                except OSError:
                    pass
            self._all_socks.clear()
        self._local = threading.local()

    def _drop_sock(self) -> None:
        sock = getattr(self._local, "sock", None)
        if sock is not None:
            try:
                sock.close()
            except OSError:
                pass
            self._local.sock = None

    def call(self, variant: str, payload: dict,
             correlation_id: str | None = None,
             retries: int = 1) -> wire.WireMessage:
        corr = correlation_id or f"{self.client_id}-{next(self._counter)}"
        msg = wire.WireMessage(variant=variant, correlation_id=corr,
                               sender_id=self.client_id, payload=payload)
        last = None
        for _ in range(retries + 1):
            try:
                sock = self._sock()
                wire.write_message(sock, msg)
                reply = wire.read_message(sock)
                if reply is None:
                    raise ConnectionError("controller closed connection")
                if reply.variant == "Err":
                    code = reply.payload.get("code", "")
                    exc_type = _ERROR_TYPES.get(code, ClusterUnavailable)
                    raise exc_type(reply.payload.get("detail", code))
                return reply
            except (OSError, ConnectionError, RequestTimeout) as exc:
                last = exc
                self._drop_sock()
        raise ClusterUnavailable(str(last))

    def status(self) -> dict:
        return self.call("StatusQuery", {}).payload

    def allocate(self, task, seed: int = 0) -> "ClusterSession":
        reply = self.call("Allocate", {"task_id": task.task_id, "seed": seed},
                          retries=0)
        return ClusterSession(self, task, reply.payload["session_id"],
                              reply.payload.get("observation", ""))


class ClusterSession:
    """Remote env session exposing the LocalSession surface."""

    def __init__(self, client: ClusterClient, task, session_id: str,
                 initial_observation: str):
        self.client = client
        self.task = task
        self.session_id = session_id
        self._last_observation = initial_observation
        self._accuracy: float | None = None

    def observation(self) -> str:
        return self._last_observation

    def step(self, raw_action: str) -> StepOutcome:
        corr = f"{self.session_id}-{next(self.client._counter)}"
        payload = self.client.call(
            "Step", {"session_id": self.session_id, "action": raw_action},
            correlation_id=corr).payload
        outcome = StepOutcome(observation=payload["observation"],
                              done=payload["done"],
                              accepted=payload["accepted"],
                              malformed=payload["malformed"],
                              changed=payload.get("changed", False))
        self._last_observation = outcome.observation
        if outcome.done:
            self._accuracy = payload.get("accuracy")
        return outcome

    def verify(self) -> float:
        if self._accuracy is None:
            raise SessionLost(f"{self.session_id}: no terminal accuracy yet")
        return self._accuracy

    def release(self) -> None:
        try:
            self.client.call("Release", {"session_id": self.session_id},
                             retries=0)
        except (SessionLost, ClusterUnavailable):
            pass

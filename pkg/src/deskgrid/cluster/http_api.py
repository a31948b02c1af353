"""HTTP surface over a running controller.

Dashboard-facing endpoints (all JSON):

  GET  /status                 point-in-time StatusReport
  GET  /metrics                full reward/entropy series
  POST /env/{session}/reset    re-create the session's env
  POST /train/pause            suspend the training loop between updates
  POST /train/resume
  POST /worker/{id}/drain      stop new allocations on a worker

POST /metrics is the trainer's publishing channel, and GET /train/state is
what the orchestrator polls between updates. When an assets directory is
configured the server also serves the operator console statically.
"""

from __future__ import annotations

import json
import mimetypes
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from ..errors import BindFailure, SessionLost, UnknownWorker
from .controller import Controller

_ENV_RESET = re.compile(r"^/env/([^/]+)/reset$")
_WORKER_DRAIN = re.compile(r"^/worker/([^/]+)/drain$")


class HttpApi:
    def __init__(self, controller: Controller, host: str = "127.0.0.1",
                 port: int = 0, assets_dir: str | None = None):
        self.controller = controller
        self.assets_dir = Path(assets_dir) if assets_dir else None
        api = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, code: int, doc: dict):
                body = json.dumps(doc).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _read_body(self) -> dict:
                length = int(self.headers.get("Content-Length") or 0)
                if not length:
                    return {}
                try:
                    return json.loads(self.rfile.read(length).decode("utf-8"))
                except ValueError:
                    return {}

            def do_GET(self):
                try:
                    if self.path == "/status":
                        return self._send(200, api.controller.snapshot_status())
                    if self.path == "/metrics":
                        return self._send(200,
                                          {"series": api.controller.metrics_series()})
                    if self.path == "/train/state":
                        return self._send(200, {
                            "paused": api.controller.is_paused(),
                            "phase": api.controller.state.train["phase"]})
                    if api.assets_dir is not None:
                        return self._serve_asset()
                    return self._send(404, {"error": "not found"})
                except BrokenPipeError:
                    pass

            def do_POST(self):
                try:
                    if self.path == "/train/pause":
                        api.controller.set_paused(True)
                        return self._send(200, {"paused": True})
                    if self.path == "/train/resume":
                        api.controller.set_paused(False)
                        return self._send(200, {"paused": False})
                    if self.path == "/metrics":
                        records = self._read_body().get("records", [])
                        api.controller.publish_metrics(records)
                        return self._send(200, {"appended": len(records)})
                    m = _ENV_RESET.match(self.path)
                    if m:
                        try:
                            api.controller.reset_session(m.group(1))
                            return self._send(200, {"reset": m.group(1)})
                        except SessionLost as exc:
                            return self._send(404, {"error": str(exc)})
                    m = _WORKER_DRAIN.match(self.path)
                    if m:
                        try:
                            api.controller.drain_worker(m.group(1))
                            return self._send(200, {"draining": m.group(1)})
                        except UnknownWorker as exc:
                            return self._send(404, {"error": str(exc)})
                    return self._send(404, {"error": "not found"})
                except BrokenPipeError:
                    pass

            def _serve_asset(self):
                rel = self.path.lstrip("/") or "index.html"
                target = (api.assets_dir / rel).resolve()
                if not str(target).startswith(str(api.assets_dir.resolve())) \
                        or not target.is_file():
                    return self._send(404, {"error": "not found"})
                body = target.read_bytes()
                ctype = mimetypes.guess_type(str(target))[0] or "text/plain"
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        try:
            self._server = ThreadingHTTPServer((host, port), Handler)
        except OSError as exc:
            raise BindFailure(f"{host}:{port}: {exc}") from exc
        self.address = self._server.server_address
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)

    def start(self) -> "HttpApi":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

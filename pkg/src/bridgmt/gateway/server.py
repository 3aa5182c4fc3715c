"""Local HTTP server exposing the scripted mocks over the real wire protocol.

Routes::

    POST /v1/chat/completions   chat
    POST /v1/embeddings         embedding
    POST /v1/qe                 quality estimation

Requests beyond ``max_concurrency`` in flight are answered with 429 so that
client retry paths get exercised.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any

from .mocks import make_handler

log = logging.getLogger(__name__)

ROUTES = {"/v1/chat/completions": "chat", "/v1/embeddings": "embedding", "/v1/qe": "qe"}


def load_scripts(path: str | Path) -> dict:
    scripts = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(scripts, dict):
        raise ValueError("mock scripts must be a JSON object")
    return scripts


class MockServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, scripts: dict, host: str = "127.0.0.1", port: int = 0, max_concurrency: int | None = None):
        self.handlers = {kind: make_handler(kind, scripts[kind]) for kind in ("chat", "embedding", "qe") if kind in scripts}
        limit = max_concurrency or int(scripts.get("max_concurrency", 16))
        self.slots = threading.BoundedSemaphore(limit)
        self.max_concurrency = limit
        self.lock = threading.Lock()
        self.served = 0
        super().__init__((host, port), _RequestHandler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="bridgmt-mock-server", daemon=True)
        t.start()
        return t


class _RequestHandler(BaseHTTPRequestHandler):
    server: MockServer

    def log_message(self, fmt: str, *args: Any) -> None:
        log.debug("mock-server: " + fmt, *args)

    def _send(self, status: int, body: Any) -> None:
        data = json.dumps(body, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self) -> None:  # noqa: N802
        kind = ROUTES.get(self.path)
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        if kind is None or kind not in self.server.handlers:
            self._send(404, {"error": f"no mock mounted at {self.path}"})
            return
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError:
            self._send(400, {"error": "request body is not JSON"})
            return
        if not self.server.slots.acquire(blocking=False):
            self._send(429, {"error": "too many concurrent requests"})
            return
        try:
            status, body = self.server.handlers[kind](payload)
        finally:
            self.server.slots.release()
        with self.server.lock:
            self.server.served += 1
        self._send(status, body)

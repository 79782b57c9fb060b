"""HTTP front for the gateway service.

Thread-per-request, so long-polling fetches never starve submissions.

    POST /v1/jobs                      {"requests": [...]} -> {"job_ids": [...]}
    GET  /v1/jobs/{id}?timeout_ms=N    judge response | 204 on timeout
    GET  /v1/workers                   {"workers": [...]}
    GET  /v1/healthz                   {"status": "ok", ...}

Errors: 400 bad request, 404 unknown job, 410 result already consumed,
503 broker unavailable.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from ..broker import AlreadyConsumedError, BrokerError, ChannelExpiredError, UnknownJobError
from .schema import ValidationError
from .service import GatewayService

MAX_BODY = 64 << 20


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    service: GatewayService  # set by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, doc: dict | None) -> None:
        body = b"" if doc is None else json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def do_POST(self):
        if urlparse(self.path).path != "/v1/jobs":
            self._send_json(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", 0))
        if length > MAX_BODY:
            self._send_json(400, {"error": "body too large"})
            return
        try:
            doc = json.loads(self.rfile.read(length).decode("utf-8"))
            requests = doc["requests"]
            if not isinstance(requests, list):
                raise ValidationError("'requests' must be a list")
            job_ids = self.service.submit_dicts(requests)
        except (ValidationError, ValueError, KeyError) as exc:
            self._send_json(400, {"error": str(exc)})
            return
        except BrokerError as exc:
            self._send_json(503, {"error": f"broker unavailable: {exc}"})
            return
        self._send_json(200, {"job_ids": job_ids})

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if parts == ["v1", "healthz"]:
            self._send_json(200, self.service.health())
            return
        if parts == ["v1", "workers"]:
            self._send_json(200, {"workers": self.service.workers()})
            return
        if len(parts) == 3 and parts[:2] == ["v1", "jobs"]:
            job_id = parts[2]
            query = parse_qs(url.query)
            try:
                timeout_ms = int(query.get("timeout_ms", ["0"])[0])
            except ValueError:
                self._send_json(400, {"error": "timeout_ms must be an integer"})
                return
            try:
                response = self.service.fetch(job_id, timeout_ms)
            except UnknownJobError:
                self._send_json(404, {"error": f"unknown job {job_id}"})
                return
            except AlreadyConsumedError:
                self._send_json(410, {"error": f"result for {job_id} already consumed"})
                return
            except ChannelExpiredError:
                self._send_json(410, {"error": f"result channel for {job_id} expired"})
                return
            except Exception as exc:  # internal invariant violation
                self._send_json(500, {"error": str(exc)})
                return
            if response is None:
                self._send_json(204, None)
                return
            self._send_json(200, response.to_dict())
            return
        self._send_json(404, {"error": "not found"})


def make_server(service: GatewayService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve_background(service: GatewayService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    server = make_server(service, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server

"""Synchronous facade over the gateway's HTTP API.

The gateway schema is used verbatim: POST /v1/jobs with a batch of judge
requests returns job ids; GET /v1/jobs/{id}?timeout_ms= long-polls one
result. ``await_rewards`` hides the polling behind a blocking call with
bounded concurrency (``max_in_flight`` worker threads, one keep-alive
connection each).

Guarantees:

* rewards come back in request order: rewards[i] belongs to requests[i];
* reward values are exactly what the gateway serialized (the JSON float
  round-trips bit-for-bit);
* a handle that produces nothing before its deadline raises
  RewardTimeoutError naming the job ids; there is no silent default reward.

Polling the same job id is idempotent: each GET either consumes the result
or returns empty, so connection retries never lose or duplicate a reward.
Submission is retried only for connections that failed before the request
was sent.
"""

from __future__ import annotations

import http.client
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional
from urllib.parse import urlparse


class GatewayError(RuntimeError):
    """The gateway answered, but with an error status."""


class GatewayUnavailable(GatewayError):
    """Could not reach the gateway at all."""


class RewardTimeoutError(GatewayError):
    def __init__(self, job_ids: list[str]):
        super().__init__(f"no reward within deadline for: {', '.join(job_ids)}")
        self.job_ids = job_ids


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_ms: int = 100


@dataclass(frozen=True)
class ClientConfig:
    base_url: str
    timeout_ms: int = 120_000
    max_in_flight: int = 8
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    poll_chunk_ms: int = 5_000

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        parsed = urlparse(self.base_url)
        if parsed.scheme != "http" or not parsed.hostname:
            raise ValueError(f"base_url must be http://host:port, got {self.base_url!r}")


class JudgeClient:
    def __init__(self, config: ClientConfig):
        self.config = config
        parsed = urlparse(config.base_url)
        self._host = parsed.hostname or "127.0.0.1"
        self._port = parsed.port or 80
        self._local = threading.local()

    # -- transport --------------------------------------------------------

    def _connection(self) -> http.client.HTTPConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = http.client.HTTPConnection(
                self._host, self._port, timeout=self.config.timeout_ms / 1000.0 + 30.0
            )
            self._local.conn = conn
        return conn

    def _reset_connection(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
        self._local.conn = None

    def _request(self, method: str, path: str, body: Optional[dict] = None) -> tuple[int, Optional[dict]]:
        payload = None if body is None else json.dumps(body).encode("utf-8")
        conn = self._connection()
        try:
            conn.request(method, path, body=payload,
                         headers={"Content-Type": "application/json"} if payload else {})
            response = conn.getresponse()
            raw = response.read()
        except OSError:
            self._reset_connection()
            raise
        doc = json.loads(raw) if raw else None
        return response.status, doc

    # -- operations ---------------------------------------------------------

    def healthcheck(self) -> dict:
        try:
            status, doc = self._request("GET", "/v1/healthz")
        except OSError as exc:
            raise GatewayUnavailable(f"healthcheck failed: {exc}") from exc
        if status != 200 or not isinstance(doc, dict):
            raise GatewayError(f"healthcheck returned {status}")
        return doc

    def submit_batch(self, requests: list[dict]) -> list[str]:
        """Submit judge requests; returns one handle (job id) per request.

        Connection-refused errors are retried with backoff; once bytes have
        gone out the error surfaces instead, since a blind resubmit could
        double-enqueue.
        """
        last: Optional[Exception] = None
        for attempt in range(self.config.retry.max_attempts):
            try:
                status, doc = self._request("POST", "/v1/jobs", {"requests": requests})
            except ConnectionRefusedError as exc:
                last = exc
                time.sleep(self.config.retry.backoff_ms * (attempt + 1) / 1000.0)
                continue
            except OSError as exc:
                raise GatewayUnavailable(f"submit failed mid-flight: {exc}") from exc
            if status != 200 or not isinstance(doc, dict):
                raise GatewayError(f"submit rejected: {status} {doc!r}")
            handles = doc["job_ids"]
            if len(handles) != len(requests):
                raise GatewayError("gateway returned a mismatched handle count")
            return handles
        raise GatewayUnavailable(f"gateway unreachable after retries: {last}")

    def fetch_reward(self, handle: str, timeout_ms: Optional[int] = None) -> Optional[float]:
        """Poll one handle until its deadline; None means not ready yet."""
        deadline = time.monotonic() + (timeout_ms if timeout_ms is not None
                                       else self.config.timeout_ms) / 1000.0
        while True:
            remaining_ms = int((deadline - time.monotonic()) * 1000)
            if remaining_ms <= 0:
                return None
            chunk = min(remaining_ms, self.config.poll_chunk_ms)
            status, doc = self._request("GET", f"/v1/jobs/{handle}?timeout_ms={chunk}")
            if status == 200 and isinstance(doc, dict):
                reward = doc.get("reward")
                if reward is None:
                    raise GatewayError(
                        f"job {handle} returned no reward; submit with mode "
                        "'reward' or 'both'"
                    )
                return float(reward)
            if status == 204:
                continue
            if status == 404:
                raise GatewayError(f"unknown job {handle}")
            if status == 410:
                raise GatewayError(f"result for {handle} was already consumed")
            raise GatewayError(f"unexpected status {status} for {handle}")

    def await_rewards(self, handles: list[str], timeout_ms: Optional[int] = None) -> list[float]:
        """Block until every handle has a reward; rewards[i] matches handles[i].

        Polls at most ``max_in_flight`` handles concurrently. Any handle
        still unresolved at its deadline raises RewardTimeoutError listing
        the stragglers; partial results are never silently substituted.
        """
        if not handles:
            return []
        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            results = list(pool.map(
                lambda h: self.fetch_reward(h, timeout_ms), handles
            ))
        missing = [h for h, r in zip(handles, results) if r is None]
        if missing:
            raise RewardTimeoutError(missing)
        return [r for r in results if r is not None]

    def submit_and_await(self, requests: list[dict],
                         timeout_ms: Optional[int] = None) -> list[float]:
        return self.await_rewards(self.submit_batch(requests), timeout_ms)

    def close(self) -> None:
        self._reset_connection()

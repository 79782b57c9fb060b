"""In-memory broker: one lock, condition-signaled blocking pops.

All operations are linearizable behind a single mutex; blocking pops and
result awaits wait on conditions with deadlines. The clock is injectable
(epoch milliseconds) so lease and channel expiry are testable without
sleeping.
"""

from __future__ import annotations

import heapq
import itertools
import json
import os
import threading
import time
from typing import Callable, Optional

from . import (
    DEFAULT_MAX_RETRIES,
    DEFAULT_PAYLOAD_CAP,
    DEFAULT_RESULT_TTL_MS,
    DEFAULT_WORKER_TTL_MS,
    AlreadyConsumedError,
    ChannelExpiredError,
    DuplicateResultError,
    LeaseExpiredError,
    QueuedJob,
    QueueFullError,
    UnknownJobError,
    WorkerLease,
)

_QUEUED, _LEASED, _RESULTED, _DEAD = "queued", "leased", "resulted", "dead"


class _Job:
    __slots__ = ("job_id", "score", "payload", "attempts", "state", "worker_id")

    def __init__(self, job_id: str, score: int, payload: bytes):
        self.job_id = job_id
        self.score = score
        self.payload = payload
        self.attempts = 0
        self.state = _QUEUED
        self.worker_id: Optional[str] = None


class _Channel:
    __slots__ = ("items", "pushed", "consumed", "expires_ms")

    def __init__(self, expires_ms: float):
        self.items: list[bytes] = []
        self.pushed = False
        self.consumed = False
        self.expires_ms = expires_ms


class MemoryBroker:
    def __init__(
        self,
        *,
        max_retries: int = DEFAULT_MAX_RETRIES,
        result_ttl_ms: int = DEFAULT_RESULT_TTL_MS,
        payload_cap: int = DEFAULT_PAYLOAD_CAP,
        max_queue: Optional[int] = None,
        clock: Optional[Callable[[], float]] = None,
    ):
        self._max_retries = max_retries
        self._result_ttl_ms = result_ttl_ms
        self._payload_cap = payload_cap
        self._max_queue = max_queue
        self._clock = clock or (lambda: time.time() * 1000.0)

        self._lock = threading.Lock()
        self._queue_cv = threading.Condition(self._lock)
        self._result_cv = threading.Condition(self._lock)
        self._heap: list[tuple[int, int, str]] = []  # (score, seq, job_id)
        self._jobs: dict[str, _Job] = {}
        self._channels: dict[str, _Channel] = {}
        self._workers: dict[str, WorkerLease] = {}
        self._dead: list[str] = []
        self._audit: list[dict] = []
        self._seq = itertools.count()
        self._last_score = 0
        self._node = f"{os.getpid():x}"

    # -- queue ----------------------------------------------------------

    def enqueue(self, payloads: list[bytes]) -> list[str]:
        for p in payloads:
            if len(p) > self._payload_cap:
                raise QueueFullError(f"payload of {len(p)} bytes exceeds cap {self._payload_cap}")
        with self._lock:
            if self._max_queue is not None:
                depth = sum(1 for j in self._jobs.values() if j.state == _QUEUED)
                if depth + len(payloads) > self._max_queue:
                    raise QueueFullError(f"queue bound {self._max_queue} reached")
            now = self._clock()
            ids: list[str] = []
            for payload in payloads:
                seq = next(self._seq)
                self._last_score = max(self._last_score + 1, int(now * 1000))
                job_id = f"{self._last_score:016d}.{self._node}.{seq:06d}"
                job = _Job(job_id, self._last_score, payload)
                self._jobs[job_id] = job
                self._channels[job_id] = _Channel(now + self._result_ttl_ms)
                heapq.heappush(self._heap, (job.score, seq, job_id))
                ids.append(job_id)
            if ids:
                self._queue_cv.notify_all()
            return ids

    def pop_next(self, worker_id: str, block_timeout_ms: int = 0) -> Optional[QueuedJob]:
        deadline = time.monotonic() + block_timeout_ms / 1000.0
        with self._lock:
            self._require_live(worker_id)
            while True:
                while self._heap:
                    score, seq, job_id = heapq.heappop(self._heap)
                    job = self._jobs.get(job_id)
                    if job is None or job.state != _QUEUED:
                        continue  # stale heap entry
                    job.state = _LEASED
                    job.worker_id = worker_id
                    job.attempts += 1
                    return QueuedJob(job_id, job.score, job.payload, job.attempts)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._queue_cv.wait(remaining)
                self._require_live(worker_id)

    # -- results ---------------------------------------------------------

    def push_result(self, job_id: str, result: bytes, worker_id: Optional[str] = None) -> None:
        with self._lock:
            channel = self._channels.get(job_id)
            if channel is None:
                raise UnknownJobError(job_id)
            if self._clock() >= channel.expires_ms:
                raise ChannelExpiredError(job_id)
            if channel.pushed:
                raise DuplicateResultError(job_id)
            channel.pushed = True
            channel.items.append(result)
            job = self._jobs.get(job_id)
            if job is not None:
                job.state = _RESULTED
                job.worker_id = None
            self._result_cv.notify_all()

    def await_result(self, job_id: str, block_timeout_ms: int = 0) -> Optional[bytes]:
        deadline = time.monotonic() + block_timeout_ms / 1000.0
        with self._lock:
            while True:
                channel = self._channels.get(job_id)
                if channel is None:
                    raise UnknownJobError(job_id)
                if channel.items:
                    channel.consumed = True
                    return channel.items.pop(0)
                if channel.consumed:
                    raise AlreadyConsumedError(job_id)
                if self._clock() >= channel.expires_ms:
                    raise ChannelExpiredError(job_id)
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._result_cv.wait(remaining)

    # -- workers ----------------------------------------------------------

    def register_worker(self, worker_id: str, ttl_ms: int = DEFAULT_WORKER_TTL_MS) -> None:
        with self._lock:
            self._workers[worker_id] = WorkerLease(worker_id, ttl_ms, self._clock())

    def heartbeat(self, worker_id: str) -> None:
        with self._lock:
            lease = self._workers.get(worker_id)
            ttl = lease.ttl_ms if lease else DEFAULT_WORKER_TTL_MS
            self._workers[worker_id] = WorkerLease(worker_id, ttl, self._clock())

    def workers(self) -> list[WorkerLease]:
        with self._lock:
            return list(self._workers.values())

    def reap_dead(self, now_ms: Optional[float] = None) -> list[str]:
        """De-register expired workers; requeue or dead-letter their jobs."""
        requeued: list[str] = []
        with self._lock:
            now = self._clock() if now_ms is None else now_ms
            expired = [
                lease.worker_id
                for lease in self._workers.values()
                if now - lease.last_beat >= lease.ttl_ms
            ]
            for worker_id in expired:
                del self._workers[worker_id]
                stranded = [
                    j for j in self._jobs.values()
                    if j.state == _LEASED and j.worker_id == worker_id
                ]
                for job in stranded:
                    job.worker_id = None
                    if job.attempts > self._max_retries:
                        job.state = _DEAD
                        self._dead.append(job.job_id)
                        self._audit.append(
                            {"event": "dead_letter", "job_id": job.job_id,
                             "worker_id": worker_id, "attempts": job.attempts}
                        )
                    else:
                        job.state = _QUEUED
                        heapq.heappush(self._heap, (job.score, next(self._seq), job.job_id))
                        requeued.append(job.job_id)
                        self._audit.append(
                            {"event": "requeue", "job_id": job.job_id,
                             "worker_id": worker_id, "attempts": job.attempts}
                        )
            if requeued:
                self._queue_cv.notify_all()
        return requeued

    # -- introspection ----------------------------------------------------

    def queue_depth(self) -> int:
        with self._lock:
            return sum(1 for j in self._jobs.values() if j.state == _QUEUED)

    def in_flight(self, worker_id: str) -> list[str]:
        with self._lock:
            return [
                j.job_id for j in self._jobs.values()
                if j.state == _LEASED and j.worker_id == worker_id
            ]

    def dead_letter(self) -> list[str]:
        with self._lock:
            return list(self._dead)

    def audit_log(self) -> list[dict]:
        with self._lock:
            return [dict(e) for e in self._audit]

    def close(self) -> None:
        pass

    # -- helpers ----------------------------------------------------------

    def _require_live(self, worker_id: str) -> None:
        lease = self._workers.get(worker_id)
        if lease is None or self._clock() - lease.last_beat >= lease.ttl_ms:
            raise LeaseExpiredError(worker_id)


def dump_state(broker: MemoryBroker) -> str:
    """Debug snapshot (JSON) of job states; not part of the broker contract."""
    with broker._lock:
        return json.dumps(
            {jid: job.state for jid, job in broker._jobs.items()}, sort_keys=True
        )

"""Broker client for an external RESP key-value store.

Maps the broker contract onto store primitives:

* queue        — sorted set ``queue:tasks``; members are job ids, scores
                 are enqueue timestamps in microseconds; pop via blocking
                 min-pop so no job reaches two workers.
* job state    — hash ``job:<id>`` (payload, attempts, score).
* results      — list ``result:<id>`` plus flags hash ``resmeta:<id>``;
                 push is RPUSH guarded by a pushed-flag, retrieval is a
                 blocking list pop, so consumption is exactly-once.
* workers      — set ``workers`` of ids + per-worker TTL key
                 ``worker:<id>`` refreshed by heartbeats.
* in-flight    — set ``inflight:<worker>`` consulted by the reaper.

Same-score FIFO holds because job ids embed the per-node sequence number
and the store orders equal-score members lexicographically.
"""

from __future__ import annotations

import json
import os
import threading
import time
from typing import Optional

from . import (
    DEFAULT_MAX_RETRIES,
    DEFAULT_PAYLOAD_CAP,
    DEFAULT_RESULT_TTL_MS,
    DEFAULT_WORKER_TTL_MS,
    AlreadyConsumedError,
    DuplicateResultError,
    LeaseExpiredError,
    QueuedJob,
    QueueFullError,
    UnknownJobError,
    WorkerLease,
)
from .resp import RespConnection

_ALIVE = b"1"


class RespBroker:
    def __init__(
        self,
        host: str,
        port: int,
        *,
        namespace: str = "sj",
        max_retries: int = DEFAULT_MAX_RETRIES,
        result_ttl_ms: int = DEFAULT_RESULT_TTL_MS,
        payload_cap: int = DEFAULT_PAYLOAD_CAP,
        max_queue: Optional[int] = None,
    ):
        self._host = host
        self._port = port
        self._ns = namespace
        self._max_retries = max_retries
        self._result_ttl_ms = result_ttl_ms
        self._payload_cap = payload_cap
        self._max_queue = max_queue
        self._local = threading.local()
        self._seq = 0
        self._seq_lock = threading.Lock()
        self._node = f"{os.getpid():x}"
        self._worker_ttls: dict[str, int] = {}
        self._conn().command("PING")

    # -- connection and keys ------------------------------------------------

    def _conn(self) -> RespConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = RespConnection(self._host, self._port)
            self._local.conn = conn
        return conn

    def close(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    def _k(self, *parts: str) -> str:
        return ":".join((self._ns,) + parts)

    # -- queue ----------------------------------------------------------------

    def enqueue(self, payloads: list[bytes]) -> list[str]:
        for p in payloads:
            if len(p) > self._payload_cap:
                raise QueueFullError(f"payload of {len(p)} bytes exceeds cap {self._payload_cap}")
        if not payloads:
            return []
        if self._max_queue is not None:
            depth = self._conn().command("ZCARD", self._k("queue", "tasks"))
            if int(depth) + len(payloads) > self._max_queue:
                raise QueueFullError(f"queue bound {self._max_queue} reached")

        now_us = int(time.time() * 1_000_000)
        ids: list[str] = []
        commands: list[list] = []
        zadd_args: list = ["ZADD", self._k("queue", "tasks")]
        with self._seq_lock:
            last = 0
            for payload in payloads:
                self._seq += 1
                score = max(last + 1, now_us)
                last = score
                job_id = f"{score:016d}.{self._node}.{self._seq:06d}"
                ids.append(job_id)
                commands.append(
                    ["HSET", self._k("job", job_id),
                     "payload", payload, "attempts", 0, "score", score]
                )
                zadd_args.extend([score, job_id])
        # Payload hashes land before the single ZADD, so a concurrent popper
        # never sees a queued id without its payload; one pipeline, one trip.
        commands.append(zadd_args)
        self._conn().pipeline(commands)
        return ids

    def pop_next(self, worker_id: str, block_timeout_ms: int = 0) -> Optional[QueuedJob]:
        conn = self._conn()
        deadline = time.monotonic() + block_timeout_ms / 1000.0
        while True:
            if not conn.command("EXISTS", self._k("worker", worker_id)):
                raise LeaseExpiredError(worker_id)
            remaining = max(deadline - time.monotonic(), 0.0)
            if remaining < 0.005:
                # A zero timeout would block forever on the wire; poll once.
                reply = conn.command("ZPOPMIN", self._k("queue", "tasks"))
                if not reply:
                    return None
                reply = [self._k("queue", "tasks"), reply[0], reply[1]]
            else:
                reply = conn.command(
                    "BZPOPMIN", self._k("queue", "tasks"), round(remaining, 3),
                    timeout=remaining + 5.0,
                )
            if reply is None:
                return None
            _, member, score_raw = reply
            job_id = member.decode()
            job_key = self._k("job", job_id)
            attempts = conn.command("HINCRBY", job_key, "attempts", 1)
            payload = conn.command("HGET", job_key, "payload")
            if payload is None:
                continue  # job record expired under us; take the next one
            conn.command("SADD", self._k("inflight", worker_id), job_id)
            return QueuedJob(job_id, int(float(score_raw)), payload, int(attempts))

    # -- results -----------------------------------------------------------

    def push_result(self, job_id: str, result: bytes, worker_id: Optional[str] = None) -> None:
        conn = self._conn()
        meta = self._k("resmeta", job_id)
        if not conn.command("EXISTS", self._k("job", job_id)):
            raise UnknownJobError(job_id)
        if not conn.command("HSETNX", meta, "pushed", 1):
            raise DuplicateResultError(job_id)
        commands = [
            ["RPUSH", self._k("result", job_id), result],
            ["PEXPIRE", self._k("result", job_id), self._result_ttl_ms],
            ["PEXPIRE", meta, self._result_ttl_ms * 2],
        ]
        if worker_id is not None:
            commands.append(["SREM", self._k("inflight", worker_id), job_id])
        conn.pipeline(commands)

    def await_result(self, job_id: str, block_timeout_ms: int = 0) -> Optional[bytes]:
        conn = self._conn()
        timeout_s = block_timeout_ms / 1000.0
        if timeout_s < 0.005:
            value = conn.command("LPOP", self._k("result", job_id))
            reply = None if value is None else [self._k("result", job_id), value]
        else:
            reply = conn.command(
                "BLPOP", self._k("result", job_id), round(timeout_s, 3),
                timeout=timeout_s + 5.0,
            )
        meta = self._k("resmeta", job_id)
        if reply is not None:
            conn.command("HSETNX", meta, "consumed", 1)
            return reply[1]
        if conn.command("HGET", meta, "consumed") is not None:
            raise AlreadyConsumedError(job_id)
        if conn.command("HGET", meta, "pushed") is not None:
            # Pushed, list empty, consumed flag not yet visible: a racing
            # awaiter won the pop.
            raise AlreadyConsumedError(job_id)
        if not conn.command("EXISTS", self._k("job", job_id)):
            raise UnknownJobError(job_id)
        return None

    # -- workers ------------------------------------------------------------

    def register_worker(self, worker_id: str, ttl_ms: int = DEFAULT_WORKER_TTL_MS) -> None:
        self._worker_ttls[worker_id] = ttl_ms
        self._conn().pipeline([
            ["SADD", self._k("workers"), worker_id],
            ["PSETEX", self._k("worker", worker_id), ttl_ms, ttl_ms],
        ])

    def heartbeat(self, worker_id: str) -> None:
        ttl = self._worker_ttls.get(worker_id, DEFAULT_WORKER_TTL_MS)
        self._conn().command("PSETEX", self._k("worker", worker_id), ttl, ttl)

    def workers(self) -> list[WorkerLease]:
        conn = self._conn()
        snapshot = []
        now = time.time() * 1000.0
        for member in conn.command("SMEMBERS", self._k("workers")) or []:
            worker_id = member.decode()
            ttl_value = conn.command("GET", self._k("worker", worker_id))
            if ttl_value is None:
                continue  # expired; reap will de-register
            ttl_ms = int(ttl_value)
            remaining = conn.command("PTTL", self._k("worker", worker_id))
            last_beat = now - (ttl_ms - max(int(remaining), 0))
            snapshot.append(WorkerLease(worker_id, ttl_ms, last_beat))
        return snapshot

    def reap_dead(self, now_ms: Optional[float] = None) -> list[str]:
        conn = self._conn()
        requeued: list[str] = []
        for member in conn.command("SMEMBERS", self._k("workers")) or []:
            worker_id = member.decode()
            if conn.command("EXISTS", self._k("worker", worker_id)):
                continue  # lease still live
            # Claim this worker: only one reaper wins the SREM.
            if not conn.command("SREM", self._k("workers"), worker_id):
                continue
            inflight_key = self._k("inflight", worker_id)
            stranded = conn.command("SMEMBERS", inflight_key) or []
            conn.command("DEL", inflight_key)
            for raw in stranded:
                job_id = raw.decode()
                if conn.command("HGET", self._k("resmeta", job_id), "pushed") is not None:
                    continue  # finished before the worker died
                job_key = self._k("job", job_id)
                attempts = conn.command("HGET", job_key, "attempts")
                score = conn.command("HGET", job_key, "score")
                if attempts is None or score is None:
                    continue
                event = {"job_id": job_id, "worker_id": worker_id,
                         "attempts": int(attempts)}
                if int(attempts) > self._max_retries:
                    conn.pipeline([
                        ["RPUSH", self._k("dead", "letter"), job_id],
                        ["RPUSH", self._k("audit"),
                         json.dumps({"event": "dead_letter", **event})],
                    ])
                else:
                    conn.pipeline([
                        ["ZADD", self._k("queue", "tasks"), int(score), job_id],
                        ["RPUSH", self._k("audit"),
                         json.dumps({"event": "requeue", **event})],
                    ])
                    requeued.append(job_id)
        return requeued

    # -- introspection --------------------------------------------------------

    def queue_depth(self) -> int:
        return int(self._conn().command("ZCARD", self._k("queue", "tasks")))

    def in_flight(self, worker_id: str) -> list[str]:
        members = self._conn().command("SMEMBERS", self._k("inflight", worker_id)) or []
        return [m.decode() for m in members]

    def dead_letter(self) -> list[str]:
        items = self._conn().command("LRANGE", self._k("dead", "letter"), 0, -1) or []
        return [i.decode() for i in items]

    def audit_log(self) -> list[dict]:
        items = self._conn().command("LRANGE", self._k("audit"), 0, -1) or []
        return [json.loads(i) for i in items]

    def flush_namespace(self) -> None:
        """Drop every key in this broker's namespace (test support)."""
        conn = self._conn()
        keys = conn.command("KEYS", f"{self._ns}:*") or []
        if keys:
            conn.command("DEL", *[k for k in keys])

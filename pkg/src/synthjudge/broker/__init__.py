"""Queue and state management for distributed judging.

Two interchangeable brokers expose the same operations: a time-prioritized
task queue with atomic pop, a dedicated single-consumer result channel per
job, and TTL worker heartbeats with crash recovery by requeue.

* ``MemoryBroker`` — in-process, lock + condition based; workers are
  threads of the same process.
* ``RespBroker`` — client for an external key-value store speaking the
  RESP wire protocol (sorted-set add / blocking min-pop for the queue,
  list push / blocking pop for results, TTL keys for heartbeats). Use any
  RESP-compatible server; ``synthjudge.broker.miniresp`` ships one for
  development and tests.

Jobs are delivered at most once to a live worker; a dead worker's in-flight
jobs are requeued with an attempt counter and move to the dead-letter list
after ``max_retries`` (default 2) retries.
"""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_MAX_RETRIES = 2
DEFAULT_RESULT_TTL_MS = 3_600_000  # 1 hour
DEFAULT_WORKER_TTL_MS = 10_000
DEFAULT_PAYLOAD_CAP = 16 << 20  # 16 MiB


class BrokerError(RuntimeError):
    pass


class QueueFullError(BrokerError):
    pass


class LeaseExpiredError(BrokerError):
    pass


class UnknownJobError(BrokerError):
    pass


class DuplicateResultError(BrokerError):
    pass


class ChannelExpiredError(BrokerError):
    pass


class AlreadyConsumedError(BrokerError):
    pass


@dataclass(frozen=True)
class QueuedJob:
    job_id: str
    priority_score: int  # enqueue timestamp, microseconds
    payload: bytes
    attempts: int  # deliveries so far, including this one


@dataclass(frozen=True)
class WorkerLease:
    worker_id: str
    ttl_ms: int
    last_beat: float  # epoch milliseconds


def make_broker(url: str, **kwargs):
    """Build a broker from a location string: ``memory`` or ``resp://host:port``."""
    from .external import RespBroker
    from .memory import MemoryBroker

    if url == "memory":
        return MemoryBroker(**kwargs)
    if url.startswith("resp://"):
        hostport = url[len("resp://"):]
        host, _, port = hostport.partition(":")
        if not port:
            raise ValueError(f"broker url needs a port: {url!r}")
        return RespBroker(host or "127.0.0.1", int(port), **kwargs)
    raise ValueError(f"unknown broker url {url!r} (expected 'memory' or 'resp://host:port')")


__all__ = [
    "BrokerError",
    "QueueFullError",
    "LeaseExpiredError",
    "UnknownJobError",
    "DuplicateResultError",
    "ChannelExpiredError",
    "AlreadyConsumedError",
    "QueuedJob",
    "WorkerLease",
    "make_broker",
    "DEFAULT_MAX_RETRIES",
    "DEFAULT_RESULT_TTL_MS",
    "DEFAULT_WORKER_TTL_MS",
    "DEFAULT_PAYLOAD_CAP",
]

"""Gateway core: submission fan-in, result assembly, health, audit log.

Framework-free so it can sit behind any transport; the HTTP layer in
``httpd`` is a thin shim over this class. Submissions return immediately
with job ids; ``fetch`` blocks on the per-job result channel and is
exactly-once. Every assembled response is appended to an audit log (JSONL)
before being handed out, so a consumed channel never loses data.

Job granularity is the whole request by default; ``granularity="case"``
fans each suite case out as its own broker job and merges on fetch.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from typing import Optional

from ..reward import RewardInput, compute_reward
from ..sandbox import ExtractionStatus
from .schema import JudgeRequest, JudgeResponse, ValidationError


class GatewayService:
    def __init__(
        self,
        broker,
        *,
        audit_path: Optional[str] = None,
        granularity: str = "request",
        sweep_interval_ms: int = 1_000,
        default_limits=None,
    ):
        if granularity not in ("request", "case"):
            raise ValueError(f"unknown granularity {granularity!r}")
        self._broker = broker
        self._default_limits = default_limits
        self._granularity = granularity
        self._audit_path = audit_path
        self._audit_lock = threading.Lock()
        # parent id -> (child ids, responses fetched so far by child id)
        self._fanout: dict[str, tuple[list[str], dict[str, JudgeResponse]]] = {}
        self._fanout_lock = threading.Lock()
        self._sweep_interval_ms = sweep_interval_ms
        self._sweeper_stop = threading.Event()
        self._sweeper: Optional[threading.Thread] = None

    # -- lifecycle ----------------------------------------------------------

    def start_sweeper(self) -> None:
        """Reap dead workers every sweep interval (requeues their jobs)."""
        if self._sweeper is not None:
            return
        def sweep():
            while not self._sweeper_stop.wait(self._sweep_interval_ms / 1000.0):
                try:
                    self._broker.reap_dead()
                except Exception:
                    pass
        self._sweeper = threading.Thread(target=sweep, daemon=True)
        self._sweeper.start()

    def stop(self) -> None:
        self._sweeper_stop.set()
        if self._sweeper is not None:
            self._sweeper.join(timeout=2.0)
            self._sweeper = None

    # -- submission -----------------------------------------------------------

    def submit(self, requests: list[JudgeRequest]) -> list[str]:
        """Enqueue a batch; returns job ids immediately (non-blocking)."""
        if self._granularity == "request":
            ids = self._broker.enqueue([r.to_payload() for r in requests])
            return ids

        parent_ids: list[str] = []
        payloads: list[bytes] = []
        spans: list[tuple[str, int]] = []
        for request in requests:
            parent = f"fan-{uuid.uuid4().hex}"
            parent_ids.append(parent)
            spans.append((parent, len(request.suite)))
            for case in request.suite:
                child = JudgeRequest(
                    solution_raw=request.solution_raw,
                    solution_code=request.solution_code,
                    suite=(case,),
                    limits=request.limits,
                    mode=request.mode,
                    task_id=request.task_id,
                    entry_signature=request.entry_signature,
                )
                payloads.append(child.to_payload())
        child_ids = self._broker.enqueue(payloads)
        cursor = 0
        with self._fanout_lock:
            for parent, span in spans:
                self._fanout[parent] = (child_ids[cursor:cursor + span], {})
                cursor += span
        return parent_ids

    def submit_dicts(self, docs: list[dict]) -> list[str]:
        """Parse-and-submit; raises ValidationError naming the bad item."""
        requests = []
        for i, doc in enumerate(docs):
            if self._default_limits is not None and not doc.get("limits"):
                doc = {**doc, "limits": {
                    "wall_time_ms": self._default_limits.wall_time_ms,
                    "cpu_time_ms": self._default_limits.cpu_time_ms,
                    "memory_bytes": self._default_limits.memory_bytes,
                    "output_cap_bytes": self._default_limits.output_cap_bytes,
                }}
            try:
                requests.append(JudgeRequest.from_dict(doc))
            except ValidationError as exc:
                raise ValidationError(f"request {i}: {exc}") from exc
        return self.submit(requests)

    # -- retrieval ------------------------------------------------------------

    def fetch(self, job_id: str, block_timeout_ms: int = 0) -> Optional[JudgeResponse]:
        """Exactly-once blocking retrieval; audits the response on the way out."""
        with self._fanout_lock:
            fanout = self._fanout.get(job_id)
        if fanout is not None:
            return self._fetch_fanout(job_id, fanout, block_timeout_ms)

        payload = self._broker.await_result(job_id, block_timeout_ms)
        if payload is None:
            return None
        response = JudgeResponse.from_payload(payload)
        self._check_reward(response)
        self._audit(response)
        return response

    def _fetch_fanout(
        self,
        parent_id: str,
        fanout: tuple[list[str], dict[str, JudgeResponse]],
        block_timeout_ms: int,
    ) -> Optional[JudgeResponse]:
        children, fetched = fanout
        deadline = time.monotonic() + block_timeout_ms / 1000.0
        for child in children:
            if child in fetched:
                continue  # consumed during an earlier timed-out fetch
            remaining_ms = max(int((deadline - time.monotonic()) * 1000), 0)
            payload = self._broker.await_result(child, remaining_ms)
            if payload is None:
                return None  # partial progress kept; a later fetch resumes
            fetched[child] = JudgeResponse.from_payload(payload)

        parts = [fetched[child] for child in children]
        verdicts: tuple[str, ...] = sum((p.verdicts for p in parts), ())
        timing: tuple[int, ...] = sum((p.timing_ms for p in parts), ())
        passed = sum(p.passed for p in parts)
        total = sum(p.total for p in parts)
        reward = None
        if parts[0].reward is not None:
            reward = compute_reward(
                RewardInput(
                    extraction_status=ExtractionStatus(parts[0].extraction_status),
                    syntax_ok=parts[0].syntax_ok,
                    passed=passed,
                    total=total,
                )
            ).value
        merged = JudgeResponse(
            job_id=parent_id,
            verdicts=verdicts,
            passed=passed,
            total=total,
            reward=reward,
            timing_ms=timing,
            extraction_status=parts[0].extraction_status,
            syntax_ok=parts[0].syntax_ok,
        )
        with self._fanout_lock:
            self._fanout.pop(parent_id, None)
        self._audit(merged)
        return merged

    # -- introspection -----------------------------------------------------

    def workers(self) -> list[dict]:
        now = time.time() * 1000.0
        return [
            {
                "worker_id": lease.worker_id,
                "ttl_ms": lease.ttl_ms,
                "last_beat": lease.last_beat,
                "live": now - lease.last_beat < lease.ttl_ms,
            }
            for lease in self._broker.workers()
        ]

    def health(self) -> dict:
        return {
            "status": "ok",
            "queue_depth": self._broker.queue_depth(),
            "workers": len(self._broker.workers()),
        }

    # -- internals -----------------------------------------------------------

    @staticmethod
    def _check_reward(response: JudgeResponse) -> None:
        if response.reward is None:
            return
        expected = compute_reward(
            RewardInput(
                extraction_status=ExtractionStatus(response.extraction_status),
                syntax_ok=response.syntax_ok,
                passed=response.passed,
                total=response.total,
            )
        ).value
        if expected != response.reward:
            raise AssertionError(
                f"reward mismatch for {response.job_id}: "
                f"worker sent {response.reward}, recomputed {expected}"
            )

    def _audit(self, response: JudgeResponse) -> None:
        if self._audit_path is None:
            return
        line = json.dumps(response.to_dict(), sort_keys=True)
        with self._audit_lock:
            with open(self._audit_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

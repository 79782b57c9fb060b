"""Worker side: pop judge jobs, run the suite in the sandbox, push results."""

from __future__ import annotations

import threading
from typing import Optional

from ..broker import DuplicateResultError, LeaseExpiredError, UnknownJobError
from ..reward import RewardInput, compute_reward
from ..sandbox import (
    ExtractionStatus,
    ProgramSource,
    Verdict,
    check_syntax,
    classify_failure,
    extract_code,
    has_entry_symbol,
    required_entry_symbol,
    run_one,
)
from .schema import JudgeRequest, JudgeResponse


def execute_request(
    request: JudgeRequest,
    job_id: str = "",
    *,
    python_exe: Optional[str] = None,
    scratch_root: Optional[str] = None,
) -> JudgeResponse:
    """Judge one request: extraction, parse gate, then per-case execution.

    A response that fails extraction, parsing, or the entry-signature scan
    never executes; every case reports the same classification verdict.
    """
    if request.solution_code is not None:
        source = ProgramSource.from_code(request.solution_code)
    else:
        source = extract_code(request.solution_raw or "")

    total = len(request.suite)
    syntax_ok = False
    verdicts: list[Verdict] = []
    timing: list[int] = []

    if source.extraction_status is not ExtractionStatus.EXTRACTED:
        static = classify_failure(source)
        verdicts = [static] * total
        timing = [0] * total
    else:
        syntax_ok = check_syntax(source) is Verdict.PASS
        symbol = required_entry_symbol(request.entry_signature)
        if not syntax_ok:
            verdicts = [Verdict.SYNTAX_ERROR] * total
            timing = [0] * total
        elif symbol and not has_entry_symbol(source.extracted_code or "", symbol):
            verdicts = [Verdict.SIGNATURE_MISMATCH] * total
            timing = [0] * total
        else:
            for case in request.suite:
                outcome = run_one(
                    source, case.input, request.limits,
                    python_exe=python_exe, scratch_root=scratch_root,
                )
                verdicts.append(classify_failure(source, outcome, case.expected))
                timing.append(outcome.wall_time_ms)

    passed = sum(1 for v in verdicts if v is Verdict.PASS)
    reward = None
    if request.mode.wants_reward:
        reward = compute_reward(
            RewardInput(
                extraction_status=source.extraction_status,
                syntax_ok=syntax_ok,
                passed=passed,
                total=total,
            )
        ).value

    return JudgeResponse(
        job_id=job_id,
        verdicts=tuple(v.value for v in verdicts),
        passed=passed,
        total=total,
        reward=reward,
        timing_ms=tuple(timing),
        extraction_status=source.extraction_status.value,
        syntax_ok=syntax_ok,
    )


def run_worker(
    broker,
    worker_id: str,
    *,
    ttl_ms: int = 5_000,
    poll_timeout_ms: int = 500,
    stop_event: Optional[threading.Event] = None,
    max_jobs: Optional[int] = None,
    python_exe: Optional[str] = None,
    scratch_root: Optional[str] = None,
) -> int:
    """Worker loop: heartbeat lease, pop, execute, push. Returns jobs done.

    Exits when ``stop_event`` is set (checked between jobs) or after
    ``max_jobs``. Duplicate pushes after a requeue race are ignored; the
    first result wins.
    """
    stop = stop_event or threading.Event()
    broker.register_worker(worker_id, ttl_ms)

    def beat():
        while not stop.wait(ttl_ms / 3000.0):
            try:
                broker.heartbeat(worker_id)
            except Exception:
                return

    beater = threading.Thread(target=beat, daemon=True)
    beater.start()

    done = 0
    try:
        while not stop.is_set() and (max_jobs is None or done < max_jobs):
            try:
                job = broker.pop_next(worker_id, poll_timeout_ms)
            except LeaseExpiredError:
                broker.register_worker(worker_id, ttl_ms)
                continue
            if job is None:
                continue
            request = JudgeRequest.from_payload(job.payload)
            response = execute_request(
                request, job.job_id,
                python_exe=python_exe, scratch_root=scratch_root,
            )
            try:
                broker.push_result(job.job_id, response.to_payload(), worker_id)
            except (DuplicateResultError, UnknownJobError):
                pass
            done += 1
    finally:
        stop.set()
        beater.join(timeout=1.0)
    return done

"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints a single PASS line on success (visible with ``pytest -v -s``
or in the captured output); a red test is the fail line. Oracles here are
written independently of the implementation paths they check: naive
transcriptions, exhaustive enumeration, closed-form math.
"""

import hashlib
import json
import math
import subprocess
import sys
import threading
import time
import uuid
from pathlib import Path

import pytest

from synthjudge.broker import BrokerError, LeaseExpiredError
from synthjudge.broker.external import RespBroker
from synthjudge.broker.memory import MemoryBroker
from synthjudge.consensus import CandidateSuite, WeightedCase, vote, weight_by_size
from synthjudge.pipeline.run import PipelineConfig, recheck_bundles, run_pipeline
from synthjudge.reward import RewardInput, compute_reward
from synthjudge.rng import Stream, derive_seed
from synthjudge.sandbox import (
    ExtractionStatus,
    ProgramSource,
    ResourceLimits,
    Verdict,
    classify_failure,
    extract_code,
    parse_candidate,
    run_one,
)
from synthjudge.testgen import Category, TestInput
from synthjudge.verifier import Decision, VerifyConfig, dual_verify, weighted_select

ECHO_WORKER = Path(__file__).parent / "echo_worker.py"


def _ok(name: str) -> None:
    print(f"ACCEPTANCE PASS: {name}")


def _case(expected, weight, outputs, label="c", size=1):
    return WeightedCase(
        input=TestInput("x" * size, size, Category.NOMINAL, label),
        expected=expected,
        weight=weight,
        consensus_ratio=1.0,
        ballots={},
        candidate_outputs=tuple(outputs),
    )


# ===========================================================================
# 1. Algorithm-1 oracle equivalence
# ===========================================================================


def _oracle_dual_verify(outputs, weights, seed):
    """Brute-force transcription: vote, split, weighted argmax, hold-out argmax."""
    m, n = len(outputs), len(weights)
    expected = []
    for i in range(n):
        counts, first = {}, {}
        for j in range(m):
            y = outputs[j][i]
            counts[y] = counts.get(y, 0) + 1
            first.setdefault(y, j)
        best = None
        for y in counts:
            if best is None or counts[y] > counts[best] or (
                counts[y] == counts[best] and first[y] < first[best]
            ):
                best = y
        expected.append(best)

    order = list(range(n))
    Stream(seed).shuffle(order)
    golden = sorted(order[: round(0.5 * n)])
    holdout = sorted(order[round(0.5 * n):])

    scores = [sum(weights[i] for i in golden if outputs[j][i] == expected[i])
              for j in range(m)]
    j_star = scores.index(max(scores))
    hits = [sum(1 for i in holdout if outputs[j][i] == expected[i]) for j in range(m)]
    j_dagger = hits.index(max(hits))
    if j_star == j_dagger:
        return Decision.ACCEPTED, j_star
    return Decision.DISCARDED_HOLDOUT_MISMATCH, None


def test_algorithm1_oracle_equivalence_1000_instances():
    start = time.monotonic()
    mismatches = 0
    for k in range(1000):
        seed = derive_seed(0x0A1, f"instance-{k}")
        stream = Stream(seed)
        n = stream.randint(2, 6)
        m = stream.randint(1, 4)
        weights = [stream.randint(1, 4) for _ in range(n)]
        outputs = [[str(stream.randint(0, 2)) for _ in range(n)] for _ in range(m)]

        cases = []
        for i in range(n):
            column = [outputs[j][i] for j in range(m)]
            result = vote(column, min_consensus=0.0)
            cases.append(
                WeightedCase(
                    input=TestInput("x", 1, Category.NOMINAL, f"c{i}"),
                    expected=result.consensus_output,
                    weight=weights[i],
                    consensus_ratio=result.consensus_ratio,
                    ballots=result.ballots,
                    candidate_outputs=tuple(column),
                )
            )
        suite = CandidateSuite(cases=tuple(cases), num_candidates=m)
        candidates = [parse_candidate("<think>x</think>\n```python\nprint(1)\n```")] * m
        bundle = dual_verify("t", candidates, suite, VerifyConfig(split_seed=seed))
        got = (bundle.decision, bundle.golden_index)
        want = _oracle_dual_verify(outputs, weights, seed)
        if got != want:
            mismatches += 1
    elapsed = time.monotonic() - start
    assert mismatches == 0, f"{mismatches} oracle mismatches"
    assert elapsed < 5.0, f"took {elapsed:.2f}s (budget 5s)"
    _ok(f"Algorithm-1 oracle equivalence (1000 instances, {elapsed:.2f}s, 0 mismatches)")


# ===========================================================================
# 2. Eq.-2 weighted selection vs exhaustive enumeration
# ===========================================================================


def test_weighted_selection_matches_exhaustive_argmax_10000():
    mismatches = 0
    for k in range(10_000):
        stream = Stream(derive_seed(0x0E2, f"mat-{k}"))
        n = stream.randint(1, 8)
        m = stream.randint(1, 6)
        weights = [stream.randint(1, 4) for _ in range(n)]
        expected = [str(stream.randint(0, 3)) for _ in range(n)]
        outputs = [[str(stream.randint(0, 3)) for _ in range(n)] for _ in range(m)]
        suite = [_case(expected[i], weights[i], []) for i in range(n)]

        got_idx, got_scores = weighted_select(suite, outputs)

        best_idx, best_score = 0, None
        brute_scores = []
        for j in range(m):
            score = 0
            for i in range(n):
                if outputs[j][i] == expected[i]:
                    score += weights[i]
            brute_scores.append(score)
            if best_score is None or score > best_score:
                best_idx, best_score = j, score
        if got_idx != best_idx or got_scores != brute_scores:
            mismatches += 1
    assert mismatches == 0
    _ok("Eq.-2 selection equals exhaustive argmax (10,000 matrices, 0 mismatches)")


# ===========================================================================
# 3. Reward exactness over the full enumeration
# ===========================================================================


def test_reward_branches_bit_exact():
    for status in (ExtractionStatus.NO_CODE_BLOCK, ExtractionStatus.INCOMPLETE_CODE_BLOCK):
        assert compute_reward(RewardInput(status, False, 0, 0)).value == -2.0
    assert compute_reward(
        RewardInput(ExtractionStatus.EXTRACTED, False, 0, 0)
    ).value == -2.0

    for total in range(1, 51):
        for passed in range(0, total + 1):
            got = compute_reward(
                RewardInput(ExtractionStatus.EXTRACTED, True, passed, total)
            ).value
            want = 0.0 if passed == 0 else (5.0 * passed) / total
            assert got == want, f"passed={passed} total={total}: {got!r} != {want!r}"
            if passed == total:
                assert got == 5.0
            if 2 * passed == total:
                assert got == 2.5
    _ok("Reward exactness (full enumeration total 1..50, -2 and 0 branches)")


# ===========================================================================
# 4. Voting-accuracy trend vs the analytic binomial-majority prediction
# ===========================================================================


def _analytic_majority_accuracy(m: int, p: float) -> float:
    """Distinct wrong outputs: correct wins iff >=2 correct ballots, plus the
    all-singleton case where the first-seen tie-break favors candidate 0."""
    q = 1.0 - p
    win = sum(math.comb(m, c) * p**c * q ** (m - c) for c in range(2, m + 1))
    win += math.comb(m, 1) * p * q ** (m - 1) * (1.0 / m)
    return win


def test_voting_accuracy_trend_matches_binomial_prediction():
    p_correct = 0.8
    trials = 4000
    accuracies = {}
    for m in (4, 8, 16):
        stream = Stream(derive_seed(0x0B1, f"vote-trend-{m}"))
        hits = 0
        for _ in range(trials):
            ballots = []
            for j in range(m):
                correct = stream.randint(1, 100) <= int(p_correct * 100)
                ballots.append("truth" if correct else f"wrong-{j}")
            result = vote(ballots, min_consensus=0.0)
            hits += result.consensus_output == "truth"
        accuracies[m] = hits / trials
        analytic = _analytic_majority_accuracy(m, p_correct)
        assert abs(accuracies[m] - analytic) <= 0.02, (
            f"m={m}: simulated {accuracies[m]:.4f} vs analytic {analytic:.4f}"
        )
    assert accuracies[4] <= accuracies[8] <= accuracies[16], accuracies
    _ok(
        "Voting-accuracy trend (m=4/8/16: "
        + ", ".join(f"{accuracies[m]:.4f}" for m in (4, 8, 16))
        + "; within 2pp of analytic, nondecreasing)"
    )


# ===========================================================================
# 5. Hold-out rejection of the overfitter
# ===========================================================================


def _overfitter_fixture(seed=11):
    from synthjudge.verifier import split_suite

    placeholder = [_case("e", 1, ["?", "?"], label=f"c{i}") for i in range(10)]
    split = split_suite(placeholder, 0.5, seed=seed)
    golden = set(split.golden_indices)
    golden_miss = split.golden_indices[0]
    val_miss = split.validation_indices[0]
    cases = []
    for i in range(10):
        expected = f"v{i}"
        over = expected if i in golden else "wrong"          # 100% golden, 0% val
        gen = "wrong" if i in (golden_miss, val_miss) else expected  # 80% / 80%
        cases.append(_case(expected, 1, [over, gen], label=f"c{i}"))
    suite = CandidateSuite(cases=tuple(cases), num_candidates=2)
    candidates = [parse_candidate("<think>x</think>\n```python\nprint(1)\n```")] * 2
    return suite, candidates, seed


def test_holdout_rejects_overfitter_and_relaxed_selects_generalist():
    suite, candidates, seed = _overfitter_fixture()

    strict = dual_verify("t", candidates, suite,
                         VerifyConfig(split_seed=seed, mode="strict"))
    assert strict.decision is Decision.DISCARDED_HOLDOUT_MISMATCH
    assert strict.weighted_scores == [5, 4]
    assert strict.validation_accuracies == [0.0, 0.8]

    relaxed = dual_verify("t", candidates, suite,
                          VerifyConfig(split_seed=seed, mode="relaxed", epsilon=0.2))
    assert relaxed.decision is Decision.ACCEPTED
    assert relaxed.golden_index == 1  # the generalist

    wider = dual_verify("t", candidates, suite,
                        VerifyConfig(split_seed=seed, mode="relaxed", epsilon=0.5))
    assert wider.decision is Decision.ACCEPTED and wider.golden_index == 1

    again = dual_verify("t", candidates, suite,
                        VerifyConfig(split_seed=seed, mode="strict"))
    assert again.decision is strict.decision
    _ok("Hold-out rejection (strict discards overfitter; relaxed eps>=0.2 selects generalist)")


# ===========================================================================
# 6. Sandbox limits, 20 repetitions each
# ===========================================================================


@pytest.mark.soak
def test_sandbox_limits_twenty_repetitions():
    wall_ms = 600
    tle_limits = ResourceLimits(wall_time_ms=wall_ms, cpu_time_ms=wall_ms,
                                memory_bytes=512 << 20, output_cap_bytes=1 << 20)
    for rep in range(20):
        start = time.monotonic()
        outcome = run_one("while True: pass", "", tle_limits)
        elapsed_ms = (time.monotonic() - start) * 1000
        assert outcome.verdict is Verdict.TIME_LIMIT_EXCEEDED, f"rep {rep}: {outcome.verdict}"
        assert elapsed_ms <= wall_ms + 500, f"rep {rep}: reported after {elapsed_ms:.0f}ms"

    mle_limits = ResourceLimits(wall_time_ms=5000, cpu_time_ms=4000,
                                memory_bytes=1 << 30, output_cap_bytes=1 << 20)
    for rep in range(20):
        outcome = run_one("block = bytearray(2 << 30)\nprint(len(block))", "", mle_limits)
        assert outcome.verdict is Verdict.MEMORY_LIMIT_EXCEEDED, f"rep {rep}: {outcome.verdict}"
    _ok("Sandbox limits (20x TLE within wall+500ms, 20x MLE under 1 GiB cap, 0 misclassifications)")


# ===========================================================================
# 7. Failure-taxonomy coverage: one fixture per class
# ===========================================================================


def test_taxonomy_seven_fixtures():
    limits = ResourceLimits(wall_time_ms=800, cpu_time_ms=800,
                            memory_bytes=256 << 20, output_cap_bytes=1 << 20)

    def classify_response(raw, expected=None, entry=None, execute=True):
        source = extract_code(raw)
        outcome = None
        if execute and source.extraction_status is ExtractionStatus.EXTRACTED \
                and classify_failure(source, entry_signature=entry) is Verdict.PASS:
            outcome = run_one(source, "", limits)
        return classify_failure(source, outcome, expected, entry_signature=entry)

    observed = {
        "wrong_answer": classify_response("```python\nprint(7)\n```", expected="8"),
        "no_code_block": classify_response("I ran out of budget before writing code."),
        "time_limit": classify_response("```python\nwhile True: pass\n```", expected="1"),
        "memory_limit": classify_response(
            "```python\nblock = bytearray(1 << 30)\nprint(len(block))\n```", expected="1"
        ),
        "incomplete": classify_response("```python\ndef main():\n    data ="),
        "signature": classify_response(
            "```python\ndef free_function():\n    return 1\n```",
            entry="class Solution:",
        ),
        "syntax": classify_response("```python\ndef f(:\n```"),
    }
    want = {
        "wrong_answer": Verdict.WRONG_ANSWER,
        "no_code_block": Verdict.NO_CODE_BLOCK,
        "time_limit": Verdict.TIME_LIMIT_EXCEEDED,
        "memory_limit": Verdict.MEMORY_LIMIT_EXCEEDED,
        "incomplete": Verdict.INCOMPLETE_CODE_BLOCK,
        "signature": Verdict.SIGNATURE_MISMATCH,
        "syntax": Verdict.SYNTAX_ERROR,
    }
    assert observed == want
    _ok("Taxonomy coverage (seven fixtures map to exactly their classes)")


# ===========================================================================
# 8. Broker soak: 1,000 jobs, 8 workers, dead-worker recovery, both modes
# ===========================================================================


def _soak_memory() -> tuple[int, int]:
    broker = MemoryBroker()
    payloads = [b"job-%04d" % i for i in range(1000)]
    ids = broker.enqueue(payloads)

    # FIFO check among same-batch jobs: one worker drains the first 100.
    broker.register_worker("fifo", 5000)
    first_hundred = [broker.pop_next("fifo", 500).job_id for _ in range(100)]
    assert first_hundred == ids[:100]
    for job_id in first_hundred:
        broker.push_result(job_id, b"done", "fifo")

    stop = threading.Event()

    def worker(wid, die_after=None):
        broker.register_worker(wid, ttl_ms=400)
        done = 0
        while not stop.is_set():
            broker.heartbeat(wid)
            try:
                job = broker.pop_next(wid, 100)
            except LeaseExpiredError:
                broker.register_worker(wid, ttl_ms=400)
                continue
            if job is None:
                continue
            done += 1
            if die_after is not None and done > die_after:
                return  # crash simulation: in-flight job abandoned, beats stop
            time.sleep(0.002)
            try:
                broker.push_result(job.job_id, job.payload, wid)
            except BrokerError:
                pass

    threads = [
        threading.Thread(target=worker, args=(f"w{i}",),
                         kwargs={"die_after": 20 if i < 2 else None}, daemon=True)
        for i in range(8)
    ]
    for t in threads:
        t.start()

    requeued: list[str] = []

    def reaper():
        while not stop.is_set():
            requeued.extend(broker.reap_dead())
            time.sleep(0.1)

    reap_thread = threading.Thread(target=reaper, daemon=True)
    reap_thread.start()

    results = {}
    for job_id in ids[100:]:
        value = broker.await_result(job_id, 45_000)
        assert value is not None, f"lost job {job_id}"
        results[job_id] = value
    stop.set()
    for t in threads:
        t.join(timeout=2)
    reap_thread.join(timeout=2)

    assert len(results) == 900
    assert all(results[i] == p for i, p in zip(ids[100:], payloads[100:]))
    audit_requeues = [e for e in broker.audit_log() if e["event"] == "requeue"]
    assert len(audit_requeues) >= 2  # both dead workers held a job
    assert broker.dead_letter() == []
    return len(results) + 100, len(audit_requeues)


def _soak_external(resp_server) -> tuple[int, int]:
    ns = f"soak{uuid.uuid4().hex[:6]}"
    broker = RespBroker("127.0.0.1", resp_server.port, namespace=ns)
    payloads = [b"job-%04d" % i for i in range(1000)]
    ids = broker.enqueue(payloads)

    broker.register_worker("fifo", 5000)
    first_hundred = [broker.pop_next("fifo", 500).job_id for _ in range(100)]
    assert first_hundred == ids[:100]
    for job_id in first_hundred:
        broker.push_result(job_id, b"done", "fifo")

    procs = []
    for i in range(8):
        proc = subprocess.Popen(
            [sys.executable, str(ECHO_WORKER), "127.0.0.1", str(resp_server.port),
             ns, f"p{i}", "25"],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
        )
        assert proc.stdout.readline().strip() == "ready"
        procs.append(proc)

    # Kill each victim while it demonstrably holds a job, so the requeue
    # path genuinely fires mid-run.
    for victim in (0, 1):
        deadline = time.monotonic() + 10.0
        while not broker.in_flight(f"p{victim}"):
            assert time.monotonic() < deadline, f"worker p{victim} never took a job"
            time.sleep(0.002)
        procs[victim].kill()

    stop = threading.Event()
    requeued: list[str] = []

    def reaper():
        reap_broker = RespBroker("127.0.0.1", resp_server.port, namespace=ns)
        while not stop.is_set():
            requeued.extend(reap_broker.reap_dead())
            time.sleep(0.15)

    reap_thread = threading.Thread(target=reaper, daemon=True)
    reap_thread.start()

    try:
        results = {}
        for job_id in ids[100:]:
            value = broker.await_result(job_id, 45_000)
            assert value is not None, f"lost job {job_id}"
            results[job_id] = value
    finally:
        stop.set()
        reap_thread.join(timeout=3)
        for proc in procs:
            proc.kill()
        for proc in procs:
            proc.wait(timeout=5)

    assert len(results) == 900
    assert all(results[i] == p for i, p in zip(ids[100:], payloads[100:]))
    audit_requeues = [e for e in broker.audit_log() if e["event"] == "requeue"]
    assert len(audit_requeues) >= 1, "kill-mid-run never triggered a requeue"
    assert broker.dead_letter() == []
    broker.flush_namespace()
    return len(results) + 100, len(audit_requeues)


@pytest.mark.soak
def test_broker_soak_both_modes(resp_server):
    start = time.monotonic()
    mem_done, mem_requeues = _soak_memory()
    ext_done, ext_requeues = _soak_external(resp_server)
    elapsed = time.monotonic() - start
    assert mem_done == ext_done == 1000
    assert elapsed < 60.0, f"soak took {elapsed:.1f}s"
    _ok(
        f"Broker soak (2x1000 jobs, 8 workers, 2 killed; requeues mem={mem_requeues} "
        f"ext={ext_requeues}; {elapsed:.1f}s < 60s; zero lost/duplicated)"
    )


# ===========================================================================
# 9. Size-quartile weighting vs the ceil-boundary rule
# ===========================================================================


def test_size_quartile_weighting_500_multisets():
    for k in range(500):
        stream = Stream(derive_seed(0x0C4, f"sizes-{k}"))
        n = stream.randint(1, 40)
        sizes = [stream.randint(0, 10**6) for _ in range(n)]
        weights = weight_by_size(sizes)

        order = sorted(range(n), key=lambda i: (sizes[i], i))
        b1, b2, b3 = (math.ceil(j * n / 4) for j in (1, 2, 3))
        for rank, idx in enumerate(order, start=1):
            want = 1 if rank <= b1 else 2 if rank <= b2 else 3 if rank <= b3 else 4
            assert weights[idx] == want, f"multiset {k}, rank {rank}"

        by_size = sorted(zip(sizes, weights))
        for (s1, w1), (s2, w2) in zip(by_size, by_size[1:]):
            if s1 < s2:
                assert w1 <= w2, f"multiset {k}: weight not monotone"
    _ok("Size-quartile weighting (500 multisets, ceil boundaries exact, monotone)")


# ===========================================================================
# 10. Testgen determinism across OS process invocations
# ===========================================================================

_DETERMINISM_SPEC = {
    "seed": 20240801,
    "cases": [
        {"label": "nominal_ints", "category": "nominal", "recipe": {"lines": [
            {"emit": "int", "min": 1, "max": 50, "bind": "n"},
            {"emit": "ints", "count": "$n", "min": -1000, "max": 1000},
        ]}},
        {"label": "complex_string", "category": "complex", "recipe": {"lines": [
            {"emit": "int", "min": 100, "max": 300, "bind": "len"},
            {"emit": "string", "length": "$len", "alphabet": "abcxyz"},
        ]}},
        {"label": "boundary_fixed", "category": "boundary", "recipe": {"lines": [
            {"emit": "literal", "text": "1"},
            {"emit": "ints", "count": 1, "min": -1000000, "max": -1000000},
        ]}},
        {"label": "stress_tree", "category": "stress", "recipe": {"lines": [
            {"emit": "int", "min": 500, "max": 800, "bind": "n"},
            {"emit": "tree", "n": "$n"},
        ]}},
        {"label": "stress_graph", "category": "stress", "recipe": {"lines": [
            {"emit": "literal", "text": "50 120"},
            {"emit": "graph", "n": 50, "m": 120, "connected": True},
        ]}},
    ],
}


def _dir_hash(path: Path) -> str:
    digest = hashlib.sha256()
    for file in sorted(path.rglob("*")):
        if file.is_file():
            digest.update(file.name.encode() + b"\0" + file.read_bytes())
    return digest.hexdigest()


def test_testgen_determinism_across_process_runs(tmp_path):
    spec_file = tmp_path / "spec.json"
    spec_file.write_text(json.dumps(_DETERMINISM_SPEC))
    hashes = []
    for run in ("one", "two"):
        out = tmp_path / run
        proc = subprocess.run(
            [sys.executable, "-m", "synthjudge.cli", "gen-tests",
             "--spec", str(spec_file), "--out", str(out)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        hashes.append(_dir_hash(out))
    assert hashes[0] == hashes[1]

    from synthjudge.testgen import GeneratorSpec, emit_corpus

    out3 = tmp_path / "three"
    emit_corpus(GeneratorSpec.from_dict(_DETERMINISM_SPEC), out3)
    assert _dir_hash(out3) == hashes[0]
    _ok(f"Testgen determinism (two process runs + in-process, sha256 {hashes[0][:12]}...)")


# ===========================================================================
# 11. Pipeline replay over 20 tasks with a fixture provider
# ===========================================================================


def _corpus_hash(out_dir: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(out_dir.rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(out_dir)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


@pytest.mark.soak
def test_pipeline_replay_twenty_tasks(tmp_path):
    fixtures = tmp_path / "fixtures"

    def config(out, provider):
        return PipelineConfig(
            out_dir=str(out),
            master_seed=777,
            num_tasks=20,
            inputs_per_task=6,
            candidates_per_task=3,
            limits={"wall_time_ms": 2000, "cpu_time_ms": 1500,
                    "memory_bytes": 512 << 20, "output_cap_bytes": 1 << 20},
            provider=provider,
            max_workers=4,
        )

    # Record the provider exchanges once, then run twice from fixtures only.
    run_pipeline(config(tmp_path / "seed-run",
                        {"kind": "recording", "dir": str(fixtures),
                         "inner": {"kind": "synthetic"}}))
    report_a = run_pipeline(config(tmp_path / "replay-a",
                                   {"kind": "fixture", "dir": str(fixtures)}))
    report_b = run_pipeline(config(tmp_path / "replay-b",
                                   {"kind": "fixture", "dir": str(fixtures)}))

    hash_a = _corpus_hash(tmp_path / "replay-a")
    hash_b = _corpus_hash(tmp_path / "replay-b")
    assert hash_a == hash_b, "replayed corpus differs between runs"
    assert report_a == report_b

    assert report_a["totals"]["tasks"] == 20
    accepted = report_a["totals"]["by_status"].get("accepted", 0)
    assert accepted >= 5, f"only {accepted} accepted tasks; fixture family too hostile"
    assert recheck_bundles(tmp_path / "replay-a") == []
    assert recheck_bundles(tmp_path / "replay-b") == []
    _ok(
        f"Pipeline replay (20 tasks, fixture provider, byte-identical corpus "
        f"{hash_a[:12]}..., {accepted} accepted bundles recheck clean)"
    )

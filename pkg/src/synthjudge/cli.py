"""Operator command line.

Subcommands: gen-tests, judge, verify, reward, serve, work, pipeline,
report. Human-readable tables go to stdout; machine-readable records go to
files (never mixed on one stream). Usage errors exit 2, operational errors
exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
from pathlib import Path

from . import consensus, testgen, verifier
from .broker import make_broker
from .gateway.httpd import make_server
from .gateway.schema import JudgeRequest, Mode, SuiteCase
from .gateway.service import GatewayService
from .gateway.worker import execute_request, run_worker
from .pipeline.run import PipelineConfig, recheck_bundles, run_pipeline
from .reward import RewardInput, compute_reward
from .sandbox import ExtractionStatus, ResourceLimits, Verdict
from .testgen import Category
from .verifier import PASS_RATE_BUCKETS, VerifyConfig


def _limits_from_args(args) -> ResourceLimits:
    return ResourceLimits(
        wall_time_ms=args.wall_ms,
        cpu_time_ms=args.cpu_ms,
        memory_bytes=args.memory_bytes,
        output_cap_bytes=args.output_cap_bytes,
    )


def _add_limit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--wall-ms", type=int, default=6000)
    parser.add_argument("--cpu-ms", type=int, default=4000)
    parser.add_argument("--memory-bytes", type=int, default=1 << 30)
    parser.add_argument("--output-cap-bytes", type=int, default=64 << 20)


# ---------------------------------------------------------------------------
# gen-tests
# ---------------------------------------------------------------------------


def cmd_gen_tests(args) -> int:
    spec = testgen.GeneratorSpec.from_json(Path(args.spec).read_text())
    if args.seed is not None:
        spec = testgen.GeneratorSpec(seed=args.seed, cases=spec.cases)
    inputs = testgen.emit_corpus(spec, args.out)
    print(f"{'label':<28} {'category':<10} {'bytes':>8}")
    for item in inputs:
        print(f"{item.label:<28} {item.category.value:<10} {item.byte_size:>8}")
    print(f"wrote {len(inputs)} files to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# judge
# ---------------------------------------------------------------------------


def _load_suite(path: Path) -> list[SuiteCase]:
    if path.is_dir():
        cases = []
        for in_file in sorted(path.glob("*.in")):
            out_file = in_file.with_suffix(".out")
            if not out_file.exists():
                raise FileNotFoundError(f"no expected output for {in_file.name}")
            cases.append(SuiteCase(
                input=in_file.read_text(),
                expected=consensus.normalize_output(out_file.read_text()),
            ))
        if not cases:
            raise FileNotFoundError(f"no .in files under {path}")
        return cases
    doc = json.loads(path.read_text())
    entries = doc["cases"] if isinstance(doc, dict) else doc
    return [
        SuiteCase(
            input=e["input"],
            expected=consensus.normalize_output(str(e["expected"])),
            weight=e.get("weight", 1),
        )
        for e in entries
    ]


def cmd_judge(args) -> int:
    solution_path = Path(args.solution)
    text = solution_path.read_text()
    as_code = args.code or (solution_path.suffix == ".py" and not args.response)
    request = JudgeRequest(
        solution_raw=None if as_code else text,
        solution_code=text if as_code else None,
        suite=tuple(_load_suite(Path(args.suite))),
        limits=_limits_from_args(args),
        mode=Mode.BOTH,
        entry_signature=args.entry_signature,
    )
    response = execute_request(request, job_id="local")

    print(f"{'case':>4} {'verdict':<24} {'ms':>6}")
    for i, (verdict, ms) in enumerate(zip(response.verdicts, response.timing_ms)):
        print(f"{i:>4} {verdict:<24} {ms:>6}")
    print(f"\npassed {response.passed}/{response.total}  reward {response.reward}")

    tally: dict[str, int] = {}
    for verdict in response.verdicts:
        name = Verdict(verdict).display_name
        tally[name] = tally.get(name, 0) + 1
    print("\nfailure tally:")
    for name in sorted(tally):
        print(f"  {name:<24} {tally[name]}")

    if args.out:
        Path(args.out).write_text(json.dumps(response.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


_LABEL_CATEGORY = (
    ("boundary", Category.BOUNDARY),
    ("stress", Category.STRESS),
    ("complex", Category.COMPLEX),
)


def _category_from_label(label: str) -> Category:
    lowered = label.lower()
    for marker, category in _LABEL_CATEGORY:
        if marker in lowered:
            return category
    return Category.NOMINAL


def cmd_verify(args) -> int:
    task_dir = Path(args.task_dir)
    from .pipeline.tasks import TaskSpec
    from .sandbox import parse_candidate

    task_file = task_dir / "task.json"
    task = TaskSpec.from_dict(json.loads(task_file.read_text())) if task_file.exists() else None

    raw_candidates = [p.read_text() for p in sorted((task_dir / "candidates").glob("*"))]
    if not raw_candidates:
        print("no candidates found", file=sys.stderr)
        return 1
    inputs = [
        testgen.TestInput.make(p.read_text(), _category_from_label(p.stem), p.stem)
        for p in sorted((task_dir / "inputs").glob("*.in"))
    ]
    if not inputs:
        print("no inputs found", file=sys.stderr)
        return 1

    statement = task.statement if task else ""
    report = verifier.filter_solutions(
        statement, raw_candidates,
        min_task_tokens=0 if task is None else args.min_task_tokens,
        require_tags=False,
    )
    if not report.kept:
        print("decision: all candidates rejected by filters")
        return 0
    candidates = [parse_candidate(raw_candidates[i]) for i in report.kept]

    try:
        suite = consensus.build_candidate_suite(
            task or task_dir.name,
            candidates,
            inputs,
            _limits_from_args(args),
            weighting=args.weighting,
            min_consensus=args.min_consensus,
        )
    except consensus.EmptySuiteError:
        print(f"decision: {verifier.Decision.DISCARDED_EMPTY_SUITE.value}")
        return 0

    bundle = verifier.dual_verify(
        task or task_dir.name,
        candidates,
        suite,
        VerifyConfig(
            split_fraction=args.fraction,
            split_seed=args.seed,
            mode=args.mode,
            epsilon=args.epsilon,
        ),
    )
    print(f"decision: {bundle.decision.value}")
    if bundle.golden_index is not None:
        print(f"golden candidate index (kept-list position): {bundle.golden_index}")
    print(f"weighted scores: {bundle.weighted_scores}")
    print(f"validation accuracies: {[round(a, 4) for a in bundle.validation_accuracies]}")
    out = args.out or (task_dir / "bundle.json")
    verifier.write_bundle(out, bundle)
    return 0


# ---------------------------------------------------------------------------
# reward
# ---------------------------------------------------------------------------


def cmd_reward(args) -> int:
    doc = json.loads(Path(args.judge_output).read_text())
    value = compute_reward(
        RewardInput(
            extraction_status=ExtractionStatus(doc["extraction_status"]),
            syntax_ok=doc["syntax_ok"],
            passed=doc["passed"],
            total=doc["total"],
        )
    ).value
    print(value)
    return 0


# ---------------------------------------------------------------------------
# serve / work
# ---------------------------------------------------------------------------


def _broker_from_args(args):
    kwargs = {}
    if args.broker.startswith("resp://") and args.namespace:
        kwargs["namespace"] = args.namespace
    return make_broker(args.broker, **kwargs)


def cmd_serve(args) -> int:
    host, _, port = args.bind.partition(":")
    broker = _broker_from_args(args)
    service = GatewayService(
        broker,
        audit_path=args.audit_log,
        granularity=args.granularity,
        sweep_interval_ms=args.sweep_interval_ms,
        default_limits=_limits_from_args(args),
    )
    service.start_sweeper()

    stop = threading.Event()
    for i in range(args.local_workers):
        threading.Thread(
            target=run_worker,
            args=(broker, f"local-{i}"),
            kwargs={"stop_event": stop},
            daemon=True,
        ).start()

    server = make_server(service, host or "127.0.0.1", int(port or 8777))
    print(f"gateway listening on {server.server_address[0]}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        stop.set()
        service.stop()
        server.shutdown()
    return 0


def cmd_work(args) -> int:
    broker = _broker_from_args(args)
    stop = threading.Event()
    threads = [
        threading.Thread(
            target=run_worker,
            args=(broker, f"{args.worker_id}-{i}"),
            kwargs={"ttl_ms": args.ttl_ms, "stop_event": stop},
            daemon=True,
        )
        for i in range(args.parallelism)
    ]
    for t in threads:
        t.start()
    print(f"{args.parallelism} workers running against {args.broker}", flush=True)
    try:
        while any(t.is_alive() for t in threads):
            for t in threads:
                t.join(timeout=0.5)
    except KeyboardInterrupt:
        stop.set()
        for t in threads:
            t.join(timeout=2.0)
    return 0


# ---------------------------------------------------------------------------
# pipeline / report
# ---------------------------------------------------------------------------


def cmd_pipeline(args) -> int:
    config = PipelineConfig.from_file(args.config)
    report = run_pipeline(config)
    totals = report["totals"]
    print(f"tasks processed: {totals['tasks']}")
    for status, count in sorted(totals["by_status"].items()):
        print(f"  {status:<28} {count}")
    frac = totals["solvability_discard_fraction"]
    if frac is not None:
        print(f"solvability discard fraction: {frac}")
    print(f"report written to {Path(config.out_dir) / 'report.json'}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.corpus_dir)
    report = json.loads((out / "report.json").read_text())
    totals = report["totals"]
    print("attrition:")
    for status, count in sorted(totals["by_status"].items()):
        print(f"  {status:<28} {count}")
    print(f"  candidates kept/rejected     {totals['candidates_kept']}/{totals['candidates_rejected']}")
    print(f"  inputs dropped (no consensus) {totals['inputs_dropped_no_consensus']}")
    frac = totals["solvability_discard_fraction"]
    if frac is not None:
        print(f"  solvability discard fraction {frac}")
    print("\nproxy pass-rate buckets:")
    buckets = totals.get("solvability_buckets", {})
    for name in PASS_RATE_BUCKETS:
        print(f"  {name:<10} {buckets.get(name, 0)}")
    failures = recheck_bundles(out)
    if failures:
        print(f"\nacceptance recheck FAILED for: {', '.join(failures)}", file=sys.stderr)
        return 1
    print("\nacceptance recheck: all stored bundles reproduce their decision")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthjudge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-tests", help="render a GeneratorSpec into .in files")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_gen_tests)

    p = sub.add_parser("judge", help="judge one solution against a suite")
    p.add_argument("--solution", required=True)
    p.add_argument("--suite", required=True, help="JSON file or directory of .in/.out pairs")
    p.add_argument("--out", help="write the machine-readable response here")
    p.add_argument("--entry-signature", default=None)
    p.add_argument("--code", action="store_true", help="treat the solution file as bare code")
    p.add_argument("--response", action="store_true", help="treat the solution file as a model response")
    _add_limit_flags(p)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("verify", help="dual-verify a task directory")
    p.add_argument("--task-dir", required=True)
    p.add_argument("--mode", choices=["strict", "relaxed"], default="strict")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--weighting", choices=["size", "semantic"], default="size")
    p.add_argument("--min-consensus", type=float, default=0.5)
    p.add_argument("--min-task-tokens", type=int, default=200)
    p.add_argument("--out")
    _add_limit_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reward", help="compute the reward from a judge output file")
    p.add_argument("--judge-output", required=True)
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("serve", help="run the gateway HTTP service")
    p.add_argument("--bind", default="127.0.0.1:8777")
    p.add_argument("--broker", default="memory")
    p.add_argument("--namespace", default=None, help="key prefix for resp:// brokers")
    p.add_argument("--audit-log", default=None)
    p.add_argument("--sweep-interval-ms", type=int, default=1000)
    p.add_argument("--local-workers", type=int, default=0)
    p.add_argument("--granularity", choices=["request", "case"], default="request")
    _add_limit_flags(p)  # defaults applied to requests that omit limits
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("work", help="run sandbox workers against a broker")
    p.add_argument("--broker", required=True)
    p.add_argument("--namespace", default=None, help="key prefix for resp:// brokers")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--worker-id", default="worker")
    p.add_argument("--ttl-ms", type=int, default=5000)
    p.set_defaults(func=cmd_work)

    p = sub.add_parser("pipeline", help="run the synthesis pipeline from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", help="summarize a pipeline corpus directory")
    p.add_argument("--corpus-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # operational failure -> exit 1 with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

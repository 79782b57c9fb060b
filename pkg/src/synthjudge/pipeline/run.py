"""End-to-end pipeline runner with checkpointing and a deterministic report.

Per task: sample a feature subtree, formulate a styled task, generate
inputs, sample candidates, filter, vote, dual-verify, and (optionally)
apply the proxy-solver solvability filter. Accepted bundles land in
``bundles/``, consensus audits in ``audit/``, and one checkpoint line per
task in ``checkpoint.jsonl``; re-running resumes after the last completed
task with zero duplicate bundles. ``report.json`` aggregates attrition and
contains no timestamps, so a replayed run is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .. import consensus, verifier
from ..rng import Stream, derive_seed
from ..sandbox import ResourceLimits, Verdict, parse_candidate, run_one
from ..verifier import Decision, VerifyConfig
from .features import merge_trees, sample_subtree
from .providers import ProviderError, make_provider
from .tasks import (
    STYLES,
    formulate_task,
    generate_inputs,
    proxy_solution,
    sample_candidates,
)


@dataclass
class PipelineConfig:
    out_dir: str
    master_seed: int = 42
    num_tasks: int = 20
    feature_trees: list = field(default_factory=list)
    subtree_budget: int = 4
    style_mix: dict = field(default_factory=lambda: {"codeforces": 70, "atcoder": 15, "leetcode": 15})
    input_method: str = "prompting"  # "prompting" | "toolspec"
    inputs_per_task: int = 15
    candidates_per_task: int = 3
    min_consensus: float = 0.5
    weighting: str = "size"
    split_fraction: float = 0.5
    mode: str = "strict"
    epsilon: float = 0.0
    solvability: str = "provider"  # "provider" | "off"
    provider: dict = field(default_factory=lambda: {"kind": "synthetic"})
    limits: dict = field(default_factory=dict)
    max_workers: int = 4
    min_task_tokens: int = 200
    max_solution_tokens: int = 25_000

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        doc = json.loads(text)
        if "out_dir" not in doc:
            raise ValueError("pipeline config needs out_dir")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text())

    def snapshot(self) -> dict:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        doc.pop("out_dir")
        return doc

    def resource_limits(self) -> ResourceLimits:
        return ResourceLimits(**self.limits) if self.limits else ResourceLimits()


_DEFAULT_TREE = {
    "algorithm": {
        "aggregation": {"running sum": {}, "running extremum": {}},
        "scanning": {"single pass": {}, "two pointers": {}},
    },
    "data structures": {"array": {}, "prefix table": {}},
    "implementation logic": {"iterative": {}, "arithmetic": {}},
}


@dataclass
class TaskRecord:
    task_id: str
    status: str  # decision value, "filtered_out", or "error"
    style: Optional[str] = None
    detail: str = ""
    kept_candidates: int = 0
    rejected_candidates: int = 0
    dropped_inputs: int = 0
    suite_size: int = 0
    solvability_bucket: Optional[str] = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _pick_style(stream: Stream, mix: dict) -> str:
    names = [s for s in STYLES if mix.get(s, 0) > 0]
    weights = [int(mix[s]) for s in names]
    total = sum(weights)
    roll = stream.randint(1, total)
    for name, weight in zip(names, weights):
        roll -= weight
        if roll <= 0:
            return name
    return names[-1]


def _run_task(config: PipelineConfig, provider, index: int) -> tuple[TaskRecord, Optional[verifier.VerifiedBundle], Optional[consensus.CandidateSuite]]:
    task_id = f"task-{index:05d}"
    task_seed = derive_seed(config.master_seed, task_id)
    style = _pick_style(Stream(task_seed), config.style_mix)

    trees = config.feature_trees or [_DEFAULT_TREE]
    subtree = sample_subtree(merge_trees(list(trees)), config.subtree_budget, task_seed)

    task = formulate_task(subtree, style, provider, task_id=task_id)
    inputs = generate_inputs(
        task, config.input_method, provider, config.inputs_per_task, seed=task_seed
    )
    raw_candidates = sample_candidates(task, provider, config.candidates_per_task)

    report = verifier.filter_solutions(
        task.statement,
        raw_candidates,
        max_tokens=config.max_solution_tokens,
        min_task_tokens=config.min_task_tokens,
    )
    record = TaskRecord(
        task_id=task_id,
        status="pending",
        style=style,
        kept_candidates=len(report.kept),
        rejected_candidates=len(report.rejected),
    )
    if not report.kept:
        record.status = "filtered_out"
        record.detail = "no candidate survived the solution filters"
        return record, None, None

    candidates = [parse_candidate(raw_candidates[i]) for i in report.kept]
    limits = config.resource_limits()
    try:
        suite = consensus.build_candidate_suite(
            task,
            candidates,
            inputs,
            limits,
            weighting=config.weighting,
            min_consensus=config.min_consensus,
            max_workers=config.max_workers,
        )
    except consensus.EmptySuiteError as exc:
        record.status = Decision.DISCARDED_EMPTY_SUITE.value
        record.detail = str(exc)
        return record, None, None

    record.dropped_inputs = len(suite.dropped_inputs)
    record.suite_size = len(suite.cases)

    bundle = verifier.dual_verify(
        task,
        candidates,
        suite,
        VerifyConfig(
            split_fraction=config.split_fraction,
            split_seed=task_seed,
            mode=config.mode,
            epsilon=config.epsilon,
        ),
    )

    if bundle.decision is Decision.ACCEPTED and config.solvability == "provider":
        proxy = parse_candidate(proxy_solution(task, provider))
        if proxy.program.extracted_code is None:
            bundle = verifier.solvability_filter(bundle, None)
        else:
            outcomes = []
            for case in bundle.golden_suite:
                run = run_one(proxy.program, case.input.input_text, limits)
                outcomes.append(
                    run.verdict is Verdict.PASS
                    and consensus.normalize_output(run.stdout) == case.expected
                )
            bundle = verifier.solvability_filter(bundle, outcomes)

    record.status = bundle.decision.value
    record.solvability_bucket = bundle.solvability_bucket
    return record, bundle, suite


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute the full flow for ``num_tasks`` tasks; returns the report dict."""
    out = Path(config.out_dir)
    (out / "bundles").mkdir(parents=True, exist_ok=True)
    (out / "audit").mkdir(exist_ok=True)
    checkpoint_path = out / "checkpoint.jsonl"

    done: dict[str, dict] = {}
    if checkpoint_path.exists():
        for line in checkpoint_path.read_text().splitlines():
            if line.strip():
                entry = json.loads(line)
                done[entry["task_id"]] = entry

    provider = make_provider(config.provider)

    with open(checkpoint_path, "a", encoding="utf-8") as checkpoint:
        for index in range(1, config.num_tasks + 1):
            task_id = f"task-{index:05d}"
            if task_id in done:
                continue
            try:
                record, bundle, suite = _run_task(config, provider, index)
            except (ProviderError, ValueError) as exc:
                record = TaskRecord(task_id=task_id, status="error", detail=str(exc))
                bundle, suite = None, None
            if suite is not None:
                consensus.write_audit(out / "audit" / f"{task_id}.json", task_id, suite)
            if bundle is not None and bundle.decision is Decision.ACCEPTED:
                verifier.write_bundle(out / "bundles" / f"{task_id}.json", bundle)
            entry = record.to_dict()
            checkpoint.write(json.dumps(entry, sort_keys=True) + "\n")
            checkpoint.flush()
            done[task_id] = entry

    report = _build_report(config, done)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def _build_report(config: PipelineConfig, done: dict[str, dict]) -> dict:
    records = [done[k] for k in sorted(done)]
    by_status: dict[str, int] = {}
    buckets: dict[str, int] = {}
    for entry in records:
        by_status[entry["status"]] = by_status.get(entry["status"], 0) + 1
        bucket = entry.get("solvability_bucket")
        if bucket:
            buckets[bucket] = buckets.get(bucket, 0) + 1
    verified = sum(
        by_status.get(s, 0)
        for s in (Decision.ACCEPTED.value, Decision.DISCARDED_UNSOLVABLE.value)
    )
    unsolvable = by_status.get(Decision.DISCARDED_UNSOLVABLE.value, 0)
    return {
        "config": config.snapshot(),
        "tasks": records,
        "totals": {
            "tasks": len(records),
            "by_status": by_status,
            "candidates_kept": sum(e.get("kept_candidates", 0) for e in records),
            "candidates_rejected": sum(e.get("rejected_candidates", 0) for e in records),
            "inputs_dropped_no_consensus": sum(e.get("dropped_inputs", 0) for e in records),
            "solvability_buckets": buckets,
            "solvability_discard_fraction": (
                round(unsolvable / verified, 4) if verified else None
            ),
        },
    }


def recheck_bundles(out_dir: str | Path) -> list[str]:
    """Re-derive each accepted bundle's selection from its stored matrices.

    Returns the task ids whose stored decision does not reproduce; an empty
    list means every acceptance invariant holds.
    """
    failures = []
    for path in sorted(Path(out_dir, "bundles").glob("*.json")):
        doc = json.loads(path.read_text())
        golden = doc["golden_suite"]
        validation = doc["validation_suite"]
        num_candidates = len(golden[0]["candidate_outputs"]) if golden else 0

        def score(cases, weigh):
            totals = [0] * num_candidates
            for case in cases:
                for j, out in enumerate(case["candidate_outputs"]):
                    if out == case["expected"]:
                        totals[j] += case["weight"] if weigh else 1
            return totals

        weighted = score(golden, True)
        holdout = score(validation, False)
        j_star = max(range(num_candidates), key=lambda j: (weighted[j], -j))
        j_dagger = max(range(num_candidates), key=lambda j: (holdout[j], -j))
        chosen = doc["golden_index"]

        ok = weighted == doc["weighted_scores"] and chosen is not None
        if ok and doc["config"]["mode"] == "strict":
            ok = j_star == j_dagger == chosen
        elif ok:
            if j_star == j_dagger:
                ok = chosen == j_star
            else:
                total_weight = sum(c["weight"] for c in golden)
                band = max(weighted) - doc["config"]["epsilon"] * total_weight
                ok = chosen == j_dagger and weighted[chosen] >= band
        if not ok:
            failures.append(doc["task"]["task_id"])
    return failures

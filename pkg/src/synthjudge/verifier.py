"""Dual-verification of solutions against voted test suites.

The strict procedure: split the voted suite into a weighted selection half
(T_golden) and a hold-out half (T_val); pick the candidate maximizing the
weighted pass score on T_golden; confirm it also wins unweighted accuracy
on T_val; accept on agreement, discard the task otherwise.

Relaxed mode softens the confirmation instead of dropping the task: when
the weighted winner and the hold-out winner disagree, the hold-out winner
is accepted provided its weighted score is competitively high, within
``epsilon`` (a fraction of the total attainable weight) of the best. At
epsilon = 0 this coincides with strict verification up to score ties;
larger epsilon accepts a superset of tasks. Strict is the default.

Also houses the candidate-solution filters (tag completeness, AST
validity, single code block, length bounds), the solvability filter, and
the data-selection strategies.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

from .consensus import CandidateSuite, WeightedCase
from .rng import Stream
from .sandbox import (
    CandidateSolution,
    ExtractionStatus,
    Verdict,
    check_syntax,
    count_code_blocks,
    extract_code,
)

__all__ = [
    "FilterReason",
    "SolutionFilterReport",
    "SuiteSplit",
    "Decision",
    "VerifyConfig",
    "VerifiedBundle",
    "SplitTooSmallError",
    "approx_tokens",
    "filter_solutions",
    "split_suite",
    "weighted_select",
    "holdout_confirm",
    "dual_verify",
    "solvability_filter",
    "pass_rate_bucket",
    "select_subset",
    "PASS_RATE_BUCKETS",
]


class SplitTooSmallError(RuntimeError):
    """The suite cannot produce nonempty selection and hold-out halves."""


# --------------------------------------------------------------------------
# Solution filters
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def approx_tokens(text: str) -> int:
    """Whitespace-and-punctuation token approximation.

    Words and individual punctuation marks each count as one token. This is
    the documented stand-in for a real tokenizer; the 200/25k thresholds
    are counts of these approximate tokens.
    """
    return len(_TOKEN_RE.findall(text))


class FilterReason(str, Enum):
    MISSING_TAGS = "missing_tags"
    AST_INVALID = "ast_invalid"
    MULTIPLE_CODE_BLOCKS = "multiple_code_blocks"
    TOO_LONG = "too_long"
    TASK_TOO_SHORT = "task_too_short"


@dataclass(frozen=True)
class SolutionFilterReport:
    kept: list[int]
    rejected: list[tuple[int, FilterReason]]


def filter_solutions(
    task_statement: str,
    candidates: Sequence[str],
    max_tokens: int = 25_000,
    min_task_tokens: int = 200,
    *,
    require_tags: bool = True,
) -> SolutionFilterReport:
    """Reject unusable candidates; short tasks reject every candidate.

    Per-candidate checks, first failure wins: complete <think></think> tags
    (when required), single code block after the reasoning, AST-valid
    extracted program, token count within bound.
    """
    if approx_tokens(task_statement) < min_task_tokens:
        return SolutionFilterReport(
            kept=[],
            rejected=[(i, FilterReason.TASK_TOO_SHORT) for i in range(len(candidates))],
        )

    kept: list[int] = []
    rejected: list[tuple[int, FilterReason]] = []
    for i, raw in enumerate(candidates):
        reason = _filter_one(raw, max_tokens, require_tags)
        if reason is None:
            kept.append(i)
        else:
            rejected.append((i, reason))
    return SolutionFilterReport(kept=kept, rejected=rejected)


def _filter_one(raw: str, max_tokens: int, require_tags: bool) -> Optional[FilterReason]:
    after_reasoning = raw
    if require_tags:
        open_at = raw.find("<think>")
        close_at = raw.find("</think>")
        if open_at < 0 or close_at < 0 or close_at < open_at:
            return FilterReason.MISSING_TAGS
        after_reasoning = raw[close_at + len("</think>"):]
        if not after_reasoning.strip():
            return FilterReason.MISSING_TAGS
    if count_code_blocks(after_reasoning) > 1:
        return FilterReason.MULTIPLE_CODE_BLOCKS
    source = extract_code(raw)
    if source.extraction_status is not ExtractionStatus.EXTRACTED:
        return FilterReason.AST_INVALID
    if check_syntax(source) is not Verdict.PASS:
        return FilterReason.AST_INVALID
    if approx_tokens(raw) > max_tokens:
        return FilterReason.TOO_LONG
    return None


# --------------------------------------------------------------------------
# Suite split
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SuiteSplit:
    golden: tuple[WeightedCase, ...]
    validation: tuple[WeightedCase, ...]
    golden_indices: tuple[int, ...]
    validation_indices: tuple[int, ...]
    split_seed: int
    golden_fraction: float


def split_suite(
    cases: Sequence[WeightedCase],
    fraction: float = 0.5,
    seed: int = 0,
) -> SuiteSplit:
    """Deterministic seeded partition into selection and hold-out halves.

    Membership comes from a seeded shuffle; |golden| = round(fraction * n).
    Case order within each half follows the original suite for auditability.
    """
    n = len(cases)
    if n == 0:
        raise SplitTooSmallError("cannot split an empty suite")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    size = round(fraction * n)
    if size < 1 or n - size < 1:
        raise SplitTooSmallError(
            f"suite of {n} cases cannot fill both halves at fraction {fraction}"
        )
    order = list(range(n))
    Stream(seed).shuffle(order)
    golden_idx = tuple(sorted(order[:size]))
    val_idx = tuple(sorted(order[size:]))
    return SuiteSplit(
        golden=tuple(cases[i] for i in golden_idx),
        validation=tuple(cases[i] for i in val_idx),
        golden_indices=golden_idx,
        validation_indices=val_idx,
        split_seed=seed,
        golden_fraction=fraction,
    )


# --------------------------------------------------------------------------
# Selection and confirmation
# --------------------------------------------------------------------------


def weighted_select(
    suite: Sequence[WeightedCase],
    outcomes: Sequence[Sequence[Optional[str]]],
) -> tuple[int, list[int]]:
    """Weighted pass score per candidate; argmax with lowest-index ties.

    ``outcomes[j][i]`` is candidate j's normalized output on suite case i
    (None when the run produced no usable output). The score of candidate j
    is the sum of case weights where its output matches the expected one.
    """
    scores = [
        sum(c.weight for c, out in zip(suite, cand) if out == c.expected)
        for cand in outcomes
    ]
    best = max(range(len(scores)), key=lambda j: (scores[j], -j))
    return best, scores


def holdout_confirm(
    suite: Sequence[WeightedCase],
    outcomes: Sequence[Sequence[Optional[str]]],
) -> tuple[int, list[float]]:
    """Unweighted hold-out accuracy per candidate; argmax, lowest-index ties."""
    counts = [
        sum(1 for c, out in zip(suite, cand) if out == c.expected)
        for cand in outcomes
    ]
    best = max(range(len(counts)), key=lambda j: (counts[j], -j))
    return best, [c / len(suite) for c in counts]


class Decision(str, Enum):
    ACCEPTED = "accepted"
    DISCARDED_HOLDOUT_MISMATCH = "discarded_holdout_mismatch"
    DISCARDED_UNSOLVABLE = "discarded_unsolvable"
    DISCARDED_EMPTY_SUITE = "discarded_empty_suite"


@dataclass(frozen=True)
class VerifyConfig:
    split_fraction: float = 0.5
    split_seed: int = 0
    mode: str = "strict"  # "strict" | "relaxed"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.mode not in ("strict", "relaxed"):
            raise ValueError(f"unknown verification mode {self.mode!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class VerifiedBundle:
    task: object
    golden_index: Optional[int]
    golden_solution: Optional[CandidateSolution]
    golden_suite: tuple[WeightedCase, ...]
    validation_suite: tuple[WeightedCase, ...]
    weighted_scores: list[int]
    validation_accuracies: list[float]
    decision: Decision
    config: VerifyConfig
    split: Optional[SuiteSplit] = None
    solvability_checked: bool = False
    solvability_bucket: Optional[str] = None
    warnings: tuple[str, ...] = ()


def dual_verify(
    task,
    candidates: Sequence[CandidateSolution],
    suite: CandidateSuite,
    config: VerifyConfig = VerifyConfig(),
) -> VerifiedBundle:
    """Run weighted selection plus hold-out confirmation over a voted suite.

    Deterministic given (suite, config). Suites too small to split are
    discarded as empty: there is no dedicated decision state for them.
    """
    def discard(reason: Decision, note: str = "") -> VerifiedBundle:
        return VerifiedBundle(
            task=task, golden_index=None, golden_solution=None,
            golden_suite=(), validation_suite=(),
            weighted_scores=[], validation_accuracies=[],
            decision=reason, config=config,
            warnings=(note,) if note else (),
        )

    if len(suite.cases) == 0:
        return discard(Decision.DISCARDED_EMPTY_SUITE)
    try:
        split = split_suite(suite.cases, config.split_fraction, config.split_seed)
    except SplitTooSmallError as exc:
        return discard(Decision.DISCARDED_EMPTY_SUITE, str(exc))

    golden_out = suite.outputs_matrix(split.golden_indices)
    val_out = suite.outputs_matrix(split.validation_indices)
    j_star, scores = weighted_select(split.golden, golden_out)
    j_dagger, accuracies = holdout_confirm(split.validation, val_out)

    chosen: Optional[int] = None
    if j_star == j_dagger:
        chosen = j_star
    elif config.mode == "relaxed":
        total_weight = sum(c.weight for c in split.golden)
        if scores[j_dagger] >= max(scores) - config.epsilon * total_weight:
            chosen = j_dagger

    if chosen is None:
        bundle = discard(Decision.DISCARDED_HOLDOUT_MISMATCH)
        return replace(
            bundle,
            golden_suite=split.golden,
            validation_suite=split.validation,
            weighted_scores=scores,
            validation_accuracies=accuracies,
            split=split,
        )

    return VerifiedBundle(
        task=task,
        golden_index=chosen,
        golden_solution=candidates[chosen] if candidates else None,
        golden_suite=split.golden,
        validation_suite=split.validation,
        weighted_scores=scores,
        validation_accuracies=accuracies,
        decision=Decision.ACCEPTED,
        config=config,
        split=split,
    )


# --------------------------------------------------------------------------
# Solvability filter
# --------------------------------------------------------------------------

PASS_RATE_BUCKETS = ("(0,20)", "[20,40)", "[40,60)", "[60,80)", "[80,100)", "100")


def pass_rate_bucket(passed: int, total: int) -> str:
    """Bucket a proxy-solver pass rate; 0% is the discard condition, not a bucket."""
    if total <= 0:
        raise ValueError("total must be positive")
    if passed == 0:
        raise ValueError("zero pass rate is a discard, not a bucket")
    pct = 100.0 * passed / total
    if pct >= 100.0:
        return "100"
    for lo, hi, name in (
        (0, 20, "(0,20)"), (20, 40, "[20,40)"), (40, 60, "[40,60)"),
        (60, 80, "[60,80)"), (80, 100, "[80,100)"),
    ):
        if (pct > lo if lo == 0 else pct >= lo) and pct < hi:
            return name
    raise AssertionError("unreachable")


def solvability_filter(
    bundle: VerifiedBundle,
    proxy_outcomes: Optional[Sequence[bool]],
) -> VerifiedBundle:
    """Discard tasks a strong proxy solver cannot pass a single case on.

    ``proxy_outcomes`` holds one pass/fail per golden-suite case. Missing
    outcomes let the bundle through unfiltered, flagged with a warning.
    """
    if bundle.decision is not Decision.ACCEPTED:
        return bundle
    if proxy_outcomes is None:
        return replace(
            bundle,
            solvability_checked=False,
            warnings=bundle.warnings + ("solvability filter skipped: no proxy outcomes",),
        )
    passed = sum(bool(x) for x in proxy_outcomes)
    total = len(proxy_outcomes)
    if passed == 0:
        return replace(
            bundle,
            decision=Decision.DISCARDED_UNSOLVABLE,
            solvability_checked=True,
            solvability_bucket=None,
        )
    return replace(
        bundle,
        solvability_checked=True,
        solvability_bucket=pass_rate_bucket(passed, total),
    )


# --------------------------------------------------------------------------
# Data selection
# --------------------------------------------------------------------------


def select_subset(
    pool: Sequence[VerifiedBundle],
    strategy: str,
    k: int,
    seed: int = 0,
    scorer: Optional[Callable[[VerifiedBundle], float]] = None,
) -> list[VerifiedBundle]:
    """Pick k bundles: seeded-uniform, longest-rationale-first, or by scorer.

    Results keep pool order, so k == len(pool) is the identity under every
    strategy. Rationale length is the approximate token count of the golden
    solution's reasoning; ties break toward the lower index.
    """
    if k > len(pool):
        raise ValueError(f"cannot select {k} of {len(pool)}")
    if strategy == "random":
        picked = set(Stream(seed).sample_indices(len(pool), k))
    elif strategy == "rationale_length":
        def rationale_len(i: int) -> int:
            sol = pool[i].golden_solution
            return approx_tokens(sol.reasoning) if sol else 0
        ranked = sorted(range(len(pool)), key=lambda i: (-rationale_len(i), i))
        picked = set(ranked[:k])
    elif strategy == "difficulty":
        if scorer is None:
            raise ValueError("difficulty strategy requires a scorer")
        ranked = sorted(range(len(pool)), key=lambda i: (-scorer(pool[i]), i))
        picked = set(ranked[:k])
    else:
        raise ValueError(f"unknown selection strategy {strategy!r}")
    return [pool[i] for i in range(len(pool)) if i in picked]


# --------------------------------------------------------------------------
# Bundle serialization
# --------------------------------------------------------------------------


def _case_record(case: WeightedCase) -> dict:
    return {
        "label": case.input.label,
        "category": case.input.category.value,
        "input_text": case.input.input_text,
        "byte_size": case.input.byte_size,
        "expected": case.expected,
        "weight": case.weight,
        "consensus_ratio": case.consensus_ratio,
        "ballots": case.ballots,
        "candidate_outputs": list(case.candidate_outputs),
    }


def bundle_record(bundle: VerifiedBundle) -> dict:
    """JSON-ready record: task, chosen solution, suites, scores, decision.

    Contains no timestamps or timing, so records replay byte-identically.
    """
    task = bundle.task
    task_rec = task.to_dict() if hasattr(task, "to_dict") else {"task_id": str(task)}
    sol = bundle.golden_solution
    return {
        "task": task_rec,
        "decision": bundle.decision.value,
        "golden_index": bundle.golden_index,
        "golden_solution": None if sol is None else {
            "reasoning": sol.reasoning,
            "code": sol.program.extracted_code,
        },
        "golden_suite": [_case_record(c) for c in bundle.golden_suite],
        "validation_suite": [_case_record(c) for c in bundle.validation_suite],
        "weighted_scores": bundle.weighted_scores,
        "validation_accuracies": bundle.validation_accuracies,
        "config": {
            "split_fraction": bundle.config.split_fraction,
            "split_seed": bundle.config.split_seed,
            "mode": bundle.config.mode,
            "epsilon": bundle.config.epsilon,
        },
        "solvability_checked": bundle.solvability_checked,
        "solvability_bucket": bundle.solvability_bucket,
        "warnings": list(bundle.warnings),
    }


def write_bundle(path: str | Path, bundle: VerifiedBundle) -> None:
    Path(path).write_text(json.dumps(bundle_record(bundle), indent=2, sort_keys=True) + "\n")

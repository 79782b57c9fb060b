"""Consensus voting over candidate outputs and test-case weighting.

For each test input, every candidate program runs in the sandbox and its
normalized stdout becomes a ballot; the most frequent output wins and
becomes the provisional expected output for that input. Inputs whose
winning share falls below ``min_consensus`` are dropped rather than trusted
(set it to 0 to keep every plurality winner).

Two weighting schemes are built in:

* semantic  — nominal 1, complex 2, boundary 3, stress 4 (testgen category)
* size      — quartiles of input byte size; rank boundaries at ceil(k*n/4)

Size-based weighting is the default scheme.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .sandbox import CandidateSolution, ResourceLimits, Verdict, run_one
from .testgen import CATEGORY_WEIGHTS, Category, TestInput

__all__ = [
    "VoteResult",
    "WeightedCase",
    "CandidateSuite",
    "EmptySuiteError",
    "normalize_output",
    "outputs_equal",
    "vote",
    "weight_semantic",
    "weight_by_size",
    "build_candidate_suite",
    "write_audit",
]


class EmptySuiteError(RuntimeError):
    """Every input was dropped; the task has no usable test suite."""


def normalize_output(raw: str) -> str:
    """Canonicalize captured stdout for comparison.

    Trailing whitespace is stripped from each line and trailing blank lines
    are dropped; interior content is preserved exactly.
    """
    lines = [line.rstrip() for line in raw.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


def _tokens_equal(a: str, b: str, abs_tol: float, rel_tol: float) -> bool:
    if a == b:
        return True
    try:
        fa, fb = float(a), float(b)
    except ValueError:
        return False
    if math.isnan(fa) or math.isnan(fb):
        return False
    diff = abs(fa - fb)
    return diff <= abs_tol or diff <= rel_tol * max(abs(fa), abs(fb))


def outputs_equal(
    a: str,
    b: str,
    *,
    numeric: bool = False,
    abs_tol: float = 1e-6,
    rel_tol: float = 1e-6,
) -> bool:
    """Equality on normalized outputs; numeric mode compares token-wise."""
    if not numeric:
        return a == b
    ta, tb = a.split(), b.split()
    if len(ta) != len(tb):
        return False
    return all(_tokens_equal(x, y, abs_tol, rel_tol) for x, y in zip(ta, tb))


@dataclass(frozen=True)
class VoteResult:
    consensus_output: Optional[str]
    consensus_ratio: float
    ballots: dict[str, int]
    contributing_candidates: tuple[int, ...]


def vote(
    outputs: Sequence[Optional[str]],
    min_consensus: float = 0.5,
) -> VoteResult:
    """Majority vote over normalized outputs, one slot per candidate.

    Crashed/TLE candidates hold an empty slot and cast no ballot. The winner
    is the most frequent output; ties break toward the output whose first
    contributing candidate has the lowest index, so voting is deterministic
    and auditable. The winner is withheld when its share of valid ballots is
    below ``min_consensus`` or there are no ballots at all.
    """
    ballots: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for idx, out in enumerate(outputs):
        if out is None:
            continue
        ballots[out] = ballots.get(out, 0) + 1
        first_seen.setdefault(out, idx)

    valid = sum(ballots.values())
    if valid == 0:
        return VoteResult(None, 0.0, {}, ())

    winner = min(ballots, key=lambda o: (-ballots[o], first_seen[o]))
    ratio = ballots[winner] / valid
    contributors = tuple(i for i, out in enumerate(outputs) if out == winner)
    if ratio < min_consensus:
        return VoteResult(None, ratio, dict(ballots), contributors)
    return VoteResult(winner, ratio, dict(ballots), contributors)


def weight_semantic(category: Category) -> int:
    return CATEGORY_WEIGHTS[category]


def weight_by_size(cases: Sequence[TestInput] | Sequence[int]) -> list[int]:
    """Quartile weights 1..4 by input byte size, returned in input order.

    Cases are stable-sorted by size (ties keep original order); ranks up to
    ceil(n/4) get weight 1, up to ceil(2n/4) weight 2, up to ceil(3n/4)
    weight 3, the rest weight 4. Accepts TestInputs or raw byte sizes.
    """
    if not cases:
        raise ValueError("weight_by_size needs at least one case")
    sizes = [c.byte_size if isinstance(c, TestInput) else int(c) for c in cases]
    n = len(sizes)
    order = sorted(range(n), key=lambda i: (sizes[i], i))
    bounds = [math.ceil(k * n / 4) for k in (1, 2, 3)]
    weights = [0] * n
    for rank, idx in enumerate(order, start=1):
        if rank <= bounds[0]:
            weights[idx] = 1
        elif rank <= bounds[1]:
            weights[idx] = 2
        elif rank <= bounds[2]:
            weights[idx] = 3
        else:
            weights[idx] = 4
    return weights


@dataclass(frozen=True)
class WeightedCase:
    """One voted test case: input, expected output, weight, and audit trail."""

    input: TestInput
    expected: str
    weight: int
    consensus_ratio: float
    ballots: dict[str, int] = field(default_factory=dict)
    candidate_outputs: tuple[Optional[str], ...] = ()


@dataclass(frozen=True)
class CandidateSuite:
    """T_candidate: the voted cases plus the full execution matrix."""

    cases: tuple[WeightedCase, ...]
    num_candidates: int
    dropped_inputs: tuple[str, ...] = ()  # labels that failed to reach consensus

    def __len__(self) -> int:
        return len(self.cases)

    def outputs_matrix(self, indices: Sequence[int] | None = None) -> list[list[Optional[str]]]:
        """Per-candidate outputs, sliced to the given case indices."""
        idxs = range(len(self.cases)) if indices is None else indices
        return [
            [self.cases[i].candidate_outputs[j] for i in idxs]
            for j in range(self.num_candidates)
        ]


def build_candidate_suite(
    task,
    candidates: Sequence[CandidateSolution],
    inputs: Sequence[TestInput],
    limits: ResourceLimits = ResourceLimits(),
    *,
    weighting: str = "size",
    min_consensus: float = 0.5,
    max_workers: int = 4,
    python_exe: Optional[str] = None,
    scratch_root: Optional[str] = None,
) -> CandidateSuite:
    """Run every candidate on every input, vote per input, attach weights.

    Issues exactly len(candidates) x len(inputs) sandbox runs; a non-Pass
    execution contributes no ballot. Inputs without consensus are dropped.
    Raises EmptySuiteError when nothing survives.
    """
    if not inputs:
        raise EmptySuiteError(f"task {getattr(task, 'task_id', task)!r}: no inputs")
    if weighting not in ("size", "semantic"):
        raise ValueError(f"unknown weighting scheme {weighting!r}")

    pairs = [(j, i) for j in range(len(candidates)) for i in range(len(inputs))]

    def run_pair(pair: tuple[int, int]) -> Optional[str]:
        j, i = pair
        outcome = run_one(
            candidates[j].program,
            inputs[i].input_text,
            limits,
            python_exe=python_exe,
            scratch_root=scratch_root,
        )
        if outcome.verdict is Verdict.PASS:
            return normalize_output(outcome.stdout)
        return None

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        flat = list(pool.map(run_pair, pairs))

    matrix: list[list[Optional[str]]] = [
        flat[j * len(inputs):(j + 1) * len(inputs)] for j in range(len(candidates))
    ]

    kept: list[tuple[TestInput, VoteResult, tuple[Optional[str], ...]]] = []
    dropped: list[str] = []
    for i, item in enumerate(inputs):
        column = tuple(matrix[j][i] for j in range(len(candidates)))
        result = vote(column, min_consensus=min_consensus)
        if result.consensus_output is None:
            dropped.append(item.label)
        else:
            kept.append((item, result, column))

    if not kept:
        raise EmptySuiteError(
            f"task {getattr(task, 'task_id', task)!r}: no input reached consensus"
        )

    if weighting == "size":
        weights = weight_by_size([item.byte_size for item, _, _ in kept])
    else:
        weights = [weight_semantic(item.category) for item, _, _ in kept]

    cases = tuple(
        WeightedCase(
            input=item,
            expected=result.consensus_output,  # type: ignore[arg-type]
            weight=weights[k],
            consensus_ratio=result.consensus_ratio,
            ballots=result.ballots,
            candidate_outputs=column,
        )
        for k, (item, result, column) in enumerate(kept)
    )
    return CandidateSuite(
        cases=cases, num_candidates=len(candidates), dropped_inputs=tuple(dropped)
    )


def write_audit(path: str | Path, task_id: str, suite: CandidateSuite) -> None:
    """Per-task audit record: ballot table, ratio, chosen output, weight."""
    record = {
        "task_id": task_id,
        "num_candidates": suite.num_candidates,
        "dropped_inputs": list(suite.dropped_inputs),
        "cases": [
            {
                "label": c.input.label,
                "category": c.input.category.value,
                "byte_size": c.input.byte_size,
                "ballots": c.ballots,
                "consensus_ratio": c.consensus_ratio,
                "expected": c.expected,
                "weight": c.weight,
            }
            for c in suite.cases
        ],
    }
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")

"""Wire schema for judge jobs (JSON payloads on the broker and over HTTP).

Request::

    {
      "task_id": "t-001",                      # optional
      "solution": {"raw_response": "..."}       # or {"code": "..."}
      "suite": [{"input": "21\n", "expected": "42", "weight": 1}, ...],
      "limits": {"wall_time_ms": 6000, ...},    # optional, defaults apply
      "mode": "verdicts" | "reward" | "both",
      "entry_signature": "class Solution: ..."  # optional, starter-code tasks
    }

Response::

    {
      "job_id": "...",
      "verdicts": ["pass", "wrong_answer", ...],
      "passed": 3, "total": 4,
      "reward": 3.75,                # present iff mode requested it
      "timing_ms": [12, 9, 11, 10],
      "extraction_status": "extracted",
      "syntax_ok": true
    }

Expected outputs are normalized at ingest so every comparison downstream
operates on canonical text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from ..consensus import normalize_output
from ..sandbox import ResourceLimits


class ValidationError(ValueError):
    pass


class Mode(str, Enum):
    VERDICTS = "verdicts"
    REWARD = "reward"
    BOTH = "both"

    @property
    def wants_reward(self) -> bool:
        return self in (Mode.REWARD, Mode.BOTH)


@dataclass(frozen=True)
class SuiteCase:
    input: str
    expected: str
    weight: int = 1


@dataclass(frozen=True)
class JudgeRequest:
    solution_raw: Optional[str]
    solution_code: Optional[str]
    suite: tuple[SuiteCase, ...]
    limits: ResourceLimits = ResourceLimits()
    mode: Mode = Mode.BOTH
    task_id: Optional[str] = None
    entry_signature: Optional[str] = None

    def __post_init__(self):
        if (self.solution_raw is None) == (self.solution_code is None):
            raise ValidationError("exactly one of raw_response/code must be given")
        if not self.suite:
            raise ValidationError("suite must be nonempty")

    @classmethod
    def from_dict(cls, doc: dict) -> "JudgeRequest":
        if not isinstance(doc, dict):
            raise ValidationError("request must be an object")
        sol = doc.get("solution")
        if not isinstance(sol, dict) or not ("raw_response" in sol) ^ ("code" in sol):
            raise ValidationError("solution needs exactly one of raw_response/code")
        raw_suite = doc.get("suite")
        if not isinstance(raw_suite, list) or not raw_suite:
            raise ValidationError("suite must be a nonempty list")
        suite = []
        for i, entry in enumerate(raw_suite):
            if not isinstance(entry, dict) or "input" not in entry or "expected" not in entry:
                raise ValidationError(f"suite case {i} needs input and expected")
            weight = entry.get("weight", 1)
            if not isinstance(weight, int) or weight < 1:
                raise ValidationError(f"suite case {i}: weight must be a positive int")
            suite.append(SuiteCase(
                input=str(entry["input"]),
                expected=normalize_output(str(entry["expected"])),
                weight=weight,
            ))
        limits_doc = doc.get("limits") or {}
        try:
            limits = ResourceLimits(**limits_doc)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad limits: {exc}") from exc
        try:
            mode = Mode(doc.get("mode", "both"))
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        return cls(
            solution_raw=sol.get("raw_response"),
            solution_code=sol.get("code"),
            suite=tuple(suite),
            limits=limits,
            mode=mode,
            task_id=doc.get("task_id"),
            entry_signature=doc.get("entry_signature"),
        )

    def to_dict(self) -> dict:
        sol = (
            {"raw_response": self.solution_raw}
            if self.solution_raw is not None
            else {"code": self.solution_code}
        )
        return {
            "task_id": self.task_id,
            "solution": sol,
            "suite": [
                {"input": c.input, "expected": c.expected, "weight": c.weight}
                for c in self.suite
            ],
            "limits": {
                "wall_time_ms": self.limits.wall_time_ms,
                "cpu_time_ms": self.limits.cpu_time_ms,
                "memory_bytes": self.limits.memory_bytes,
                "output_cap_bytes": self.limits.output_cap_bytes,
            },
            "mode": self.mode.value,
            "entry_signature": self.entry_signature,
        }

    def to_payload(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")

    @classmethod
    def from_payload(cls, payload: bytes) -> "JudgeRequest":
        return cls.from_dict(json.loads(payload.decode("utf-8")))


@dataclass(frozen=True)
class JudgeResponse:
    job_id: str
    verdicts: tuple[str, ...]
    passed: int
    total: int
    reward: Optional[float]
    timing_ms: tuple[int, ...]
    extraction_status: str
    syntax_ok: bool

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "verdicts": list(self.verdicts),
            "passed": self.passed,
            "total": self.total,
            "reward": self.reward,
            "timing_ms": list(self.timing_ms),
            "extraction_status": self.extraction_status,
            "syntax_ok": self.syntax_ok,
        }

    def to_payload(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")

    @classmethod
    def from_dict(cls, doc: dict) -> "JudgeResponse":
        return cls(
            job_id=doc["job_id"],
            verdicts=tuple(doc["verdicts"]),
            passed=doc["passed"],
            total=doc["total"],
            reward=doc.get("reward"),
            timing_ms=tuple(doc.get("timing_ms", ())),
            extraction_status=doc["extraction_status"],
            syntax_ok=doc["syntax_ok"],
        )

    @classmethod
    def from_payload(cls, payload: bytes) -> "JudgeResponse":
        return cls.from_dict(json.loads(payload.decode("utf-8")))

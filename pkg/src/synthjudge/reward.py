"""RL reward signal from judged outcomes.

The reward for a rollout is:

    -2                         no code extracted, or the code fails to parse
     0                         parses but passes no test cases
     5.0 * passed / total      otherwise

There is no formatting reward. "Compiles" for the Python target means the
source parses (see sandbox.check_syntax). The fraction is evaluated as
``(5.0 * passed) / total`` in binary64, so passed == total yields exactly
5.0 and passed == total/2 yields exactly 2.5.

A weighted variant (pass weight over total weight) exists behind a flag for
experiments; the default RL reward counts tests unweighted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .sandbox import ExtractionStatus

__all__ = ["RewardInput", "Reward", "compute_reward"]

NO_CODE_REWARD = -2.0
MAX_REWARD = 5.0


@dataclass(frozen=True)
class RewardInput:
    extraction_status: ExtractionStatus
    syntax_ok: bool
    passed: int
    total: int
    weighted_passed: Optional[float] = None
    weighted_total: Optional[float] = None

    def __post_init__(self):
        if self.passed < 0 or self.passed > self.total:
            raise ValueError("need 0 <= passed <= total")
        if self.syntax_ok and self.extraction_status is ExtractionStatus.EXTRACTED \
                and self.total < 1:
            raise ValueError("total must be >= 1 for a runnable solution")


@dataclass(frozen=True)
class Reward:
    value: float


def compute_reward(inp: RewardInput, *, use_weighted: bool = False) -> Reward:
    if inp.extraction_status is not ExtractionStatus.EXTRACTED or not inp.syntax_ok:
        return Reward(NO_CODE_REWARD)
    if use_weighted:
        if inp.weighted_passed is None or inp.weighted_total is None:
            raise ValueError("weighted reward requested without weighted counts")
        if inp.weighted_total <= 0:
            raise ValueError("weighted_total must be positive")
        if inp.weighted_passed == 0:
            return Reward(0.0)
        return Reward((MAX_REWARD * inp.weighted_passed) / inp.weighted_total)
    if inp.total == 0:
        raise ValueError("total must be >= 1 when the code parses")
    if inp.passed == 0:
        return Reward(0.0)
    return Reward((MAX_REWARD * inp.passed) / inp.total)

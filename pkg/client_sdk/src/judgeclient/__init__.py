"""judgeclient: a thin, synchronous client for the judging gateway.

Batch-submit judge requests over HTTP, block on their rewards, and get back
a plain list of floats in request order, ready for policy-update code.
"""

from .client import (
    ClientConfig,
    GatewayError,
    GatewayUnavailable,
    JudgeClient,
    RetryPolicy,
    RewardTimeoutError,
)

__all__ = [
    "ClientConfig",
    "GatewayError",
    "GatewayUnavailable",
    "JudgeClient",
    "RetryPolicy",
    "RewardTimeoutError",
]

__version__ = "0.1.0"

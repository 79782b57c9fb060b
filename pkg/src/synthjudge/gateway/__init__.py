"""Client-facing judging service: submissions in, verdicts and rewards out.

A gateway validates judge requests, fans them into the broker, and
assembles worker results; workers pop jobs, run the suite in the sandbox,
and push responses back through per-job result channels.

HTTP surface (see ``httpd``): POST /v1/jobs, GET /v1/jobs/{id},
GET /v1/workers, GET /v1/healthz.
"""

from .schema import JudgeRequest, JudgeResponse, Mode, SuiteCase, ValidationError
from .service import GatewayService
from .worker import execute_request, run_worker

__all__ = [
    "JudgeRequest",
    "JudgeResponse",
    "Mode",
    "SuiteCase",
    "ValidationError",
    "GatewayService",
    "execute_request",
    "run_worker",
]

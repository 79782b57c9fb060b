"""Sandboxed execution and failure classification for untrusted programs.

Runs one program against one stdin payload in a scratch directory under
wall/cpu/memory/output limits, and maps every way a model response can go
wrong onto a fixed verdict taxonomy:

    Pass, WrongAnswer, TimeLimitExceeded, MemoryLimitExceeded,
    NoCodeBlock, IncompleteCodeBlock, SignatureMismatch, SyntaxError
    (+ RuntimeError, a catch-all for nonzero-exit crashes)

Scratch layout per run: ``input.txt``, ``program.py``, ``stdout.txt``,
``stderr.txt``. The child gets a stripped environment (PATH and LANG pass
through; PYTHONHASHSEED=0 and PYTHONIOENCODING=utf-8 are injected so
judged output is deterministic) and runs in its own session so the whole
process group can be killed on timeout.

Enforcement on Linux: wall time by polling wait, cpu time via RLIMIT_CPU,
memory via RLIMIT_AS, per-file output via RLIMIT_FSIZE. "Compiles" for the
Python target means the source parses; no user code runs during the check.
"""

from __future__ import annotations

import ast
import os
import re
import resource
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

__all__ = [
    "ExtractionStatus",
    "Verdict",
    "ProgramSource",
    "ResourceLimits",
    "ExecutionOutcome",
    "CandidateSolution",
    "SandboxConfigError",
    "extract_code",
    "parse_candidate",
    "check_syntax",
    "run_one",
    "classify_failure",
    "required_entry_symbol",
    "has_entry_symbol",
]


class ExtractionStatus(str, Enum):
    EXTRACTED = "extracted"
    NO_CODE_BLOCK = "no_code_block"
    INCOMPLETE_CODE_BLOCK = "incomplete_code_block"


class Verdict(str, Enum):
    PASS = "pass"
    WRONG_ANSWER = "wrong_answer"
    TIME_LIMIT_EXCEEDED = "time_limit_exceeded"
    MEMORY_LIMIT_EXCEEDED = "memory_limit_exceeded"
    NO_CODE_BLOCK = "no_code_block"
    INCOMPLETE_CODE_BLOCK = "incomplete_code_block"
    SIGNATURE_MISMATCH = "signature_mismatch"
    SYNTAX_ERROR = "syntax_error"
    RUNTIME_ERROR = "runtime_error"

    @property
    def display_name(self) -> str:
        return self.value.replace("_", " ").title().replace("Limit ", "Limit ")


class SandboxConfigError(RuntimeError):
    """Sandbox setup problem (missing runtime, unspawnable child, bad limits).

    Never mapped onto a user-facing verdict.
    """


@dataclass(frozen=True)
class ProgramSource:
    raw_response: str
    extracted_code: Optional[str]
    extraction_status: ExtractionStatus

    def __post_init__(self):
        has_code = self.extracted_code is not None
        if has_code != (self.extraction_status is ExtractionStatus.EXTRACTED):
            raise ValueError("extracted_code present iff extraction succeeded")

    @classmethod
    def from_code(cls, code: str) -> "ProgramSource":
        """Wrap code that did not come from a fenced response (e.g. a file)."""
        return cls(raw_response=code, extracted_code=code,
                   extraction_status=ExtractionStatus.EXTRACTED)


@dataclass(frozen=True)
class CandidateSolution:
    """One model-produced solution: reasoning text plus extracted program."""

    raw_response: str
    reasoning: str
    program: ProgramSource


DEFAULT_WALL_MS = 6_000
DEFAULT_CPU_MS = 4_000
DEFAULT_MEMORY_BYTES = 1 << 30         # 1 GiB
DEFAULT_OUTPUT_CAP_BYTES = 64 << 20    # 64 MiB


@dataclass(frozen=True)
class ResourceLimits:
    wall_time_ms: int = DEFAULT_WALL_MS
    cpu_time_ms: int = DEFAULT_CPU_MS
    memory_bytes: int = DEFAULT_MEMORY_BYTES
    output_cap_bytes: int = DEFAULT_OUTPUT_CAP_BYTES

    def __post_init__(self):
        for field in ("wall_time_ms", "cpu_time_ms", "memory_bytes", "output_cap_bytes"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be strictly positive")
        if self.wall_time_ms < self.cpu_time_ms:
            raise ValueError("wall_time_ms must be >= cpu_time_ms")


@dataclass(frozen=True)
class ExecutionOutcome:
    verdict: Verdict
    stdout: str
    stderr: str
    wall_time_ms: int
    peak_memory_bytes: int
    exit_code: int
    stdout_truncated: bool = False


# --------------------------------------------------------------------------
# Code extraction
# --------------------------------------------------------------------------

_FENCE_OPEN = re.compile(r"^\s*```[A-Za-z0-9_+.-]*\s*$")
_FENCE_CLOSE = re.compile(r"^\s*```\s*$")


def extract_code(raw_response: str) -> ProgramSource:
    """Pull the final fenced code block out of a model response.

    The LAST properly closed block wins, because reasoning traces often
    contain interim snippets before the final implementation. A fence that
    opens but never closes marks the response as incomplete, even when an
    earlier block did close: the truncated block is the intended answer.
    """
    blocks: list[str] = []
    current: Optional[list[str]] = None
    for line in raw_response.split("\n"):
        if current is None:
            if _FENCE_OPEN.match(line):
                current = []
        else:
            if _FENCE_CLOSE.match(line):
                blocks.append("\n".join(current))
                current = None
            else:
                current.append(line)

    if current is not None:
        return ProgramSource(raw_response, None, ExtractionStatus.INCOMPLETE_CODE_BLOCK)
    if not blocks:
        return ProgramSource(raw_response, None, ExtractionStatus.NO_CODE_BLOCK)
    return ProgramSource(raw_response, blocks[-1], ExtractionStatus.EXTRACTED)


def count_code_blocks(text: str) -> int:
    """Number of closed fenced blocks in ``text`` (unclosed ones not counted)."""
    count = 0
    inside = False
    for line in text.split("\n"):
        if not inside and _FENCE_OPEN.match(line):
            inside = True
        elif inside and _FENCE_CLOSE.match(line):
            inside = False
            count += 1
    return count


_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)


def parse_candidate(raw_response: str) -> CandidateSolution:
    """Split a response into reasoning and program.

    Reasoning is the content of a complete ``<think>...</think>`` pair when
    present, otherwise all text before the final code fence.
    """
    match = _THINK_RE.search(raw_response)
    if match:
        reasoning = match.group(1).strip()
    else:
        head, sep, _ = raw_response.rpartition("```")
        reasoning = head.strip() if sep else raw_response.strip()
    return CandidateSolution(
        raw_response=raw_response,
        reasoning=reasoning,
        program=extract_code(raw_response),
    )


# --------------------------------------------------------------------------
# Syntax check (the "compile" gate for an interpreted target)
# --------------------------------------------------------------------------


def check_syntax(source: ProgramSource, runtime: Optional[str] = None) -> Verdict:
    """Parse-only check; never executes user code.

    With ``runtime=None`` the in-process parser is used (same CPython as the
    judge). Passing an interpreter path runs its parse mode instead; a
    missing interpreter raises SandboxConfigError, which is a deployment
    problem, not a SyntaxError.
    """
    if source.extraction_status is not ExtractionStatus.EXTRACTED:
        raise ValueError("check_syntax requires an extracted program")
    code = source.extracted_code or ""
    if runtime is None:
        try:
            ast.parse(code)
            return Verdict.PASS
        except (SyntaxError, ValueError):
            return Verdict.SYNTAX_ERROR
    try:
        proc = subprocess.run(
            [runtime, "-c", "import ast,sys; ast.parse(sys.stdin.read())"],
            input=code.encode("utf-8"),
            capture_output=True,
            timeout=30,
        )
    except FileNotFoundError as exc:
        raise SandboxConfigError(f"runtime not installed: {runtime}") from exc
    return Verdict.PASS if proc.returncode == 0 else Verdict.SYNTAX_ERROR


# --------------------------------------------------------------------------
# Execution
# --------------------------------------------------------------------------

_ENV_ALLOWLIST = ("PATH", "LANG")
_POLL_INTERVAL_S = 0.004
_STDERR_TAIL_BYTES = 8192


def _child_env() -> dict[str, str]:
    env = {k: os.environ[k] for k in _ENV_ALLOWLIST if k in os.environ}
    env["PYTHONHASHSEED"] = "0"
    env["PYTHONIOENCODING"] = "utf-8"
    return env


def _make_preexec(limits: ResourceLimits):
    cpu_s = max(1, -(-limits.cpu_time_ms // 1000))  # ceil to whole seconds

    def preexec():
        os.setsid()
        resource.setrlimit(resource.RLIMIT_CPU, (cpu_s, cpu_s + 1))
        resource.setrlimit(resource.RLIMIT_AS, (limits.memory_bytes,) * 2)
        resource.setrlimit(resource.RLIMIT_FSIZE, (limits.output_cap_bytes,) * 2)
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))

    return preexec


def _read_capped(path: str, cap: int) -> tuple[str, bool]:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        data = fh.read(cap)
    return data.decode("utf-8", errors="replace"), size > cap


def _read_tail(path: str, limit: int = _STDERR_TAIL_BYTES) -> str:
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        if size > limit:
            fh.seek(size - limit)
        return fh.read().decode("utf-8", errors="replace")


def run_one(
    source: ProgramSource | str,
    input_text: str,
    limits: ResourceLimits = ResourceLimits(),
    *,
    python_exe: Optional[str] = None,
    scratch_root: Optional[str] = None,
    keep_scratch: bool = False,
) -> ExecutionOutcome:
    """Execute one program on one stdin payload under ``limits``.

    Independent calls are safe to run in parallel: each owns a fresh scratch
    directory and shares no state. Infrastructure failures (unspawnable
    child, missing interpreter) raise SandboxConfigError.
    """
    code = source.extracted_code if isinstance(source, ProgramSource) else source
    if code is None:
        raise ValueError("run_one requires extracted program code")
    exe = python_exe or sys.executable

    scratch = tempfile.mkdtemp(prefix="sjrun-", dir=scratch_root)
    prog_path = os.path.join(scratch, "program.py")
    in_path = os.path.join(scratch, "input.txt")
    out_path = os.path.join(scratch, "stdout.txt")
    err_path = os.path.join(scratch, "stderr.txt")

    try:
        with open(prog_path, "w", encoding="utf-8") as fh:
            fh.write(code)
        with open(in_path, "w", encoding="utf-8") as fh:
            fh.write(input_text)

        start = time.monotonic()
        deadline = start + limits.wall_time_ms / 1000.0
        timed_out = False

        with open(in_path, "rb") as fin, open(out_path, "wb") as fout, \
                open(err_path, "wb") as ferr:
            try:
                proc = subprocess.Popen(
                    [exe, "-S", prog_path],
                    cwd=scratch,
                    stdin=fin,
                    stdout=fout,
                    stderr=ferr,
                    env=_child_env(),
                    preexec_fn=_make_preexec(limits),
                )
            except (FileNotFoundError, PermissionError, OSError) as exc:
                raise SandboxConfigError(f"cannot spawn sandbox child: {exc}") from exc

            while True:
                pid, status, rusage = os.wait4(proc.pid, os.WNOHANG)
                if pid == proc.pid:
                    break
                now = time.monotonic()
                if now >= deadline:
                    timed_out = True
                    try:
                        os.killpg(proc.pid, signal.SIGKILL)
                    except ProcessLookupError:
                        pass
                    pid, status, rusage = os.wait4(proc.pid, 0)
                    break
                time.sleep(min(_POLL_INTERVAL_S, max(deadline - now, 0.0)))

            if os.WIFSIGNALED(status):
                exit_code = -os.WTERMSIG(status)
            else:
                exit_code = os.WEXITSTATUS(status)
            proc.returncode = exit_code  # already reaped via wait4

        elapsed_ms = int((time.monotonic() - start) * 1000)
        peak_bytes = rusage.ru_maxrss * 1024
        cpu_used_s = rusage.ru_utime + rusage.ru_stime
        cpu_limit_s = max(1, -(-limits.cpu_time_ms // 1000))

        stdout, out_over = _read_capped(out_path, limits.output_cap_bytes)
        stderr, _ = _read_capped(err_path, limits.output_cap_bytes)
        err_tail = _read_tail(err_path)

        term_sig = -exit_code if exit_code < 0 else 0
        truncated = out_over or term_sig == signal.SIGXFSZ or "Errno 27" in err_tail

        if timed_out or term_sig == signal.SIGXCPU or (
            term_sig == signal.SIGKILL and cpu_used_s >= cpu_limit_s
        ):
            verdict = Verdict.TIME_LIMIT_EXCEEDED
        elif exit_code != 0 and "MemoryError" in err_tail:
            verdict = Verdict.MEMORY_LIMIT_EXCEEDED
        elif term_sig == signal.SIGKILL and peak_bytes >= int(limits.memory_bytes * 0.9):
            verdict = Verdict.MEMORY_LIMIT_EXCEEDED
        elif exit_code != 0:
            verdict = Verdict.RUNTIME_ERROR
        else:
            verdict = Verdict.PASS

        return ExecutionOutcome(
            verdict=verdict,
            stdout=stdout,
            stderr=stderr,
            wall_time_ms=elapsed_ms,
            peak_memory_bytes=peak_bytes,
            exit_code=exit_code,
            stdout_truncated=truncated,
        )
    finally:
        if not keep_scratch:
            shutil.rmtree(scratch, ignore_errors=True)


# --------------------------------------------------------------------------
# Failure classification
# --------------------------------------------------------------------------

_SYMBOL_RE = re.compile(r"\b(?:class|def)\s+([A-Za-z_][A-Za-z0-9_]*)")


def required_entry_symbol(entry_signature: Optional[str]) -> Optional[str]:
    """Name of the class/function a starter-code task requires, if any."""
    if not entry_signature:
        return None
    match = _SYMBOL_RE.search(entry_signature)
    return match.group(1) if match else None


def has_entry_symbol(code: str, symbol: str) -> bool:
    """Static scan: does the program define ``symbol`` anywhere?"""
    try:
        tree = ast.parse(code)
    except (SyntaxError, ValueError):
        return False
    for node in ast.walk(tree):
        if isinstance(node, (ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
            if node.name == symbol:
                return True
    return False


def classify_failure(
    source: Optional[ProgramSource],
    outcome: Optional[ExecutionOutcome] = None,
    expected: Optional[str] = None,
    *,
    entry_signature: Optional[str] = None,
    numeric: bool = False,
) -> Verdict:
    """Map (source, outcome, expected) onto exactly one verdict.

    Precedence: NoCodeBlock > IncompleteCodeBlock > SyntaxError >
    SignatureMismatch > TLE > MLE > RuntimeError > WrongAnswer > Pass.
    Pure and idempotent; SignatureMismatch only fires for starter-code
    tasks whose declared entry symbol is absent.
    """
    if source is None and outcome is None:
        raise ValueError("classify_failure needs a source or an outcome")

    if source is not None:
        if source.extraction_status is ExtractionStatus.NO_CODE_BLOCK:
            return Verdict.NO_CODE_BLOCK
        if source.extraction_status is ExtractionStatus.INCOMPLETE_CODE_BLOCK:
            return Verdict.INCOMPLETE_CODE_BLOCK
        if check_syntax(source) is Verdict.SYNTAX_ERROR:
            return Verdict.SYNTAX_ERROR
        symbol = required_entry_symbol(entry_signature)
        if symbol and not has_entry_symbol(source.extracted_code or "", symbol):
            return Verdict.SIGNATURE_MISMATCH

    if outcome is not None:
        if outcome.verdict in (
            Verdict.TIME_LIMIT_EXCEEDED,
            Verdict.MEMORY_LIMIT_EXCEEDED,
            Verdict.RUNTIME_ERROR,
        ):
            return outcome.verdict
        if expected is not None:
            from .consensus import normalize_output, outputs_equal

            if not outputs_equal(
                normalize_output(outcome.stdout), normalize_output(expected),
                numeric=numeric,
            ):
                return Verdict.WRONG_ANSWER
    return Verdict.PASS

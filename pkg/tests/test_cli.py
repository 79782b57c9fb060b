"""End-to-end CLI coverage using fixtures only (no network, no live provider)."""

import hashlib
import json
import subprocess
import sys
import time
import urllib.request
from pathlib import Path

import pytest

from synthjudge.cli import main
from synthjudge.consensus import WeightedCase
from synthjudge.verifier import split_suite

SPEC_DOC = {
    "seed": 11,
    "cases": [
        {"label": "nominal_tiny", "category": "nominal", "recipe": {"lines": [
            {"emit": "int", "min": 1, "max": 5, "bind": "n"},
            {"emit": "ints", "count": "$n", "min": 0, "max": 9},
        ]}},
        {"label": "stress_big", "category": "stress", "recipe": {"lines": [
            {"emit": "int", "min": 40, "max": 60, "bind": "n"},
            {"emit": "ints", "count": "$n", "min": -100, "max": 100},
        ]}},
    ],
}


def _dir_hash(path: Path) -> str:
    digest = hashlib.sha256()
    for file in sorted(path.rglob("*")):
        if file.is_file():
            digest.update(file.name.encode() + file.read_bytes())
    return digest.hexdigest()


class TestGenTests:
    def test_writes_files_and_is_replayable(self, tmp_path, capsys):
        spec_file = tmp_path / "spec.json"
        spec_file.write_text(json.dumps(SPEC_DOC))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["gen-tests", "--spec", str(spec_file), "--out", str(out_a)]) == 0
        assert main(["gen-tests", "--spec", str(spec_file), "--out", str(out_b)]) == 0
        assert _dir_hash(out_a) == _dir_hash(out_b)
        assert "nominal_tiny" in capsys.readouterr().out

    def test_missing_spec_exits_1(self, tmp_path, capsys):
        assert main(["gen-tests", "--spec", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_usage_error_exits_2(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["gen-tests", "--out", "somewhere"])
        assert excinfo.value.code == 2


class TestJudge:
    def test_doubling_program_passes(self, tmp_path, capsys):
        solution = tmp_path / "sol.py"
        solution.write_text("print(int(input()) * 2)\n")
        suite = tmp_path / "suite.json"
        suite.write_text(json.dumps({"cases": [{"input": "21\n", "expected": "42"}]}))
        out_file = tmp_path / "result.json"
        code = main([
            "judge", "--solution", str(solution), "--suite", str(suite),
            "--out", str(out_file), "--wall-ms", "2000", "--cpu-ms", "1500",
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "passed 1/1" in printed
        assert "Pass" in printed
        doc = json.loads(out_file.read_text())
        assert doc["verdicts"] == ["pass"] and doc["reward"] == 5.0

    def test_directory_suite_and_tally(self, tmp_path, capsys):
        solution = tmp_path / "sol.py"
        solution.write_text("print(int(input()) + 1)\n")
        suite_dir = tmp_path / "cases"
        suite_dir.mkdir()
        (suite_dir / "one.in").write_text("1\n")
        (suite_dir / "one.out").write_text("2\n")
        (suite_dir / "two.in").write_text("2\n")
        (suite_dir / "two.out").write_text("99\n")
        code = main(["judge", "--solution", str(solution), "--suite", str(suite_dir),
                     "--wall-ms", "2000", "--cpu-ms", "1500"])
        assert code == 0
        printed = capsys.readouterr().out
        assert "passed 1/2" in printed
        assert "Wrong Answer" in printed

    def test_response_file_with_no_code(self, tmp_path, capsys):
        response = tmp_path / "resp.txt"
        response.write_text("I could not finish the solution, sorry.")
        suite = tmp_path / "suite.json"
        suite.write_text(json.dumps([{"input": "1\n", "expected": "1"}]))
        code = main(["judge", "--solution", str(response), "--suite", str(suite)])
        assert code == 0
        assert "reward -2.0" in capsys.readouterr().out


class TestRewardCommand:
    def test_reads_judge_output(self, tmp_path, capsys):
        doc = {"extraction_status": "extracted", "syntax_ok": True,
               "passed": 7, "total": 10}
        path = tmp_path / "judged.json"
        path.write_text(json.dumps(doc))
        assert main(["reward", "--judge-output", str(path)]) == 0
        assert capsys.readouterr().out.strip() == "3.5"


def build_overfitter_task_dir(root: Path, seed: int = 5) -> Path:
    """Three real candidate programs on inputs 1..10.

    Candidates B and C echo their input (the consensus). Candidate A echoes
    on the golden half but corrupts the hold-out half, so it tops the
    weighted selection (tie broken to index 0) and flunks confirmation.
    """
    task_dir = root / "overfit-task"
    (task_dir / "inputs").mkdir(parents=True)
    (task_dir / "candidates").mkdir()
    values = list(range(1, 11))
    for v in values:
        (task_dir / "inputs" / f"{v:02d}.in").write_text(f"{v}\n")

    placeholder = [
        WeightedCase(input=None, expected="", weight=1, consensus_ratio=1.0)  # type: ignore[arg-type]
        for _ in values
    ]
    split = split_suite(placeholder, 0.5, seed=seed)
    val_values = [values[i] for i in split.validation_indices]

    echo = "v = input().strip()\nprint(v)\n"
    corrupt = (
        f"bad = {set(val_values)!r}\n"
        "v = int(input())\n"
        "print('corrupted' if v in bad else v)\n"
    )
    (task_dir / "candidates" / "a_overfit.py").write_text(
        f"```python\n{corrupt}```\n"
    )
    (task_dir / "candidates" / "b_solid.py").write_text(f"```python\n{echo}```\n")
    (task_dir / "candidates" / "c_solid.py").write_text(f"```python\n{echo}```\n")
    return task_dir


class TestVerifyCommand:
    def test_overfitter_fixture_is_rejected(self, tmp_path, capsys):
        task_dir = build_overfitter_task_dir(tmp_path)
        code = main([
            "verify", "--task-dir", str(task_dir), "--seed", "5",
            "--wall-ms", "2000", "--cpu-ms", "1500",
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "discarded_holdout_mismatch" in printed
        bundle = json.loads((task_dir / "bundle.json").read_text())
        assert bundle["decision"] == "discarded_holdout_mismatch"

    def test_relaxed_mode_accepts_generalist(self, tmp_path, capsys):
        task_dir = build_overfitter_task_dir(tmp_path)
        code = main([
            "verify", "--task-dir", str(task_dir), "--seed", "5",
            "--mode", "relaxed", "--epsilon", "0.25",
            "--wall-ms", "2000", "--cpu-ms", "1500",
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "accepted" in printed
        bundle = json.loads((task_dir / "bundle.json").read_text())
        assert bundle["golden_index"] == 1  # first echo candidate, not the overfitter


class TestPipelineAndReport:
    def test_pipeline_then_report(self, tmp_path, capsys):
        out_dir = tmp_path / "corpus"
        config = {
            "out_dir": str(out_dir),
            "master_seed": 7,
            "num_tasks": 4,
            "inputs_per_task": 5,
            "candidates_per_task": 3,
            "limits": {"wall_time_ms": 2000, "cpu_time_ms": 1500},
            "provider": {"kind": "synthetic"},
        }
        config_file = tmp_path / "config.json"
        config_file.write_text(json.dumps(config))
        assert main(["pipeline", "--config", str(config_file)]) == 0
        out = capsys.readouterr().out
        assert "tasks processed: 4" in out

        assert main(["report", "--corpus-dir", str(out_dir)]) == 0
        report_out = capsys.readouterr().out
        assert "attrition:" in report_out
        assert "[80,100)" in report_out
        assert "acceptance recheck" in report_out


@pytest.mark.soak
class TestServeEndToEnd:
    def test_serve_subprocess_round_trip(self, tmp_path):
        proc = subprocess.Popen(
            [sys.executable, "-m", "synthjudge.cli", "serve",
             "--bind", "127.0.0.1:0", "--local-workers", "2",
             "--audit-log", str(tmp_path / "audit.jsonl")],
            stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
        )
        try:
            line = proc.stdout.readline()
            assert "listening on" in line
            port = int(line.rsplit(":", 1)[1])
            body = json.dumps({"requests": [{
                "solution": {"code": "print(int(input()) * 2)"},
                "suite": [{"input": "21\n", "expected": "42"}],
                "limits": {"wall_time_ms": 2000, "cpu_time_ms": 1500},
            }]}).encode()
            request = urllib.request.Request(
                f"http://127.0.0.1:{port}/v1/jobs", data=body,
                headers={"Content-Type": "application/json"},
            )
            with urllib.request.urlopen(request, timeout=10) as resp:
                (job_id,) = json.loads(resp.read())["job_ids"]
            with urllib.request.urlopen(
                f"http://127.0.0.1:{port}/v1/jobs/{job_id}?timeout_ms=15000", timeout=30
            ) as resp:
                doc = json.loads(resp.read())
            assert doc["verdicts"] == ["pass"] and doc["reward"] == 5.0
            with urllib.request.urlopen(
                f"http://127.0.0.1:{port}/v1/healthz", timeout=5
            ) as resp:
                assert json.loads(resp.read())["status"] == "ok"
        finally:
            proc.terminate()
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()


def test_work_command_drains_external_queue(resp_server):
    """`work` against a RESP broker: enqueue jobs, workers result them."""
    import threading
    import uuid

    from synthjudge.broker.external import RespBroker
    from synthjudge.gateway.schema import JudgeRequest, SuiteCase
    from synthjudge.sandbox import ResourceLimits

    ns = f"work{uuid.uuid4().hex[:6]}"
    broker = RespBroker("127.0.0.1", resp_server.port, namespace=ns)
    request = JudgeRequest(
        solution_raw=None, solution_code="print(int(input()) * 2)",
        suite=(SuiteCase("8\n", "16"),),
        limits=ResourceLimits(wall_time_ms=2000, cpu_time_ms=1500),
    )
    ids = broker.enqueue([request.to_payload()] * 3)

    # The work command loops forever; run it as a daemon and watch results.
    thread = threading.Thread(
        target=main,
        args=(["work", "--broker", f"resp://127.0.0.1:{resp_server.port}",
               "--namespace", ns, "--parallelism", "2",
               "--worker-id", f"cliw-{ns}"],),
        daemon=True,
    )
    try:
        thread.start()
        for job_id in ids:
            payload = broker.await_result(job_id, 30_000)
            assert payload is not None
            doc = json.loads(payload)
            assert doc["verdicts"] == ["pass"]
    finally:
        broker.flush_namespace()

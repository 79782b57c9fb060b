"""Client SDK tests against a live gateway process.

The gateway comes up as a subprocess via its own CLI (`synthjudge serve`),
so the SDK is exercised strictly through the published HTTP surface.
"""

import json
import struct
import subprocess
import sys
import time
from pathlib import Path

import pytest

from judgeclient import (
    ClientConfig,
    GatewayError,
    GatewayUnavailable,
    JudgeClient,
    RewardTimeoutError,
)

FAST_LIMITS = {"wall_time_ms": 2000, "cpu_time_ms": 1500,
               "memory_bytes": 512 << 20, "output_cap_bytes": 1 << 20}


def judge_request(code="print(int(input()) * 2)", cases=((("21\n"), "42"),),
                  raw=None, mode="reward"):
    solution = {"raw_response": raw} if raw is not None else {"code": code}
    return {
        "solution": solution,
        "suite": [{"input": i, "expected": e} for i, e in cases],
        "limits": FAST_LIMITS,
        "mode": mode,
    }


@pytest.fixture(scope="module")
def gateway(tmp_path_factory):
    audit = tmp_path_factory.mktemp("gw") / "audit.jsonl"
    proc = subprocess.Popen(
        [sys.executable, "-m", "synthjudge.cli", "serve",
         "--bind", "127.0.0.1:0", "--broker", "memory",
         "--local-workers", "4", "--audit-log", str(audit)],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
    )
    line = proc.stdout.readline()
    assert "listening on" in line, line
    port = int(line.strip().rsplit(":", 1)[1])
    yield f"http://127.0.0.1:{port}", audit
    proc.terminate()
    try:
        proc.wait(timeout=5)
    except subprocess.TimeoutExpired:
        proc.kill()


@pytest.fixture
def client(gateway):
    url, _ = gateway
    c = JudgeClient(ClientConfig(base_url=url, timeout_ms=60_000, max_in_flight=8))
    yield c
    c.close()


class TestConfig:
    def test_max_in_flight_floor(self):
        with pytest.raises(ValueError):
            ClientConfig(base_url="http://localhost:1", max_in_flight=0)

    def test_url_validation(self):
        with pytest.raises(ValueError):
            ClientConfig(base_url="ftp://nope")


class TestBasics:
    def test_healthcheck(self, client):
        doc = client.healthcheck()
        assert doc["status"] == "ok"
        assert doc["workers"] >= 4

    def test_gateway_down_fails_before_handles(self):
        dead = JudgeClient(ClientConfig(base_url="http://127.0.0.1:9", timeout_ms=500))
        with pytest.raises(GatewayUnavailable):
            dead.submit_batch([judge_request()])

    def test_empty_batch(self, client):
        assert client.submit_batch([]) == []
        assert client.await_rewards([]) == []

    def test_eight_rollouts_order_preserved(self, client):
        # Eight rollouts of one task: distinguishable rewards, stable order.
        requests = []
        for k in range(8):
            cases = [("%d\n" % v, str(v * 2) if v <= k else "wrong") for v in range(8)]
            requests.append(judge_request(cases=cases))
        rewards = client.submit_and_await(requests)
        assert rewards == [(5.0 * (k + 1)) / 8 for k in range(8)]

    def test_verdict_mode_reward_is_protocol_error(self, client):
        (handle,) = client.submit_batch([judge_request(mode="verdicts")])
        with pytest.raises(GatewayError, match="no reward"):
            client.fetch_reward(handle, timeout_ms=30_000)

    def test_unknown_handle(self, client):
        with pytest.raises(GatewayError, match="unknown job"):
            client.fetch_reward("bogus", timeout_ms=100)

    def test_timeout_is_explicit(self, client):
        # A job nobody will ever finish: unknown handles raise instead, so
        # use a real submission with an impossible deadline.
        (handle,) = client.submit_batch([judge_request()])
        try:
            client.await_rewards([handle], timeout_ms=0)
        except RewardTimeoutError as exc:
            assert exc.job_ids == [handle]
        else:  # the worker can win the race; then the reward must be real
            pass


def bits(value: float) -> bytes:
    return struct.pack("<d", value)


@pytest.mark.acceptance
def test_sdk_round_trip_fifty_mixed_requests(gateway, client):
    """[SECONDARY] 50 mixed requests: order preserved, audit-log bit-equality,
    the no-code and all-fail rewards at their exact positions."""
    url, audit_path = gateway
    no_code_at, all_fail_at = 7, 23

    requests = []
    for i in range(50):
        if i == no_code_at:
            requests.append(judge_request(
                raw="The reasoning ran long and no code was produced."
            ))
        elif i == all_fail_at:
            requests.append(judge_request(
                code="print('nonsense')",
                cases=[("1\n", "2"), ("2\n", "4"), ("3\n", "6")],
            ))
        else:
            # Vary pass fractions so rewards include non-terminating decimals.
            total = 3 + (i % 3)
            passing = 1 + (i % total)
            cases = [
                ("%d\n" % v, str(v * 2) if v < passing else "off")
                for v in range(total)
            ]
            requests.append(judge_request(cases=cases))

    handles = client.submit_batch(requests)
    assert len(handles) == 50
    rewards = client.await_rewards(handles)

    assert rewards[no_code_at] == -2.0
    assert rewards[all_fail_at] == 0.0
    for i, reward in enumerate(rewards):
        if i in (no_code_at, all_fail_at):
            continue
        total = 3 + (i % 3)
        passing = 1 + (i % total)
        assert bits(reward) == bits((5.0 * passing) / total), f"request {i}"

    # Bit-equality against the gateway's own audit log, handle by handle.
    audited = {}
    for line in Path(audit_path).read_text().splitlines():
        doc = json.loads(line)
        audited[doc["job_id"]] = doc["reward"]
    for i, handle in enumerate(handles):
        assert handle in audited, f"no audit line for request {i}"
        assert bits(audited[handle]) == bits(rewards[i]), f"request {i} reward drifted"
    print("ACCEPTANCE PASS: SDK round trip (50 mixed requests, order + bit-equality, "
          f"-2 at {no_code_at}, 0 at {all_fail_at})")

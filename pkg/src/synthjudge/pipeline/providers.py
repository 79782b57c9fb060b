"""Text-generation providers behind one interface: ``complete(prompt) -> str``.

* ``SyntheticProvider`` — deterministic rule-based stand-in for a model.
  It answers each pipeline request kind with schema-correct output derived
  purely from the prompt text, including runnable candidate programs with
  a controlled bug rate, so end-to-end runs exercise real executions while
  replaying byte-identically.
* ``FixtureProvider`` — replays canned completions keyed by prompt hash.
* ``RecordingProvider`` — wraps another provider and records fixtures.
* ``HttpProvider`` — minimal JSON-over-HTTP client for a live endpoint.

Structured replies travel between ``<begin>`` and ``<end>`` delimiters;
surrounding prose is tolerated, schema violations are not.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
import urllib.request
from pathlib import Path
from typing import Protocol

from ..rng import Stream, derive_seed

REQUEST_MARKER = "## request:"
TASK_ID_MARKER = "## task-id:"
STYLE_MARKER = "## style:"
COUNT_MARKER = "## count:"
SEED_MARKER = "## seed:"
CANDIDATE_MARKER = "## candidate-index:"
PROBLEM_CODE_RE = re.compile(r"Problem code: SJ-([A-Z]+)")

BEGIN, END = "<begin>", "<end>"


class ProviderError(RuntimeError):
    pass


class ProviderFormatError(ProviderError):
    """The provider's reply did not match the requested schema."""


class Provider(Protocol):
    def complete(self, prompt: str) -> str: ...


def extract_delimited(text: str) -> str:
    """Pull the payload between the first <begin>/<end> pair."""
    start = text.find(BEGIN)
    if start < 0:
        raise ProviderFormatError("reply has no <begin> delimiter")
    end = text.find(END, start)
    if end < 0:
        raise ProviderFormatError("reply has no closing <end> delimiter")
    return text[start + len(BEGIN):end].strip()


def parse_structured(text: str) -> dict:
    payload = extract_delimited(text)
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ProviderFormatError(f"reply payload is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProviderFormatError("reply payload must be a JSON object")
    return doc


def _marker_value(prompt: str, marker: str) -> str:
    for line in prompt.split("\n"):
        if line.startswith(marker):
            return line[len(marker):].strip()
    raise ProviderError(f"prompt is missing the {marker!r} line")


# ---------------------------------------------------------------------------
# Deterministic synthetic provider
# ---------------------------------------------------------------------------

_VARIANTS = ("SUM", "MAX", "EVENS", "SPAN")

_OUTPUT_SPEC = {
    "SUM": "a single integer: the sum of all reported readings",
    "MAX": "a single integer: the largest reported reading",
    "EVENS": "a single integer: how many readings are even numbers",
    "SPAN": "a single integer: the difference between the largest and smallest reading",
}

_EXAMPLE_ANSWER = {"SUM": "6", "MAX": "3", "EVENS": "1", "SPAN": "2"}

_CORRECT_BODY = {
    "SUM": "print(sum(values))",
    "MAX": "print(max(values))",
    "EVENS": "print(sum(1 for v in values if v % 2 == 0))",
    "SPAN": "print(max(values) - min(values))",
}

_BUGGY_BODY = {
    "SUM": "print(sum(values) + 1)",
    "MAX": "print(max(values) - 1)",
    "EVENS": "print(sum(1 for v in values if v % 2 == 1))",
    "SPAN": "print(abs(values[-1] - values[0]))",
}

_FILLER = (
    "First consider what a single pass over the data must accumulate and whether "
    "any auxiliary structure is needed. ",
    "The constraints are small enough that a linear scan dominates the runtime, "
    "so the only real risk is mishandling the input format. ",
    "Check the boundary situation where the list holds exactly one reading, since "
    "several natural formulations degenerate there. ",
    "Negative readings are allowed, which rules out shortcuts that assume "
    "non-negative values. ",
    "After settling the approach, trace the provided example by hand to confirm "
    "the arithmetic before writing the final program. ",
)


class SyntheticProvider:
    """Schema-faithful mock model; a pure function of the prompt text."""

    def __init__(self, bug_rate_percent: int = 30, dropout_percent: int = 10):
        self.bug_rate = bug_rate_percent
        self.dropout = dropout_percent

    def complete(self, prompt: str) -> str:
        kind = _marker_value(prompt, REQUEST_MARKER)
        if kind == "feature-selection":
            return self._feature_selection(prompt)
        if kind == "task-statement":
            return self._statement(prompt)
        if kind == "test-inputs":
            return self._test_inputs(prompt)
        if kind == "generator-spec":
            return self._generator_spec(prompt)
        if kind == "candidate-solution":
            return self._solution(prompt)
        raise ProviderError(f"synthetic provider cannot serve request kind {kind!r}")

    # -- stage 1: feature selection ---------------------------------------

    def _feature_selection(self, prompt: str) -> str:
        marker = "features:"
        at = prompt.find(marker)
        if at < 0:
            raise ProviderError("feature-selection prompt has no features block")
        tree = json.loads(prompt[at + len(marker):])

        def annotate(node: dict) -> dict:
            out = {}
            for label, child in node.items():
                if child:
                    out[label] = annotate(child)
                else:
                    out[label] = {"potential_use": f"drives the {label} component of the task"}
            return out

        def leaf_labels(node: dict, acc: list) -> list:
            for label, child in node.items():
                if child:
                    leaf_labels(child, acc)
                else:
                    acc.append(label)
            return acc

        leaves = sorted(leaf_labels(tree, []))[:4]

        def select(node: dict) -> dict:
            out = {}
            for label, child in node.items():
                if child:
                    kept = select(child)
                    if kept:
                        out[label] = kept
                elif label in leaves:
                    out[label] = {
                        "feature": label,
                        "potential_use": f"drives the {label} component of the task",
                    }
            return out

        doc = {
            "feature_roles_tree": annotate(tree),
            "selected_features_tree": select(tree),
            "integration_strategy": (
                "Blend " + ", ".join(leaves)
                + " into a single streaming computation over one integer sequence, "
                "so each feature constrains how the readings are aggregated."
            ),
        }
        return "Here is the selection.\n<begin>" + json.dumps(doc) + "<end>\n"

    # -- stage 2: statement --------------------------------------------------

    def _statement(self, prompt: str) -> str:
        task_id = _marker_value(prompt, TASK_ID_MARKER)
        style = _marker_value(prompt, STYLE_MARKER)
        variant = _VARIANTS[derive_seed(0xC0FFEE, task_id) % len(_VARIANTS)]
        statement = _build_statement(task_id, style, variant)
        doc: dict = {"statement": statement}
        if style == "leetcode":
            doc["entry_signature"] = "class Solution:\n    def answer(self, values: list[int]) -> int:"
        return "<begin>" + json.dumps(doc) + "<end>\n"

    # -- test inputs -------------------------------------------------------------

    def _test_inputs(self, prompt: str) -> str:
        task_id = _marker_value(prompt, TASK_ID_MARKER)
        count = int(_marker_value(prompt, COUNT_MARKER))
        stream = Stream(derive_seed(0x7E57CA5E, task_id))
        cases = []
        for idx in range(count):
            if idx == 0:
                desc, text = "edge case: a single minimal reading", "1\n1"
            elif idx == 1:
                desc, text = "boundary case: extreme negative and positive readings", \
                    "4\n-1000000 1000000 -999999 999999"
            elif idx == count - 2 and count >= 6:
                n = stream.randint(150, 200)
                vals = " ".join(str(stream.randint(-1000, 1000)) for _ in range(n))
                desc, text = "large scale stress data with wide spread", f"{n}\n{vals}"
            elif idx == count - 1 and count >= 6:
                n = stream.randint(150, 200)
                vals = " ".join(str(stream.randint(-5, 5)) for _ in range(n))
                desc, text = "large scale stress data with tight clustering", f"{n}\n{vals}"
            else:
                n = stream.randint(2, 12)
                vals = " ".join(str(stream.randint(-50, 50)) for _ in range(n))
                desc, text = f"typical mid-size scenario {idx}", f"{n}\n{vals}"
            cases.append({"idx": idx, "description": desc, "input_string": text})
        return "<begin>" + json.dumps({"test_cases": cases}) + "<end>\n"

    def _generator_spec(self, prompt: str) -> str:
        seed = int(_marker_value(prompt, SEED_MARKER))
        doc = {
            "seed": seed,
            "cases": [
                {"label": "nominal_small", "category": "nominal", "recipe": {"lines": [
                    {"emit": "int", "min": 1, "max": 6, "bind": "n"},
                    {"emit": "ints", "count": "$n", "min": -20, "max": 20},
                ]}},
                {"label": "complex_mixed", "category": "complex", "recipe": {"lines": [
                    {"emit": "int", "min": 20, "max": 40, "bind": "n"},
                    {"emit": "ints", "count": "$n", "min": -1000, "max": 1000},
                ]}},
                {"label": "boundary_single", "category": "boundary", "recipe": {"lines": [
                    {"emit": "literal", "text": "1"},
                    {"emit": "ints", "count": 1, "min": -1000000, "max": -999990},
                ]}},
                {"label": "stress_large", "category": "stress", "recipe": {"lines": [
                    {"emit": "int", "min": 150, "max": 220, "bind": "n"},
                    {"emit": "ints", "count": "$n", "min": -1000000, "max": 1000000},
                ]}},
            ],
        }
        return "Spec follows.\n<begin>" + json.dumps(doc) + "<end>\n"

    # -- candidate solutions ----------------------------------------------------

    def _solution(self, prompt: str) -> str:
        task_id = _marker_value(prompt, TASK_ID_MARKER)
        index = _marker_value(prompt, CANDIDATE_MARKER)
        match = PROBLEM_CODE_RE.search(prompt)
        if not match:
            raise ProviderError("solution prompt carries no problem code")
        variant = match.group(1)
        is_proxy = index == "proxy"

        if not is_proxy:
            roll = derive_seed(0xD1CE, f"{task_id}:{index}")
            if roll % 100 < self.dropout:
                # A truncated response: opens its final fence, never closes.
                return (
                    "<think>The approach is a single scan, but the budget ran out "
                    "before the implementation was finished.</think>\n"
                    "```python\nimport sys\n\ndef main():\n    data = sys.stdin.read().split()\n"
                )
            buggy = (roll >> 8) % 100 < self.bug_rate
        else:
            buggy = False

        body = _BUGGY_BODY[variant] if buggy else _CORRECT_BODY[variant]
        needs_class = "class Solution" in prompt

        mix = derive_seed(0x7417, f"{task_id}:{index}")
        think_len = 1 + mix % len(_FILLER)
        offset = (mix >> 16) % len(_FILLER)
        rotated = _FILLER[offset:] + _FILLER[:offset]
        think = "".join(rotated[:think_len])
        plan = (
            f"The task reduces to one aggregation over the readings. {think}"
            "A linear scan with constant extra memory is enough."
        )

        if needs_class:
            code = (
                "import sys\n\n"
                "class Solution:\n"
                "    def answer(self, values: list[int]) -> int:\n"
                "        " + _CLASS_BODY[variant if not buggy else "!" + variant] + "\n\n"
                "def main():\n"
                "    data = sys.stdin.read().split()\n"
                "    n = int(data[0])\n"
                "    values = [int(x) for x in data[1:1 + n]]\n"
                "    print(Solution().answer(values))\n\n"
                "main()\n"
            )
        else:
            code = (
                "import sys\n\n"
                "def main():\n"
                "    data = sys.stdin.read().split()\n"
                "    n = int(data[0])\n"
                "    values = [int(x) for x in data[1:1 + n]]\n"
                f"    {body}\n\n"
                "main()\n"
            )
        return f"<think>{plan}</think>\nFinal implementation:\n```python\n{code}```\n"


_CLASS_BODY = {
    "SUM": "return sum(values)",
    "MAX": "return max(values)",
    "EVENS": "return sum(1 for v in values if v % 2 == 0)",
    "SPAN": "return max(values) - min(values)",
    "!SUM": "return sum(values) + 1",
    "!MAX": "return max(values) - 1",
    "!EVENS": "return sum(1 for v in values if v % 2 == 1)",
    "!SPAN": "return abs(values[-1] - values[0])",
}

_STYLE_LEAD = {
    "codeforces": (
        "The night shift at the observatory has ended and Vera is staring at a wall "
        "of sensor printouts. Each instrument reported one integer reading during "
        "the night, and before she can go home she must file a one-number summary "
        "of the whole batch. The filing system is ancient, accepts a single line, "
        "and rejects anything else, so the summary has to be computed exactly."
    ),
    "atcoder": (
        "You are given a sequence of integer readings. Compute the required "
        "summary statistic and print it."
    ),
    "leetcode": (
        "You are given a list of integer readings collected from a sensor array. "
        "Implement the method below so that it returns the required summary "
        "statistic for the whole list. The grader will construct the readings, "
        "call your method once, and compare the returned integer exactly."
    ),
}


def _build_statement(task_id: str, style: str, variant: str) -> str:
    lead = _STYLE_LEAD.get(style, _STYLE_LEAD["codeforces"])
    sections = [
        lead,
        "",
        f"Problem code: SJ-{variant} (internal reference {task_id}).",
        "",
        "Input",
        "The first line contains one integer n (1 <= n <= 200000), the number of "
        "readings. The second line contains n integers r_1, ..., r_n "
        "(-1000000 <= r_i <= 1000000), the readings themselves, separated by "
        "single spaces.",
        "",
        "Output",
        f"Print {_OUTPUT_SPEC[variant]}.",
        "",
        "Example",
        "Input: 3, then the readings 1 2 3 on the second line.",
        f"Correct output: {_EXAMPLE_ANSWER[variant]}.",
        "",
        "Notes",
        "Readings may repeat and may be negative. The answer always fits in a "
        "64-bit signed integer, and the input ends with a newline. Whitespace at "
        "the end of your output is ignored by the checker, but any other deviation "
        "counts as a wrong answer. Aim for a solution that reads the entire input "
        "once, performs a single pass of arithmetic, and prints exactly one line; "
        "anything slower than linear time risks exceeding the limits on the "
        "largest tests, and any extra diagnostic output will be rejected by the "
        "automatic checker without further explanation.",
    ]
    return "\n".join(sections)


# ---------------------------------------------------------------------------
# Fixture-backed providers
# ---------------------------------------------------------------------------


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:24]


class FixtureProvider:
    """Replays recorded completions; byte-deterministic by construction."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def complete(self, prompt: str) -> str:
        path = self.directory / f"{prompt_key(prompt)}.txt"
        if not path.exists():
            head = prompt.split("\n", 1)[0]
            raise ProviderError(
                f"no fixture {path.name} for prompt starting {head!r}"
            )
        return path.read_text(encoding="utf-8")


class RecordingProvider:
    """Wraps a provider and records every exchange as fixture files."""

    def __init__(self, inner: Provider, directory: str | Path):
        self.inner = inner
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def complete(self, prompt: str) -> str:
        reply = self.inner.complete(prompt)
        (self.directory / f"{prompt_key(prompt)}.txt").write_text(reply, encoding="utf-8")
        return reply


class HttpProvider:
    """POSTs {"prompt": ...} and expects {"completion": ...} back.

    ``rate_limit_per_s`` spaces out calls from this process when set.
    """

    def __init__(self, url: str, timeout_s: float = 120.0,
                 rate_limit_per_s: float = 0.0):
        self.url = url
        self.timeout_s = timeout_s
        self._min_interval = 1.0 / rate_limit_per_s if rate_limit_per_s > 0 else 0.0
        self._last_call = 0.0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        if self._min_interval:
            with self._lock:
                wait = self._last_call + self._min_interval - time.monotonic()
                if wait > 0:
                    time.sleep(wait)
                self._last_call = time.monotonic()
        body = json.dumps({"prompt": prompt}).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout_s) as resp:
                doc = json.loads(resp.read().decode("utf-8"))
        except OSError as exc:
            raise ProviderError(f"provider endpoint unreachable: {exc}") from exc
        if "completion" not in doc:
            raise ProviderFormatError("endpoint reply lacks 'completion'")
        return str(doc["completion"])


def make_provider(config: dict) -> Provider:
    kind = config.get("kind")
    if kind == "synthetic":
        return SyntheticProvider(
            bug_rate_percent=config.get("bug_rate_percent", 30),
            dropout_percent=config.get("dropout_percent", 10),
        )
    if kind == "fixture":
        return FixtureProvider(config["dir"])
    if kind == "recording":
        return RecordingProvider(make_provider(config["inner"]), config["dir"])
    if kind == "http":
        return HttpProvider(config["url"], config.get("timeout_s", 120.0),
                            config.get("rate_limit_per_s", 0.0))
    raise ValueError(f"unknown provider kind {kind!r}")

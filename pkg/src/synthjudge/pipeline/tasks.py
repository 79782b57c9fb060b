"""Two-stage task formulation and test-input generation against a provider.

Stage 1 asks for feature roles, a mutually consistent subtree, and an
integration strategy; stage 2 turns that selection into a styled problem
statement. Splitting the steps keeps providers from collapsing rich
feature sets into trivial tasks.

Test inputs come either from the provider directly (structured reply with
idx/description/input_string entries) or as a GeneratorSpec document that
the seeded toolkit renders.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .. import testgen
from ..testgen import Category, GeneratorSpec, GeneratorSpecError, TestInput
from ..verifier import approx_tokens
from .features import FeatureTree
from .providers import (
    BEGIN,
    CANDIDATE_MARKER,
    COUNT_MARKER,
    END,
    Provider,
    ProviderFormatError,
    REQUEST_MARKER,
    SEED_MARKER,
    STYLE_MARKER,
    TASK_ID_MARKER,
    parse_structured,
)

STYLES = ("codeforces", "atcoder", "leetcode")
MIN_STATEMENT_TOKENS = 200
DEFAULT_RETRIES = 3


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    style: str
    statement: str
    entry_signature: Optional[str]
    source_features: FeatureTree
    integration_strategy: str
    short_statement: bool = False  # statement under the training-length floor

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"unknown task style {self.style!r}")
        if self.style == "leetcode" and not self.entry_signature:
            raise ValueError("leetcode-style tasks need an entry signature")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "style": self.style,
            "statement": self.statement,
            "entry_signature": self.entry_signature,
            "source_features": self.source_features,
            "integration_strategy": self.integration_strategy,
            "short_statement": self.short_statement,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskSpec":
        return cls(
            task_id=doc["task_id"],
            style=doc["style"],
            statement=doc["statement"],
            entry_signature=doc.get("entry_signature"),
            source_features=doc.get("source_features", {}),
            integration_strategy=doc.get("integration_strategy", ""),
            short_statement=doc.get("short_statement", False),
        )


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------


def build_stage1_prompt(subtree: FeatureTree) -> str:
    return (
        f"{REQUEST_MARKER} feature-selection\n"
        "You are setting a competitive programming problem from the feature tree "
        "below. Walk the tree, note for every leaf how that feature could shape a "
        "problem (a short 'potential_use'), then pick a subtree whose leaves fit "
        "together in one coherent task, and describe how to weave them into a "
        "single scenario.\n"
        f"Answer with one JSON object between {BEGIN} and {END} holding exactly "
        "these fields: \"feature_roles_tree\" (the tree with potential_use notes), "
        "\"selected_features_tree\" (the chosen subtree, leaves carrying 'feature' "
        "and 'potential_use'), and \"integration_strategy\" (one paragraph).\n\n"
        "features:\n" + json.dumps(subtree, indent=1, sort_keys=True)
    )


def build_stage2_prompt(task_id: str, style: str, selection: dict, strategy: str) -> str:
    extra = ""
    if style == "leetcode":
        extra = (
            " Because this is starter-code style, also return an "
            "\"entry_signature\" field: the class and method header the solver "
            "must implement (e.g. a class Solution with one method)."
        )
    return (
        f"{REQUEST_MARKER} task-statement\n"
        f"{TASK_ID_MARKER} {task_id}\n"
        f"{STYLE_MARKER} {style}\n"
        "Write the complete problem statement for the feature selection below: "
        "a self-contained scenario, precise input and output sections, explicit "
        "constraints, one worked example, and no hints about the intended "
        "algorithm. The statement must stand alone without the feature list."
        f"{extra}\n"
        f"Answer with one JSON object between {BEGIN} and {END} holding a "
        "\"statement\" field" + (" and the entry_signature" if style == "leetcode" else "")
        + ".\n\n"
        "selected features:\n" + json.dumps(selection, indent=1, sort_keys=True)
        + "\n\nintegration strategy:\n" + strategy
    )


def build_test_prompt(task: TaskSpec, count: int) -> str:
    return (
        f"{REQUEST_MARKER} test-inputs\n"
        f"{TASK_ID_MARKER} {task.task_id}\n"
        f"{COUNT_MARKER} {count}\n"
        f"Design {count} test inputs for the problem below. Cover edge cases "
        "(smallest sizes, extreme values), a spread of moderate scales, and "
        "large stress data near the constraint ceiling. Every input must follow "
        "the problem's input format exactly and contain input data only.\n"
        f"Answer between {BEGIN} and {END} with JSON of the form "
        "{\"test_cases\": [{\"idx\": 0, \"description\": \"...\", "
        "\"input_string\": \"...\"}, ...]}.\n\n"
        "problem:\n" + task.statement
    )


def build_toolspec_prompt(task: TaskSpec, count: int, seed: int) -> str:
    return (
        f"{REQUEST_MARKER} generator-spec\n"
        f"{TASK_ID_MARKER} {task.task_id}\n"
        f"{COUNT_MARKER} {count}\n"
        f"{SEED_MARKER} {seed}\n"
        "Instead of writing inputs directly, emit a declarative generator spec "
        "the seeded toolkit can render: a JSON document with a 'seed' and a "
        "'cases' list of {label, category, recipe}; categories are nominal, "
        "complex, boundary, stress; recipes are {\"lines\": [...]} built from "
        "the documented emit directives (literal, int, ints, string, tree, "
        "graph). Include boundary and large stress cases, keep labels unique, "
        f"and use the seed {seed} verbatim.\n"
        f"Answer between {BEGIN} and {END} with the JSON document only.\n\n"
        "problem:\n" + task.statement
    )


def build_solution_prompt(task: TaskSpec, candidate_index: int | str) -> str:
    entry = ""
    if task.entry_signature:
        entry = (
            "\nYour program must define the declared starter symbol:\n"
            + task.entry_signature + "\n"
            "and still read stdin / write stdout so the judge can run it."
        )
    return (
        f"{REQUEST_MARKER} candidate-solution\n"
        f"{TASK_ID_MARKER} {task.task_id}\n"
        f"{CANDIDATE_MARKER} {candidate_index}\n"
        "Solve the problem below. Reason inside <think>...</think> first, then "
        "give exactly one fenced python code block containing the full program."
        f"{entry}\n\n"
        "problem:\n" + task.statement
    )


# ---------------------------------------------------------------------------
# Provider-backed operations
# ---------------------------------------------------------------------------


def _structured_with_retries(provider: Provider, prompt: str, retries: int) -> dict:
    last: Exception | None = None
    for _ in range(retries):
        reply = provider.complete(prompt)
        try:
            return parse_structured(reply)
        except ProviderFormatError as exc:
            last = exc
    raise ProviderFormatError(f"provider failed {retries} attempts: {last}")


def formulate_task(
    subtree: FeatureTree,
    style: str,
    provider: Provider,
    *,
    task_id: str,
    retries: int = DEFAULT_RETRIES,
) -> TaskSpec:
    """Two-stage formulation: select features, then write the statement."""
    if style not in STYLES:
        raise ValueError(f"unknown task style {style!r}")

    stage1 = _structured_with_retries(provider, build_stage1_prompt(subtree), retries)
    for fld in ("feature_roles_tree", "selected_features_tree", "integration_strategy"):
        if fld not in stage1:
            raise ProviderFormatError(f"stage-1 reply lacks {fld!r}")
    selection = stage1["selected_features_tree"]
    strategy = str(stage1["integration_strategy"])
    if not isinstance(selection, dict) or not selection:
        raise ProviderFormatError("stage-1 selected_features_tree is empty")

    stage2 = _structured_with_retries(
        provider, build_stage2_prompt(task_id, style, selection, strategy), retries
    )
    statement = stage2.get("statement")
    if not isinstance(statement, str) or not statement.strip():
        raise ProviderFormatError("stage-2 reply lacks a statement")
    entry_signature = stage2.get("entry_signature")
    if style == "leetcode" and not entry_signature:
        raise ProviderFormatError("leetcode-style reply lacks entry_signature")

    return TaskSpec(
        task_id=task_id,
        style=style,
        statement=statement,
        entry_signature=entry_signature,
        source_features=selection,
        integration_strategy=strategy,
        short_statement=approx_tokens(statement) < MIN_STATEMENT_TOKENS,
    )


_SLUG_RE = re.compile(r"[^a-z0-9]+")


def _label_for(idx: int, description: str) -> str:
    slug = _SLUG_RE.sub("_", description.lower()).strip("_")[:32] or "case"
    return f"{idx:02d}_{slug}"


def infer_category(description: str) -> Category:
    lowered = description.lower()
    if "edge" in lowered or "boundary" in lowered:
        return Category.BOUNDARY
    if "large" in lowered or "stress" in lowered:
        return Category.STRESS
    return Category.NOMINAL


def generate_inputs(
    task: TaskSpec,
    method: str,
    provider: Provider,
    count: int,
    seed: int,
    *,
    retries: int = DEFAULT_RETRIES,
) -> list[TestInput]:
    """Produce test inputs by prompting or via a provider-written GeneratorSpec."""
    if method == "prompting":
        doc = _structured_with_retries(provider, build_test_prompt(task, count), retries)
        entries = doc.get("test_cases")
        if not isinstance(entries, list) or not entries:
            raise ProviderFormatError("reply holds no test_cases")
        inputs = []
        for entry in entries:
            if not isinstance(entry, dict) or not {"idx", "description", "input_string"} <= set(entry):
                raise ProviderFormatError(f"malformed test case entry: {entry!r}")
            description = str(entry["description"])
            text = str(entry["input_string"])
            if not text.endswith("\n"):
                text += "\n"
            inputs.append(
                TestInput.make(text, infer_category(description),
                               _label_for(int(entry["idx"]), description))
            )
        return inputs

    if method == "toolspec":
        last: Exception | None = None
        for _ in range(retries):
            reply = provider.complete(build_toolspec_prompt(task, count, seed))
            try:
                spec = GeneratorSpec.from_dict(parse_structured(reply))
                return testgen.render_corpus(spec)
            except (ProviderFormatError, GeneratorSpecError) as exc:
                last = exc
        raise ProviderFormatError(f"provider failed {retries} attempts: {last}")

    raise ValueError(f"unknown input method {method!r}")


def sample_candidates(
    task: TaskSpec, provider: Provider, count: int
) -> list[str]:
    """Raw candidate responses, one per index; filtering happens downstream."""
    return [provider.complete(build_solution_prompt(task, k)) for k in range(count)]


def proxy_solution(task: TaskSpec, provider: Provider) -> str:
    return provider.complete(build_solution_prompt(task, "proxy"))

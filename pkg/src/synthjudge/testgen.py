"""Seeded test-input generator toolkit.

Produces categorized ``.in`` corpora for a task from a declarative
GeneratorSpec. Everything is a pure function of the spec: the master seed
plus each case's label derive an independent sub-stream (see ``rng``), so
adding or reordering cases never changes the bytes of existing ones, and
two machines emit identical directories.

GeneratorSpec document (JSON)::

    {
      "seed": 42,
      "cases": [
        {"label": "nominal_small", "category": "nominal", "recipe": {...}},
        ...
      ]
    }

A recipe is ``{"lines": [<line>, ...]}`` where each line directive appends
one or more lines to the ``.in`` file:

    {"emit": "literal", "text": "5 7"}
    {"emit": "int",    "min": 1, "max": 100, "bind": "n"}
    {"emit": "ints",   "count": 10, "min": -5, "max": 5, "sep": " "}
    {"emit": "string", "length": 12, "alphabet": "ab"}
    {"emit": "tree",   "n": 8}                       # n-1 lines "u v"
    {"emit": "graph",  "n": 6, "m": 9, "connected": true, ...}

Integer-valued parameters (``count``, ``length``, ``n``, ``m``, ``min``,
``max``) may instead be the string ``"$name"`` referring to a value bound
earlier with ``"bind"`` — this covers the usual "first line N, then N
numbers" input shape.

Files are written as ``<label>.in`` with ``\\n`` line endings and a single
final newline; they contain only raw input data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .rng import Stream, derive_seed


class Category(str, Enum):
    NOMINAL = "nominal"
    COMPLEX = "complex"
    BOUNDARY = "boundary"
    STRESS = "stress"


# Semantic difficulty weights per category.
CATEGORY_WEIGHTS: dict[Category, int] = {
    Category.NOMINAL: 1,
    Category.COMPLEX: 2,
    Category.BOUNDARY: 3,
    Category.STRESS: 4,
}


class GeneratorSpecError(ValueError):
    """Raised when a GeneratorSpec document or recipe is malformed."""


@dataclass(frozen=True)
class CaseSpec:
    label: str
    category: Category
    recipe: dict

    def weight(self) -> int:
        return CATEGORY_WEIGHTS[self.category]


@dataclass(frozen=True)
class GeneratorSpec:
    seed: int
    cases: tuple[CaseSpec, ...]

    def __post_init__(self):
        if not 0 <= self.seed < (1 << 64):
            raise GeneratorSpecError("seed must be a 64-bit unsigned integer")
        seen: set[str] = set()
        for case in self.cases:
            if not case.label:
                raise GeneratorSpecError("case label must be nonempty")
            if case.label in seen:
                raise GeneratorSpecError(f"duplicate case label {case.label!r}")
            seen.add(case.label)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GeneratorSpecError(f"spec is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: object) -> "GeneratorSpec":
        if not isinstance(doc, dict):
            raise GeneratorSpecError("spec document must be a JSON object")
        if "seed" not in doc or "cases" not in doc:
            raise GeneratorSpecError("spec requires 'seed' and 'cases'")
        if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
            raise GeneratorSpecError("seed must be an integer")
        cases = []
        if not isinstance(doc["cases"], list):
            raise GeneratorSpecError("'cases' must be a list")
        for i, entry in enumerate(doc["cases"]):
            if not isinstance(entry, dict):
                raise GeneratorSpecError(f"case {i} must be an object")
            try:
                label = entry["label"]
                category = Category(entry["category"])
                recipe = entry["recipe"]
            except KeyError as exc:
                raise GeneratorSpecError(f"case {i} missing field {exc}") from exc
            except ValueError as exc:
                raise GeneratorSpecError(f"case {i}: {exc}") from exc
            if not isinstance(recipe, dict):
                raise GeneratorSpecError(f"case {i}: recipe must be an object")
            cases.append(CaseSpec(label=label, category=category, recipe=recipe))
        return cls(seed=doc["seed"], cases=tuple(cases))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "cases": [
                {"label": c.label, "category": c.category.value, "recipe": c.recipe}
                for c in self.cases
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class TestInput:
    __test__ = False  # not a pytest collectable despite the name

    input_text: str
    byte_size: int
    category: Category
    label: str

    @classmethod
    def make(cls, text: str, category: Category, label: str) -> "TestInput":
        return cls(
            input_text=text,
            byte_size=len(text.encode("utf-8")),
            category=category,
            label=label,
        )


# --------------------------------------------------------------------------
# Primitive generators
# --------------------------------------------------------------------------


def gen_sequence(length: int, lo: int, hi: int, stream: Stream) -> list[int]:
    """``length`` i.i.d. uniform draws from [lo, hi]."""
    if length < 0:
        raise ValueError("length must be >= 0")
    if lo > hi:
        raise ValueError(f"empty value range [{lo}, {hi}]")
    return [stream.randint(lo, hi) for _ in range(length)]


def gen_string(length: int, alphabet: Sequence[str] | str, stream: Stream) -> str:
    """Random string over ``alphabet``. Sets are sorted first for determinism."""
    if length < 0:
        raise ValueError("length must be >= 0")
    if isinstance(alphabet, (set, frozenset)):
        alphabet = sorted(alphabet)
    if len(alphabet) == 0:
        raise ValueError("alphabet must be nonempty")
    return "".join(alphabet[stream.randint(0, len(alphabet) - 1)] for _ in range(length))


def gen_tree(n: int, stream: Stream) -> list[tuple[int, int]]:
    """Random recursive tree on nodes 1..n: node i attaches to a uniform
    earlier node. Always connected and acyclic with exactly n-1 edges."""
    if n < 1:
        raise ValueError("tree needs n >= 1 nodes")
    edges = []
    for child in range(2, n + 1):
        parent = stream.randint(1, child - 1)
        edges.append((parent, child))
    return edges


def gen_graph(
    n: int,
    m: int,
    stream: Stream,
    *,
    connected: bool = False,
    self_loops: bool = False,
    multi_edges: bool = False,
    directed: bool = False,
) -> list[tuple[int, int]]:
    """Random graph on nodes 1..n with exactly m edges satisfying the flags.

    Connectivity (weak, for directed graphs) is guaranteed by seeding with a
    random tree. Simple graphs are produced by rejection against the set of
    used node pairs. Infeasible (n, m, flags) combinations raise ValueError
    naming the violated bound.
    """
    if n < 1:
        raise ValueError("graph needs n >= 1 nodes")
    if m < 0:
        raise ValueError("edge count must be >= 0")
    if connected and m < n - 1:
        raise ValueError(f"connected graph on {n} nodes needs m >= {n - 1}, got {m}")
    if not multi_edges:
        pair_max = n * (n - 1) if directed else n * (n - 1) // 2
        if self_loops:
            pair_max += n
        if m > pair_max:
            kind = "directed" if directed else "undirected"
            raise ValueError(
                f"simple {kind} graph on {n} nodes holds at most {pair_max} edges, got {m}"
            )

    edges: list[tuple[int, int]] = []
    used: set[tuple[int, int]] = set()

    def key(u: int, v: int) -> tuple[int, int]:
        return (u, v) if directed else (min(u, v), max(u, v))

    if connected:
        for u, v in gen_tree(n, stream):
            edges.append((u, v))
            used.add(key(u, v))

    while len(edges) < m:
        u = stream.randint(1, n)
        v = stream.randint(1, n)
        if u == v and not self_loops:
            continue
        k = key(u, v)
        if not multi_edges and k in used:
            continue
        edges.append((u, v))
        used.add(k)
    return edges


# --------------------------------------------------------------------------
# Recipe interpreter
# --------------------------------------------------------------------------


def _resolve(value: object, bindings: dict[str, int], field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise GeneratorSpecError(f"{field} must be an int or '$name' reference")
    if isinstance(value, int):
        return value
    if not value.startswith("$"):
        raise GeneratorSpecError(f"{field}: string parameter must start with '$'")
    name = value[1:]
    if name not in bindings:
        raise GeneratorSpecError(f"{field}: unbound variable '{name}'")
    return bindings[name]


def render_case(master_seed: int, case: CaseSpec) -> str:
    """Render one case's input text from its recipe (no trailing blank line)."""
    stream = Stream(derive_seed(master_seed, case.label))
    bindings: dict[str, int] = {}
    lines: list[str] = []
    directives = case.recipe.get("lines")
    if not isinstance(directives, list) or not directives:
        raise GeneratorSpecError(f"case {case.label!r}: recipe needs a 'lines' list")

    for idx, d in enumerate(directives):
        if not isinstance(d, dict) or "emit" not in d:
            raise GeneratorSpecError(f"case {case.label!r} line {idx}: missing 'emit'")
        kind = d["emit"]
        where = f"case {case.label!r} line {idx}"
        try:
            if kind == "literal":
                lines.append(str(d["text"]))
            elif kind == "int":
                lo = _resolve(d["min"], bindings, where)
                hi = _resolve(d["max"], bindings, where)
                value = stream.randint(lo, hi)
                if "bind" in d:
                    bindings[str(d["bind"])] = value
                lines.append(str(value))
            elif kind == "ints":
                count = _resolve(d["count"], bindings, where)
                lo = _resolve(d["min"], bindings, where)
                hi = _resolve(d["max"], bindings, where)
                sep = d.get("sep", " ")
                lines.append(sep.join(map(str, gen_sequence(count, lo, hi, stream))))
            elif kind == "string":
                length = _resolve(d["length"], bindings, where)
                alphabet = d.get("alphabet", "abcdefghijklmnopqrstuvwxyz")
                lines.append(gen_string(length, alphabet, stream))
            elif kind == "tree":
                n = _resolve(d["n"], bindings, where)
                lines.extend(f"{u} {v}" for u, v in gen_tree(n, stream))
            elif kind == "graph":
                n = _resolve(d["n"], bindings, where)
                m = _resolve(d["m"], bindings, where)
                edge_list = gen_graph(
                    n,
                    m,
                    stream,
                    connected=bool(d.get("connected", False)),
                    self_loops=bool(d.get("self_loops", False)),
                    multi_edges=bool(d.get("multi_edges", False)),
                    directed=bool(d.get("directed", False)),
                )
                lines.extend(f"{u} {v}" for u, v in edge_list)
            else:
                raise GeneratorSpecError(f"{where}: unknown emit kind {kind!r}")
        except KeyError as exc:
            raise GeneratorSpecError(f"{where}: missing parameter {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, GeneratorSpecError):
                raise
            raise GeneratorSpecError(f"{where}: {exc}") from exc

    return "\n".join(lines) + "\n"


def render_corpus(spec: GeneratorSpec) -> list[TestInput]:
    """Render every case without touching the filesystem, in spec order."""
    return [
        TestInput.make(render_case(spec.seed, case), case.category, case.label)
        for case in spec.cases
    ]


def emit_corpus(spec: GeneratorSpec, out_dir: str | Path) -> list[TestInput]:
    """Write one ``<label>.in`` file per case and return the records."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inputs = render_corpus(spec)
    for item in inputs:
        (out / f"{item.label}.in").write_bytes(item.input_text.encode("utf-8"))
    return inputs


# --------------------------------------------------------------------------
# Structural validators (used as independent oracles in tests and by the
# pipeline when checking provider-supplied specs)
# --------------------------------------------------------------------------


def is_connected_acyclic(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    """Union-find check that ``edges`` form a tree on nodes 1..n."""
    parent = list(range(n + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    count = 0
    for u, v in edges:
        count += 1
        if not (1 <= u <= n and 1 <= v <= n):
            return False
        ru, rv = find(u), find(v)
        if ru == rv:
            return False  # cycle
        parent[ru] = rv
    return count == n - 1

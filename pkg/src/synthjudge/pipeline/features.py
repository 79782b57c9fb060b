"""Feature-tree handling: normalization, merging, and subtree sampling.

A feature tree is a nested mapping of labels; leaves are features, internal
nodes are categories. Input documents may write leaf lists
(``{"sorting": ["quick sort"]}``); those normalize to empty-dict leaves.

Merging is a path union: nodes with the same label path collapse into one,
children unite, and sibling order is lexicographic, which makes the merge
associative, commutative, and idempotent.
"""

from __future__ import annotations

from typing import Iterator

from ..rng import Stream

FeatureTree = dict  # label -> FeatureTree (leaf == empty dict)


def normalize_tree(obj: object) -> FeatureTree:
    """Coerce a parsed JSON tree into canonical nested-dict form."""
    if obj is None:
        return {}
    if isinstance(obj, str):
        return {_check_label(obj): {}}
    if isinstance(obj, list):
        tree: FeatureTree = {}
        for item in obj:
            for label, child in normalize_tree(item).items():
                tree[label] = _merge_two(tree.get(label, {}), child)
        return _sorted_tree(tree)
    if isinstance(obj, dict):
        tree = {}
        for label, child in obj.items():
            tree[_check_label(label)] = normalize_tree(child)
        return _sorted_tree(tree)
    raise ValueError(f"cannot interpret feature node of type {type(obj).__name__}")


def _check_label(label: str) -> str:
    if not isinstance(label, str) or not label.strip():
        raise ValueError("feature labels must be nonempty strings")
    return label.strip()


def _sorted_tree(tree: FeatureTree) -> FeatureTree:
    return {k: tree[k] for k in sorted(tree)}


def _merge_two(a: FeatureTree, b: FeatureTree) -> FeatureTree:
    merged = dict(a)
    for label, child in b.items():
        merged[label] = _merge_two(merged.get(label, {}), child)
    return _sorted_tree(merged)


def merge_trees(trees: list[FeatureTree]) -> FeatureTree:
    """Path-union of any number of trees; deterministic child ordering."""
    result: FeatureTree = {}
    for tree in trees:
        result = _merge_two(result, normalize_tree(tree))
    return result


def iter_leaf_paths(tree: FeatureTree, prefix: tuple[str, ...] = ()) -> Iterator[tuple[str, ...]]:
    """Root-to-leaf label paths in lexicographic order."""
    for label in sorted(tree):
        child = tree[label]
        path = prefix + (label,)
        if child:
            yield from iter_leaf_paths(child, path)
        else:
            yield path


def count_leaves(tree: FeatureTree) -> int:
    return sum(1 for _ in iter_leaf_paths(tree))


def sample_subtree(tree: FeatureTree, budget: int, seed: int) -> FeatureTree:
    """Seeded connected subtree with at most ``budget`` leaves.

    Chooses leaves uniformly without replacement and keeps their full
    ancestor paths, so the result is a connected subtree through the root.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    paths = list(iter_leaf_paths(tree))
    if not paths:
        return {}
    take = min(budget, len(paths))
    picked = Stream(seed).sample_indices(len(paths), take)
    sub: FeatureTree = {}
    for idx in sorted(picked):
        node = sub
        for label in paths[idx]:
            node = node.setdefault(label, {})
    return normalize_tree(sub)

"""Task synthesis pipeline: features -> tasks -> inputs -> candidates -> bundles.

Feature trees are merged and sampled into compatible subtrees; a pluggable
text-generation provider turns a subtree into a styled task statement in
two stages (feature selection, then scenario formulation), proposes test
inputs (directly or as a generator spec), and samples candidate solutions.
Candidates are filtered, executed, voted on, and dual-verified into
accepted bundles.

Every random choice derives from the run's master seed, and providers are
replaceable by deterministic fixtures, so a pipeline run replays
byte-identically.
"""

from .features import merge_trees, normalize_tree, sample_subtree
from .providers import (
    FixtureProvider,
    HttpProvider,
    ProviderFormatError,
    RecordingProvider,
    SyntheticProvider,
    make_provider,
)
from .run import PipelineConfig, run_pipeline
from .tasks import TaskSpec, formulate_task, generate_inputs, sample_candidates

__all__ = [
    "merge_trees",
    "normalize_tree",
    "sample_subtree",
    "FixtureProvider",
    "HttpProvider",
    "RecordingProvider",
    "SyntheticProvider",
    "ProviderFormatError",
    "make_provider",
    "TaskSpec",
    "formulate_task",
    "generate_inputs",
    "sample_candidates",
    "PipelineConfig",
    "run_pipeline",
]

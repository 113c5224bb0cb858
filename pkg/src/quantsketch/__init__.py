"""Mergeable quantile summaries with a simulated distributed harness.

Five summary kinds share one contract (build / merge / query / serialize):
GK tuple lists (classic and mixed policies), Bernoulli sampling with local
ranks and tree-model merging, q-digests over a power-of-two universe (batch
and streaming variants), and random buffer hierarchies.  The harness splits a
dataset into chunks, builds per-worker summaries, merges them up a node tree,
and measures rank error, serialized bytes, and phase timings against an exact
oracle.
"""

from .api import (
    Algo,
    FormatError,
    MergeError,
    QueryError,
    StateError,
    Summary,
    SummaryDescriptor,
    deserialize,
    serialized_size,
)
from .corpus import (
    ConfigurationError,
    DataSpec,
    QuantilePoint,
    RankBounds,
    RankOracle,
    generate,
    read_dataset,
    read_dataset_text,
    write_dataset,
    write_dataset_text,
)
from .gk import GkSummary, capacity
from .harness import (
    DEFAULT_PHIS,
    ExperimentConfig,
    Measurement,
    PhiResult,
    RatioTimeReport,
    Transmission,
    run,
    sweep,
    worker_assignment,
)
from .qdigest import QDigest
from .rms import RmsConfig, RmsSummary
from .rng import stream
from .sampling import (
    SampleSet,
    SamplingContext,
    SamplingSummary,
    assign_ranks,
    class_number,
    global_rank,
    make_sample,
    node_probability,
    query_samples,
    tree_merge,
)

__all__ = [
    "Algo",
    "ConfigurationError",
    "DataSpec",
    "DEFAULT_PHIS",
    "ExperimentConfig",
    "FormatError",
    "GkSummary",
    "Measurement",
    "MergeError",
    "PhiResult",
    "QDigest",
    "QuantilePoint",
    "QueryError",
    "RankBounds",
    "RankOracle",
    "RatioTimeReport",
    "RmsConfig",
    "RmsSummary",
    "SampleSet",
    "SamplingContext",
    "SamplingSummary",
    "StateError",
    "Summary",
    "SummaryDescriptor",
    "Transmission",
    "assign_ranks",
    "capacity",
    "class_number",
    "deserialize",
    "generate",
    "global_rank",
    "make_sample",
    "node_probability",
    "query_samples",
    "read_dataset",
    "read_dataset_text",
    "run",
    "serialized_size",
    "stream",
    "sweep",
    "tree_merge",
    "worker_assignment",
    "write_dataset",
    "write_dataset_text",
]

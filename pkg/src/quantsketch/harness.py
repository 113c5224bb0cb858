"""Simulated distributed pipeline: chunked build, worker merges, node tree.

A run splits the dataset into equal contiguous chunks, deals them round-robin
to P workers per node (workers * node_tree_leaves workers in total), builds
one summary per worker, folds worker summaries pairwise in ascending id order
within each node, merges node results up a binary tree, finalizes, and answers
the configured phi-quantile queries against the exact oracle.

Every summary that crosses a merge boundary is serialized first; the byte
counts feed the space metrics (a single worker on a single node transmits
nothing).  Workers own disjoint RNG streams keyed by (seed, algorithm, worker
id), so results are independent of scheduling; this implementation executes
them sequentially.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .api import Summary
from .corpus import ConfigurationError, DataSpec, RankOracle, generate
from .gk import GkSummary
from .qdigest import QDigest
from .rms import RmsSummary
from .rng import stream
from .sampling import SamplingContext, SamplingSummary

DEFAULT_PHIS: tuple[float, ...] = tuple(i / 20 for i in range(1, 20))
ALGORITHMS = ("gk", "sampling", "qdigest", "fastqdigest", "rms")


@dataclass(frozen=True)
class ExperimentConfig:
    algo: str
    epsilon: float
    data: DataSpec
    chunks: int = 1024
    workers: int = 1
    node_tree_leaves: int = 1
    phis: tuple[float, ...] = DEFAULT_PHIS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.algo not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algo!r}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        leaves = self.node_tree_leaves
        if leaves < 1 or (leaves & (leaves - 1)) != 0:
            raise ConfigurationError("node_tree_leaves must be a power of two >= 1")
        if self.chunks < self.workers * leaves:
            raise ConfigurationError(
                f"chunks ({self.chunks}) must cover all {self.workers * leaves} workers"
            )
        if not self.phis:
            raise ConfigurationError("at least one phi is required")
        for phi in self.phis:
            if not 0.0 < phi < 1.0:
                raise ConfigurationError(f"phi must be in (0, 1), got {phi}")


@dataclass(frozen=True)
class PhiResult:
    phi: float
    estimate: int
    rank_error: float


@dataclass(frozen=True)
class Transmission:
    phase: str  # "worker" (AddState) or "node" (AddGlobalState)
    src: int
    dst: int
    algo: str
    nbytes: int


@dataclass
class Measurement:
    config: ExperimentConfig
    results: list[PhiResult]
    total_bytes: int
    max_bytes: int
    build_ms: float
    merge_ms: float
    query_ms: float
    worker_count: int
    summary_final_bytes: int
    transmissions: list[Transmission] = field(default_factory=list)

    @property
    def total_ms(self) -> float:
        return self.build_ms + self.merge_ms + self.query_ms

    @property
    def mean_rank_error(self) -> float:
        return sum(r.rank_error for r in self.results) / len(self.results)

    @property
    def max_rank_error(self) -> float:
        return max(r.rank_error for r in self.results)


@dataclass(frozen=True)
class RatioTimeEntry:
    algo: str
    epsilon: float
    data: DataSpec
    workers: int
    ratio: float


@dataclass
class RatioTimeReport:
    entries: list[RatioTimeEntry]


def worker_assignment(chunks: int, workers: int) -> list[int]:
    """Round-robin chunk ownership: chunk i goes to worker i mod workers."""
    if workers < 1 or chunks < workers:
        raise ConfigurationError("need chunks >= workers >= 1")
    return [i % workers for i in range(chunks)]


def make_summary(config: ExperimentConfig, worker_id: int, expected_items: int) -> Summary:
    algo = config.algo
    if algo == "gk":
        return GkSummary(config.epsilon)
    if algo == "qdigest":
        return QDigest(config.epsilon, config.data.u, variant="batch")
    if algo == "fastqdigest":
        return QDigest(config.epsilon, config.data.u, variant="fast")
    if algo == "sampling":
        ctx = SamplingContext(
            config.epsilon, config.workers * config.node_tree_leaves, config.data.n
        )
        rng = stream(config.seed, "sampling", worker_id)
        return SamplingSummary(ctx, expected_items=expected_items, rng=rng)
    if algo == "rms":
        return RmsSummary(config.epsilon, rng=stream(config.seed, "rms", worker_id))
    raise ConfigurationError(f"unknown algorithm {algo!r}")


def run(config: ExperimentConfig, values: np.ndarray | None = None) -> Measurement:
    """Execute one experiment and measure accuracy, bytes, and phase times."""
    if values is None:
        values = generate(config.data)
    if len(values) != config.data.n:
        raise ConfigurationError(
            f"dataset holds {len(values)} items but the spec says {config.data.n}"
        )
    oracle = RankOracle(values)
    total_workers = config.workers * config.node_tree_leaves
    chunks = np.array_split(values, config.chunks)
    owners = worker_assignment(config.chunks, total_workers)

    per_worker_chunks: list[list[np.ndarray]] = [[] for _ in range(total_workers)]
    for chunk, owner in zip(chunks, owners):
        per_worker_chunks[owner].append(chunk)

    t0 = time.perf_counter()
    summaries: list[Summary] = []
    for w in range(total_workers):
        expected = sum(len(c) for c in per_worker_chunks[w])
        summary = make_summary(config, w, expected)
        for chunk in per_worker_chunks[w]:
            summary.add_many(chunk)
            summary.end_chunk()
        summaries.append(summary)
    t1 = time.perf_counter()

    transmissions: list[Transmission] = []
    node_summaries: list[Summary] = []
    for node in range(config.node_tree_leaves):
        base = node * config.workers
        acc = summaries[base]
        for w in range(base + 1, base + config.workers):
            nbytes = len(summaries[w].serialize())
            transmissions.append(Transmission("worker", w, base, config.algo, nbytes))
            acc = acc.merge(summaries[w])
        node_summaries.append(acc)
    node_ids = list(range(config.node_tree_leaves))
    while len(node_summaries) > 1:
        next_summaries: list[Summary] = []
        next_ids: list[int] = []
        for i in range(0, len(node_summaries), 2):
            left, right = node_summaries[i], node_summaries[i + 1]
            nbytes = len(right.serialize())
            transmissions.append(
                Transmission("node", node_ids[i + 1], node_ids[i], config.algo, nbytes)
            )
            next_summaries.append(left.merge(right))
            next_ids.append(node_ids[i])
        node_summaries, node_ids = next_summaries, next_ids
    final = node_summaries[0]
    final.finalize()
    t2 = time.perf_counter()

    results = []
    for phi in config.phis:
        estimate = int(final.query(phi))
        results.append(PhiResult(phi, estimate, oracle.rank_error(phi, estimate)))
    t3 = time.perf_counter()

    sizes = [t.nbytes for t in transmissions]
    return Measurement(
        config=config,
        results=results,
        total_bytes=sum(sizes),
        max_bytes=max(sizes) if sizes else 0,
        build_ms=(t1 - t0) * 1e3,
        merge_ms=(t2 - t1) * 1e3,
        query_ms=(t3 - t2) * 1e3,
        worker_count=total_workers,
        summary_final_bytes=len(final.serialize()),
        transmissions=transmissions,
    )


def _group_key(config: ExperimentConfig):
    return (config.algo, config.epsilon, config.data)


def sweep(configs: list[ExperimentConfig]) -> tuple[list[Measurement], RatioTimeReport]:
    """Run every config; derive ratio-time per (algo, epsilon, data) group."""
    if not configs:
        raise ConfigurationError("sweep requires at least one configuration")
    measurements: list[Measurement] = []
    cache: dict[DataSpec, np.ndarray] = {}
    for i, config in enumerate(configs):
        if config.data not in cache:
            cache[config.data] = generate(config.data)
        try:
            measurements.append(run(config, cache[config.data]))
        except Exception as exc:
            raise RuntimeError(f"sweep aborted: run {i} failed for {config}") from exc
    groups: dict[tuple, dict[int, float]] = {}
    for m in measurements:
        groups.setdefault(_group_key(m.config), {})[m.config.workers] = m.total_ms
    entries: list[RatioTimeEntry] = []
    for m in measurements:
        times = groups[_group_key(m.config)]
        if 1 not in times:
            continue
        entries.append(
            RatioTimeEntry(
                algo=m.config.algo,
                epsilon=m.config.epsilon,
                data=m.config.data,
                workers=m.config.workers,
                ratio=times[1] / times[m.config.workers],
            )
        )
    return measurements, RatioTimeReport(entries)


def configs_for_grid(
    algos: list[str],
    epsilons: list[float],
    workers_list: list[int],
    zipfs: list[float],
    orders: list[str],
    n: int,
    u: int,
    chunks: int,
    seed: int,
    phis: tuple[float, ...] = DEFAULT_PHIS,
    node_tree_leaves: int = 1,
) -> list[ExperimentConfig]:
    """Cartesian grid in a stable order (algo, eps, zipf, order, workers)."""
    out = []
    for algo in algos:
        for eps in epsilons:
            for zipf in zipfs:
                for order in orders:
                    for workers in workers_list:
                        out.append(
                            ExperimentConfig(
                                algo=algo,
                                epsilon=eps,
                                data=DataSpec(n=n, u=u, zipf=zipf, order=order, seed=seed),
                                chunks=chunks,
                                workers=workers,
                                node_tree_leaves=node_tree_leaves,
                                phis=phis,
                                seed=seed,
                            )
                        )
    return out

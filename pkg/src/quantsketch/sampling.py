"""Sampling-based summaries with per-node local ranks and tree-model merging.

Each participating node keeps a Bernoulli sample of its stream.  With k nodes
and n total items, a node holding s_i items samples at

    p_i = sqrt(k) / (eps * n)     if s_i <= n / sqrt(k)   (a "small" sample)
    p_i = 1 / (eps * s_i)         otherwise               (a "large" sample)

Local ranks start at 0 and step by 1/p on each strict value increase
(duplicates share the rank of their first occurrence).  The estimated rank of
an arbitrary x within one sample is its own local rank when present, the
predecessor's rank plus 1/p when only a predecessor exists, and 0 otherwise;
the global rank is the sum over samples.  Queries return the sampled value
whose global rank lands closest to phi*n.

Tree-model merging first pools small samples once their combined size reaches
n/sqrt(k), then repeatedly pairs large samples of equal class
floor(log2(s * sqrt(k) / n)), subsampling each side down to the pooled
probability and assigning fresh local ranks.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .api import Algo, FormatError, MergeError, QueryError, Reader, StateError, Summary, register
from .corpus import ConfigurationError


@dataclass(frozen=True)
class SamplingContext:
    """Global facts every participant agrees on up front."""

    epsilon: float
    k: int
    n: int

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if self.n < 1:
            raise ConfigurationError(f"n must be >= 1, got {self.n}")

    @property
    def small_cutoff(self) -> float:
        return self.n / math.sqrt(self.k)


def node_probability(ctx: SamplingContext, s_i: int) -> float:
    """Sampling probability for a node holding s_i of the n items."""
    if s_i <= ctx.small_cutoff:
        p = math.sqrt(ctx.k) / (ctx.epsilon * ctx.n)
    else:
        p = 1.0 / (ctx.epsilon * s_i)
    return min(1.0, p)


def class_number(s: int, ctx: SamplingContext) -> int | None:
    """Class of a sample summarising s items; None marks a small sample."""
    if s < ctx.small_cutoff:
        return None
    return int(math.floor(math.log2(s * math.sqrt(ctx.k) / ctx.n)))


@dataclass
class SampleSet:
    """One node's sample: kept values, probability, and underlying size."""

    values: np.ndarray
    p: float
    s: int
    cls: int | None = None
    ranks: np.ndarray | None = field(default=None)

    @property
    def ranked(self) -> bool:
        return self.ranks is not None


def make_sample(values, p: float, s: int, cls: int | None = None) -> SampleSet:
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.int64)
    return SampleSet(values=arr, p=float(p), s=int(s), cls=cls)


def assign_ranks(sample: SampleSet) -> SampleSet:
    """Sort the sample and assign local ranks; runs once (idempotent)."""
    if sample.ranked:
        return sample
    vals = np.sort(sample.values)
    ranks = np.zeros(vals.size, dtype=np.float64)
    if vals.size:
        step = 1.0 / sample.p
        increases = np.flatnonzero(np.diff(vals) > 0) + 1
        marks = np.zeros(vals.size, dtype=np.float64)
        marks[increases] = step
        ranks = np.cumsum(marks)
    sample.values = vals
    sample.ranks = ranks
    return sample


def estimated_rank(sample: SampleSet, x: int) -> float:
    """r-hat of x within one ranked sample."""
    if not sample.ranked:
        raise StateError("sample must be ranked first")
    vals = sample.values
    if vals.size == 0:
        return 0.0
    i = int(np.searchsorted(vals, x, side="left"))
    if i < vals.size and vals[i] == x:
        return float(sample.ranks[i])
    if i > 0:
        return float(sample.ranks[i - 1]) + 1.0 / sample.p
    return 0.0


def global_rank(samples: list[SampleSet], x: int) -> float:
    """Sum of estimated ranks across samples."""
    return sum(estimated_rank(s, x) for s in samples)


def _global_ranks_for(samples: list[SampleSet], points: np.ndarray) -> np.ndarray:
    total = np.zeros(points.size, dtype=np.float64)
    for s in samples:
        vals = s.values
        if vals.size == 0:
            continue
        idx = np.searchsorted(vals, points, side="left")
        clipped = np.minimum(idx, vals.size - 1)
        present = (idx < vals.size) & (vals[clipped] == points)
        pred = idx - 1
        pred_rank = np.where(pred >= 0, s.ranks[np.maximum(pred, 0)] + 1.0 / s.p, 0.0)
        total += np.where(present, s.ranks[clipped], pred_rank)
    return total


def query_samples(samples: list[SampleSet], phi: float, total_n: int) -> int:
    """Sampled value whose global rank is closest to phi * total_n (ties: smaller)."""
    ranked = [assign_ranks(s) for s in samples]
    nonempty = [s for s in ranked if s.values.size]
    if not nonempty:
        raise QueryError("all samples are empty")
    points = np.unique(np.concatenate([s.values for s in nonempty]))
    ranks = _global_ranks_for(nonempty, points)
    target = phi * total_n
    return int(points[int(np.argmin(np.abs(ranks - target)))])


def _subsample(values: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    if prob >= 1.0:
        return values.copy()
    if values.size == 0:
        return values.copy()
    return values[rng.random(values.size) < prob]


def _pool(parts: list[SampleSet], s_new: int, ctx: SamplingContext,
          rng: np.random.Generator) -> SampleSet:
    """Subsample the parts down to the pooled probability and combine them.

    Survivors keep estimate-based local ranks: the global-rank estimate over
    the constituent samples, which preserves the variance bound through the
    merge tree (position/p ranks would not).
    """
    p_new = min(1.0, 1.0 / (ctx.epsilon * s_new))
    kept = [_subsample(s.values, p_new / s.p, rng) for s in parts]
    vals = np.sort(np.concatenate(kept))
    ranks = _global_ranks_for([s for s in parts if s.values.size], vals)
    return SampleSet(
        values=vals, p=p_new, s=s_new, cls=class_number(s_new, ctx), ranks=ranks
    )


def tree_merge(
    samples: list[SampleSet], ctx: SamplingContext, rng: np.random.Generator
) -> list[SampleSet]:
    """Merge a collection of samples per the tree-model rules."""
    for s in samples:
        assign_ranks(s)
    smalls = [s for s in samples if class_number(s.s, ctx) is None]
    work = [s for s in samples if class_number(s.s, ctx) is not None]
    out: list[SampleSet] = []
    if smalls:
        total = sum(s.s for s in smalls)
        if total >= ctx.small_cutoff and total > 0:
            work.append(_pool(smalls, total, ctx, rng))
        else:
            out.extend(smalls)
    c = 0
    while True:
        classes = [class_number(s.s, ctx) for s in work]
        if not classes or c > max(classes):
            break
        idxs = [i for i, cl in enumerate(classes) if cl == c]
        if len(idxs) < 2:
            c += 1
            continue
        ia, ib = idxs[0], idxs[1]
        a, b = work[ia], work[ib]
        for i in sorted((ia, ib), reverse=True):
            del work[i]
        work.append(_pool([a, b], a.s + b.s, ctx, rng))
    out.extend(work)
    return out


class SamplingSummary(Summary):
    algo = Algo.SAMPLING

    def __init__(
        self,
        ctx: SamplingContext,
        expected_items: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> None:
        super().__init__(ctx.epsilon)
        self.ctx = ctx
        self._rng = rng
        size_hint = expected_items if expected_items is not None else 0
        self._p = node_probability(ctx, size_hint)
        self._own: list[int] = []
        self._own_s = 0
        self._own_open = True
        self.samples: list[SampleSet] = []
        self._finalized = False

    def _params(self) -> dict[str, Any]:
        return {"k": self.ctx.k, "total_n": self.ctx.n, "samples": len(self.samples) or 1}

    def _need_rng(self) -> np.random.Generator:
        if self._rng is None:
            raise StateError("this summary has no random stream attached")
        return self._rng

    # -- build ---------------------------------------------------------------
    def add(self, value: int) -> None:
        self._check_live()
        if self._finalized or not self._own_open:
            raise StateError("cannot insert after finalization")
        self.n += 1
        self._own_s += 1
        if self._need_rng().random() < self._p:
            self._own.append(int(value))

    def add_many(self, values) -> None:
        self._check_live()
        if self._finalized or not self._own_open:
            raise StateError("cannot insert after finalization")
        arr = np.asarray(values)
        if arr.size == 0:
            return
        kept = arr[self._need_rng().random(arr.size) < self._p]
        self._own.extend(int(v) for v in kept.tolist())
        self.n += int(arr.size)
        self._own_s += int(arr.size)

    def finalize(self) -> None:
        """Assign local ranks (idempotent); the summary becomes query-ready."""
        self._check_live()
        if self._finalized:
            return
        if self._own_open:
            own = make_sample(self._own, self._p, self._own_s, class_number(self._own_s, self.ctx))
            self.samples.append(assign_ranks(own))
            self._own = []
            self._own_open = False
        for s in self.samples:
            assign_ranks(s)
        self._finalized = True

    # -- merge ---------------------------------------------------------------
    def _merge_impl(self, other: "SamplingSummary") -> None:
        if self.ctx != other.ctx:
            raise MergeError(f"sampling context mismatch: {self.ctx} != {other.ctx}")
        self.finalize()
        other.finalize()
        if other.n == 0:
            return
        if self.n == 0:
            self.samples = other.samples
            self.n = other.n
            return
        self.samples = tree_merge(self.samples + other.samples, self.ctx, self._need_rng())
        self.n += other.n

    # -- query -----------------------------------------------------------
    def query(self, phi: float) -> int:
        self._check_query(phi)
        if not self._finalized:
            raise StateError("finalize() must run before queries")
        return query_samples(self.samples, phi, self.n)

    # -- wire --------------------------------------------------------------
    _ITEM_DTYPE = np.dtype([("v", "<u4"), ("r", "<f8")])

    def _write_payload(self) -> bytes:
        samples = self.samples
        if self._own_open:
            pending = make_sample(
                self._own, self._p, self._own_s, class_number(self._own_s, self.ctx)
            )
            samples = self.samples + [pending]
        out = bytearray(struct.pack("<Q", len(samples)))
        for s in samples:
            cls = -1 if s.cls is None else int(s.cls)
            out += struct.pack("<dQiQ", s.p, s.s, cls, s.values.size)
            records = np.empty(s.values.size, dtype=self._ITEM_DTYPE)
            records["v"] = s.values
            records["r"] = s.ranks if s.ranked else math.nan
            out += records.tobytes()
        return bytes(out)

    @classmethod
    def _read_payload(cls, reader: Reader, epsilon: float, n: int) -> "SamplingSummary":
        (count,) = reader.take("<Q")
        samples: list[SampleSet] = []
        for _ in range(count):
            p, s_size, cls_tag, item_count = reader.take("<dQiQ")
            if not 0.0 < p <= 1.0:
                raise FormatError(f"sample probability {p} out of range", reader.offset - 28)
            raw = reader.take_bytes(item_count * cls._ITEM_DTYPE.itemsize)
            records = np.frombuffer(raw, dtype=cls._ITEM_DTYPE)
            vals = records["v"].astype(np.int64)
            ranks = records["r"].copy()
            unranked = bool(np.isnan(ranks).any())
            sample = SampleSet(
                values=vals,
                p=p,
                s=int(s_size),
                cls=None if cls_tag < 0 else int(cls_tag),
                ranks=None if unranked else ranks,
            )
            samples.append(sample)
        # The wire format does not carry (k, total n); deserialized summaries
        # answer queries but need a context re-attached before merging.
        ctx = SamplingContext(epsilon, 1, max(1, n))
        summary = cls(ctx)
        summary.n = n
        summary.samples = samples
        summary._finalized = bool(samples) and all(s.ranked for s in samples)
        summary._own = []
        summary._own_s = 0
        summary._own_open = False
        return summary

    def with_context(self, ctx: SamplingContext, rng: np.random.Generator | None = None) -> "SamplingSummary":
        self.ctx = ctx
        self.epsilon = ctx.epsilon
        if rng is not None:
            self._rng = rng
        return self


register(Algo.SAMPLING, SamplingSummary)

"""Dataset generation, the exact rank oracle, and the rank-error metric.

Values are unsigned integers drawn from a universe [0, u) with u a power of
two.  The rank-frequency law is Zipfian with a configurable exponent; exponent
0 degenerates to the uniform distribution.  Generation is reproducible: a
:class:`DataSpec` fully determines the output sequence.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .rng import stream

DATASET_MAGIC = b"DQDS"
DATASET_VERSION = 1


class ConfigurationError(ValueError):
    """Raised for invalid dataset or experiment parameters."""


def _is_power_of_two(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class DataSpec:
    """Parameters of a synthetic dataset.

    n      -- item count (>= 1)
    u      -- universe bound; values lie in [0, u); power of two >= 2
    zipf   -- skew exponent of the rank-frequency law (>= 0; 0 = uniform)
    order  -- 'sorted' (nondecreasing) or 'random'
    seed   -- 64-bit seed for the generator stream
    """

    n: int
    u: int
    zipf: float = 0.0
    order: str = "random"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigurationError(f"n must be >= 1, got {self.n}")
        if self.u < 2 or not _is_power_of_two(self.u):
            raise ConfigurationError(f"u must be a power of two >= 2, got {self.u}")
        if self.zipf < 0:
            raise ConfigurationError(f"zipf must be >= 0, got {self.zipf}")
        if self.order not in ("sorted", "random"):
            raise ConfigurationError(f"order must be 'sorted' or 'random', got {self.order!r}")


def generate(spec: DataSpec) -> np.ndarray:
    """Generate the dataset described by ``spec`` as a uint32 array.

    The sorted variant is exactly the sorted permutation of the random
    variant for the same (n, u, zipf, seed).
    """
    rng = stream(spec.seed, "dataset")
    if spec.zipf == 0:
        values = rng.integers(0, spec.u, size=spec.n, dtype=np.uint32)
    else:
        # Inverse-CDF sampling over cumulative weights rank^(-zipf),
        # ranks 1..u mapping to values 0..u-1 (smaller values more frequent).
        weights = np.arange(1, spec.u + 1, dtype=np.float64) ** (-spec.zipf)
        cdf = np.cumsum(weights)
        cdf /= cdf[-1]
        r = rng.random(spec.n)
        values = np.searchsorted(cdf, r, side="left").astype(np.uint32)
    if spec.order == "sorted":
        values = np.sort(values)
    return values


class QuantilePoint(NamedTuple):
    """A query point: phi in (0, 1) and its 0-based target rank floor(phi*n)."""

    phi: float
    target_rank: int

    @classmethod
    def for_phi(cls, phi: float, n: int) -> "QuantilePoint":
        if not 0.0 < phi < 1.0:
            raise ValueError(f"phi must be in (0, 1), got {phi}")
        rank = int(math.floor(phi * n))
        if not 0 <= rank < n:
            rank = min(max(rank, 0), n - 1)
        return cls(phi, rank)


class RankBounds(NamedTuple):
    r_min: int
    r_max: int
    absent: bool


class RankOracle:
    """Exact ranks and quantiles of a materialised dataset.

    Immutable after construction; safe to share between threads.
    """

    def __init__(self, values: np.ndarray | list[int]) -> None:
        arr = np.asarray(values)
        if arr.size == 0:
            raise ValueError("oracle requires at least one value")
        self._sorted = np.sort(arr.astype(np.int64))
        self.n = int(self._sorted.size)

    @property
    def sorted_values(self) -> np.ndarray:
        return self._sorted

    def exact_quantile(self, phi: float) -> int:
        """The element at 0-based index floor(phi*n) of the sorted data."""
        point = QuantilePoint.for_phi(phi, self.n)
        return int(self._sorted[point.target_rank])

    def rank_bounds(self, v: int) -> RankBounds:
        """0-based [r_min, r_max] occupied by value v.

        r_min counts elements strictly below v.  For absent values the bounds
        collapse to the insertion point (r_max = r_min) and ``absent`` is set.
        """
        lo = int(np.searchsorted(self._sorted, v, side="left"))
        hi = int(np.searchsorted(self._sorted, v, side="right"))
        if hi == lo:
            return RankBounds(lo, lo, True)
        return RankBounds(lo, hi - 1, False)

    def rank_error(self, phi: float, answer: int) -> float:
        """Normalised distance from the target rank to the ranks held by ``answer``."""
        point = QuantilePoint.for_phi(phi, self.n)
        bounds = self.rank_bounds(int(answer))
        r = point.target_rank
        if r < bounds.r_min:
            return (bounds.r_min - r) / self.n
        if r > bounds.r_max:
            return (r - bounds.r_max) / self.n
        return 0.0


def write_dataset(path: str, values: np.ndarray, u: int) -> None:
    """Write the binary dataset file: magic, version u8, n u64, u u64, n x u32 (LE)."""
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.uint32))
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<B", DATASET_VERSION))
        fh.write(struct.pack("<QQ", arr.size, u))
        fh.write(arr.astype("<u4").tobytes())


def read_dataset(path: str) -> tuple[np.ndarray, int]:
    """Read a binary dataset file; returns (values, u)."""
    with open(path, "rb") as fh:
        head = fh.read(21)
        if len(head) < 21:
            raise ConfigurationError(f"{path}: truncated dataset header")
        if head[:4] != DATASET_MAGIC:
            raise ConfigurationError(f"{path}: bad magic {head[:4]!r}")
        version = head[4]
        if version != DATASET_VERSION:
            raise ConfigurationError(f"{path}: unsupported version {version}")
        n, u = struct.unpack_from("<QQ", head, 5)
        payload = fh.read(4 * n)
        if len(payload) != 4 * n:
            raise ConfigurationError(f"{path}: truncated values section")
        values = np.frombuffer(payload, dtype="<u4").astype(np.uint32)
    return values, int(u)


def write_dataset_text(path: str, values: np.ndarray) -> None:
    """One decimal integer per line."""
    with open(path, "w", encoding="ascii") as fh:
        for v in np.asarray(values).tolist():
            fh.write(f"{int(v)}\n")


def read_dataset_text(path: str) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        values = [int(line) for line in fh if line.strip()]
    return np.asarray(values, dtype=np.uint32)

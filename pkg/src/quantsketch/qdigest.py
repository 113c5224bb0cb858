"""Q-Digest over a fixed power-of-two universe, plus the streaming variant.

The digest is a sparse counter map over a virtual complete binary tree with u
leaves: the root is heap index 1, children of i are 2i and 2i+1, and the leaf
for value x is u + x.  After compression every non-root node v with a positive
counter satisfies

    (1) c_v <= floor(eps * n / log2(u))          (internal nodes)
    (2) c_v + c_parent + c_sibling > floor(eps * n / log2(u))

which bounds the node count by 3 * log2(u) / eps + 1.

The ``batch`` variant counts values at the leaves and compresses only when
told to (the harness does so at chunk boundaries); the ``fast`` variant places
each incoming item on the deepest ancestor whose counter can still grow, and
compresses whenever n doubles.
"""

from __future__ import annotations

import struct
from typing import Any

import numpy as np

from .api import Algo, FormatError, MergeError, Reader, Summary, register
from .corpus import ConfigurationError

VARIANT_BATCH = "batch"
VARIANT_FAST = "fast"
_VARIANT_TAGS = {VARIANT_BATCH: 0, VARIANT_FAST: 1}
_VARIANT_NAMES = {v: k for k, v in _VARIANT_TAGS.items()}


class QDigest(Summary):
    def __init__(self, epsilon: float, u: int, variant: str = VARIANT_BATCH) -> None:
        super().__init__(epsilon)
        if u < 2 or (u & (u - 1)) != 0:
            raise ConfigurationError(f"universe must be a power of two >= 2, got {u}")
        if variant not in _VARIANT_TAGS:
            raise ConfigurationError(f"unknown q-digest variant {variant!r}")
        self.u = u
        self.variant = variant
        self.algo = Algo.QDIGEST if variant == VARIANT_BATCH else Algo.FASTQDIGEST
        self._log_u = u.bit_length() - 1
        self._nodes: dict[int, int] = {}
        self._n_last_compress = 1

    # -- inspection --------------------------------------------------------
    @property
    def nodes(self) -> dict[int, int]:
        return dict(self._nodes)

    def node_count(self) -> int:
        return len(self._nodes)

    def threshold(self) -> int:
        return int(self.epsilon * self.n / self._log_u)

    def _params(self) -> dict[str, Any]:
        return {"u": self.u, "variant": self.variant, "nodes": len(self._nodes)}

    def total_count(self) -> int:
        return sum(self._nodes.values())

    # -- build ---------------------------------------------------------------
    def add(self, value: int) -> None:
        self._check_live()
        value = int(value)
        if not 0 <= value < self.u:
            raise ConfigurationError(f"value {value} outside universe [0, {self.u})")
        if self.variant == VARIANT_BATCH:
            self.n += 1
            leaf = self.u + value
            self._nodes[leaf] = self._nodes.get(leaf, 0) + 1
        else:
            self._fast_add(value)

    def add_many(self, values) -> None:
        if self.variant == VARIANT_FAST:
            super().add_many(values)
            return
        self._check_live()
        arr = np.asarray(values)
        if arr.size == 0:
            return
        if arr.min() < 0 or arr.max() >= self.u:
            raise ConfigurationError("values outside universe")
        uniques, counts = np.unique(arr, return_counts=True)
        nodes = self._nodes
        for v, c in zip(uniques.tolist(), counts.tolist()):
            leaf = self.u + v
            nodes[leaf] = nodes.get(leaf, 0) + c
        self.n += int(arr.size)

    def _fast_add(self, value: int) -> None:
        self.n += 1
        nodes = self._nodes
        if not nodes:
            nodes[1] = 1  # empty tree: the root takes the first item
            return
        leaf = self.u + value
        log_u = self._log_u
        start = 1
        for d in range(log_u, -1, -1):
            h = leaf >> (log_u - d)
            if h in nodes:
                start = h
                break
        t = self.threshold()
        h = start
        while True:
            d = h.bit_length() - 1
            if d == log_u:  # leaves are exempt from condition (1)
                nodes[h] = nodes.get(h, 0) + 1
                break
            c = nodes.get(h, 0)
            if c + 1 <= t:
                nodes[h] = c + 1
                break
            h = leaf >> (log_u - d - 1)
        if self.n >= 2 * self._n_last_compress:
            self.compress()
            self._n_last_compress = self.n

    def end_chunk(self) -> None:
        if self.variant == VARIANT_BATCH:
            self.compress()

    # -- compress ------------------------------------------------------------
    def compress(self) -> None:
        """Fold sibling pairs upward, level by level from the leaves.

        Each sibling pair is examined once; both counters move to the parent
        when c_left + c_right + c_parent fits under the threshold.  Counts are
        conserved.
        """
        self._check_live()
        if self.n < 1:
            return
        t = self.threshold()
        if t < 1:
            return  # any occupied pair sums to at least 1 > t, nothing can fold
        nodes = self._nodes
        buckets: list[list[int]] = [[] for _ in range(self._log_u + 1)]
        for h in nodes:
            buckets[h.bit_length() - 1].append(h)
        for level in range(self._log_u, 0, -1):
            seen: set[int] = set()
            for h in buckets[level]:
                left = h & ~1
                if left in seen:
                    continue
                seen.add(left)
                c_l = nodes.get(left, 0)
                c_r = nodes.get(left + 1, 0)
                if c_l == 0 and c_r == 0:
                    continue
                parent = left >> 1
                c_p = nodes.get(parent, 0)
                if c_l + c_r + c_p <= t:
                    if parent not in nodes:
                        buckets[level - 1].append(parent)
                    nodes[parent] = c_l + c_r + c_p
                    nodes.pop(left, None)
                    nodes.pop(left + 1, None)

    # -- merge ---------------------------------------------------------------
    def _merge_impl(self, other: "QDigest") -> None:
        if self.u != other.u:
            raise MergeError(f"universe mismatch: {self.u} != {other.u}")
        if self.epsilon != other.epsilon:
            raise MergeError(f"epsilon mismatch: {self.epsilon} != {other.epsilon}")
        if self.variant != other.variant:
            raise MergeError(f"variant mismatch: {self.variant} != {other.variant}")
        nodes = self._nodes
        for h, c in other._nodes.items():
            nodes[h] = nodes.get(h, 0) + c
        self.n += other.n
        self.compress()
        self._n_last_compress = max(1, self.n)

    # -- query -----------------------------------------------------------
    def _postorder_key(self, h: int) -> int:
        log_u = self._log_u
        d = h.bit_length() - 1
        key = 0
        for k in range(d - 1, -1, -1):
            if (h >> k) & 1:
                child_depth = d - k
                key += (1 << (log_u - child_depth + 1)) - 1
        return key + (1 << (log_u - d + 1)) - 2

    def _right_endpoint(self, h: int) -> int:
        d = h.bit_length() - 1
        span = self.u >> d
        start = (h - (1 << d)) * span
        return start + span - 1

    def query(self, phi: float) -> int:
        """Accumulate counters in post-order until the sum reaches phi*n."""
        self._check_query(phi)
        target = phi * self.n
        total = 0
        last = 0
        for h in sorted(self._nodes, key=self._postorder_key):
            total += self._nodes[h]
            last = h
            if total >= target:
                return self._right_endpoint(h)
        return self._right_endpoint(last)

    # -- wire --------------------------------------------------------------
    def _write_payload(self) -> bytes:
        out = bytearray(struct.pack("<QQ", self.u, len(self._nodes)))
        for h in sorted(self._nodes):
            out += struct.pack("<QQ", h, self._nodes[h])
        out += struct.pack("<B", _VARIANT_TAGS[self.variant])
        return bytes(out)

    @classmethod
    def _read_payload(cls, reader: Reader, epsilon: float, n: int) -> "QDigest":
        u, count = reader.take("<QQ")
        if u < 2 or (u & (u - 1)) != 0:
            raise FormatError(f"universe {u} is not a power of two", reader.offset - 16)
        nodes: dict[int, int] = {}
        for _ in range(count):
            h, c = reader.take("<QQ")
            if not 1 <= h < 2 * u:
                raise FormatError(f"heap index {h} out of range", reader.offset - 16)
            nodes[h] = c
        (variant_tag,) = reader.take("<B")
        if variant_tag not in _VARIANT_NAMES:
            raise FormatError(f"unknown variant tag {variant_tag}", reader.offset - 1)
        digest = cls(epsilon, int(u), variant=_VARIANT_NAMES[variant_tag])
        digest.n = n
        digest._nodes = nodes
        digest._n_last_compress = max(1, n)
        return digest


register(Algo.QDIGEST, QDigest)
register(Algo.FASTQDIGEST, QDigest)

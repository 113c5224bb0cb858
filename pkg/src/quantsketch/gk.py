"""GK quantile summary with classic and mixed insertion policies.

The summary is an ordered list of tuples (v, g, delta) where g is the gap in
the minimum rank between consecutive stored values and delta is the spread
between the maximum and minimum rank of v.  Two restrictions hold for a
summary built from a single stream:

    (1) sum(g[..i]) <= rank(v_i) + 1 <= sum(g[..i]) + delta_i
    (2) g_i + delta_i <= floor(2 * epsilon * n)

``classic`` mode compresses every ceil(1/(2*epsilon)) insertions; ``mixed``
mode (the default) drops freshly inserted tuples that are immediately
removable and compresses when the tuple list doubles in length.  Merging
interleaves two summaries, widens deltas to cover the other side's rank
uncertainty, and compresses; the result answers queries within
max(eps_a, eps_b) of the exact rank.
"""

from __future__ import annotations

import bisect
import math
import struct
from typing import Any, Iterator

from .api import Algo, FormatError, MergeError, Reader, StateError, Summary, register
from .corpus import ConfigurationError

MODE_CLASSIC = "classic"
MODE_MIXED = "mixed"
_MODE_TAGS = {MODE_CLASSIC: 0, MODE_MIXED: 1}
_MODE_NAMES = {v: k for k, v in _MODE_TAGS.items()}


def capacity(delta: int, n: int, epsilon: float) -> int:
    """Band index of a delta value (larger band = harder to delete).

    With p = floor(2*eps*n): delta 0 maps above every band, delta = p maps to
    band 0, and intermediate deltas fall into the unique band alpha with
    p - 2^alpha - (p mod 2^alpha) < delta <= p - 2^(alpha-1) - (p mod 2^(alpha-1)).
    """
    if n < 1:
        raise ConfigurationError("capacity requires n >= 1")
    two_eps_n = 2.0 * epsilon * n
    p = int(two_eps_n)
    if delta > p:
        raise ConfigurationError(f"delta {delta} exceeds floor(2*eps*n) = {p}")
    return _band(delta, p, _threshold(two_eps_n))


def _threshold(two_eps_n: float) -> int:
    return math.ceil(math.log2(two_eps_n)) if two_eps_n > 0 else 0


def _band(delta: int, p: int, threshold: int) -> int:
    if delta == 0:
        return threshold + 1
    if delta >= p:  # delta == p normally; > p only after a merge widened deltas
        return 0
    for alpha in range(1, threshold + 1):
        lower = p - (1 << alpha) - (p % (1 << alpha))
        upper = p - (1 << (alpha - 1)) - (p % (1 << (alpha - 1)))
        if lower < delta <= upper:
            return alpha
    # The bands partition [1, p-1]; reaching here means delta > p-1 handled above.
    return 0


class GkSummary(Summary):
    algo = Algo.GK

    def __init__(self, epsilon: float, mode: str = MODE_MIXED) -> None:
        super().__init__(epsilon)
        if mode not in _MODE_TAGS:
            raise ConfigurationError(f"unknown GK mode {mode!r}")
        self.mode = mode
        self.merged = False
        self._vals: list[int] = []
        self._gs: list[int] = []
        self._deltas: list[int] = []
        self._k = math.ceil(1.0 / (2.0 * epsilon))
        self._size_at_compress = 1

    # -- inspection --------------------------------------------------------
    def tuples(self) -> list[tuple[int, int, int]]:
        return list(zip(self._vals, self._gs, self._deltas))

    def rank_intervals(self) -> Iterator[tuple[int, int, int]]:
        """Yield (v, r_min, r_max) with 1-based ranks."""
        r_min = 0
        for v, g, d in zip(self._vals, self._gs, self._deltas):
            r_min += g
            yield v, r_min, r_min + d

    def _params(self) -> dict[str, Any]:
        return {"mode": self.mode, "merged": self.merged, "tuples": len(self._vals)}

    # -- build ---------------------------------------------------------------
    def add(self, value: int) -> None:
        self._check_live()
        if self.merged:
            raise StateError("cannot insert into a summary that has been merged")
        self.n += 1
        if self.mode == MODE_CLASSIC and self.n % self._k == 0:
            self._compress()
        vals, gs, deltas = self._vals, self._gs, self._deltas
        i = bisect.bisect_right(vals, value)
        if i == 0 or i == len(vals):
            delta = 0
        else:
            delta = gs[i] + deltas[i] - 1
        vals.insert(i, value)
        gs.insert(i, 1)
        deltas.insert(i, delta)
        if self.mode == MODE_MIXED:
            if 0 < i < len(vals) - 1:
                # GKMixed: drop the new tuple right away when removable.
                if 1 + gs[i + 1] + deltas[i + 1] <= int(2.0 * self.epsilon * self.n):
                    del vals[i], gs[i], deltas[i]
                    gs[i] += 1
            if len(vals) >= 2 * self._size_at_compress:
                self._compress()
                self._size_at_compress = max(1, len(vals))

    def compress(self) -> None:
        self._check_live()
        self._compress()

    def _compress(self) -> None:
        n = self.n
        two_eps_n = 2.0 * self.epsilon * n
        p = int(two_eps_n)
        if p < 1:
            return  # every tuple must be kept this early in the stream
        threshold = _threshold(two_eps_n)
        vals, gs, deltas = self._vals, self._gs, self._deltas
        i = len(vals) - 2
        while i >= 1:  # the first tuple (stream minimum) is never removed
            band_i = _band(deltas[i], p, threshold)
            if band_i <= _band(deltas[i + 1], p, threshold):
                g_star = gs[i]
                j = i - 1
                while j >= 1 and _band(deltas[j], p, threshold) < band_i:
                    g_star += gs[j]
                    j -= 1
                lo = j + 1
                if g_star + gs[i + 1] + deltas[i + 1] - 1 <= two_eps_n:
                    gs[i + 1] += g_star
                    del vals[lo : i + 1], gs[lo : i + 1], deltas[lo : i + 1]
                    i = lo - 1
                    continue
            i -= 1

    # -- merge ---------------------------------------------------------------
    def _merge_impl(self, other: "GkSummary") -> None:
        self.merged = True
        new_eps = max(self.epsilon, other.epsilon)
        if other.n == 0:
            self.epsilon = new_eps
            return
        if self.n == 0:
            self.epsilon = new_eps
            self.n = other.n
            self._vals = list(other._vals)
            self._gs = list(other._gs)
            self._deltas = list(other._deltas)
            return
        a = list(zip(self._vals, self._gs, self._deltas))
        b = list(zip(other._vals, other._gs, other._deltas))
        merged: list[tuple[int, int, int, bool]] = []  # (v, g, delta, from_a)
        ia = ib = 0
        while ia < len(a) or ib < len(b):
            if ib == len(b) or (ia < len(a) and a[ia][0] <= b[ib][0]):
                merged.append((*a[ia], True))
                ia += 1
            else:
                merged.append((*b[ib], False))
                ib += 1
        m = len(merged)
        # Nearest other-origin tuple after / before each position.
        next_other = [-1] * m
        last_a = last_b = -1
        for i in range(m - 1, -1, -1):
            next_other[i] = last_b if merged[i][3] else last_a
            if merged[i][3]:
                last_a = i
            else:
                last_b = i
        prev_other = [-1] * m
        last_a = last_b = -1
        for i in range(m):
            prev_other[i] = last_b if merged[i][3] else last_a
            if merged[i][3]:
                last_a = i
            else:
                last_b = i
        vals, gs, deltas = [], [], []
        for i, (v, g, d, _) in enumerate(merged):
            j = next_other[i]
            if j >= 0:
                d = d + merged[j][1] + merged[j][2] - 1
            elif prev_other[i] >= 0:
                d = d + merged[prev_other[i]][2]
            vals.append(v)
            gs.append(g)
            deltas.append(d)
        self._vals, self._gs, self._deltas = vals, gs, deltas
        self.n += other.n
        self.epsilon = new_eps
        self._compress()

    # -- query -----------------------------------------------------------
    def query(self, phi: float) -> int:
        """Estimate the phi-quantile.

        Classic unmerged summaries scan for the first tuple whose running
        r_max reaches floor(phi*n) + 1 (the walkthrough estimation rule).
        Mixed or merged summaries answer with a tuple whose rank interval
        sits inside the epsilon*n window around the target, which keeps the
        instance rank within epsilon*n of the target whenever restriction (2)
        holds; among window tuples the |r - r_min| + |r_max - r| score picks
        the answer (ties resolved toward the later tuple).
        """
        self._check_query(phi)
        r = int(math.floor(phi * self.n))
        target = r + 1
        if self.mode == MODE_CLASSIC and not self.merged:
            r_min = 0
            for v, g, d in zip(self._vals, self._gs, self._deltas):
                r_min += g
                if r_min + d >= target:
                    return v
            return self._vals[-1]
        window = self.epsilon * self.n
        best = best_windowed = None
        best_diff = best_windowed_diff = None
        r_min = 0
        for v, g, d in zip(self._vals, self._gs, self._deltas):
            r_min += g
            r_max = r_min + d
            diff = abs(r - r_min) + abs(r_max - r)
            if best_diff is None or diff < best_diff:
                best, best_diff = v, diff
            if target - r_min <= window and r_max - target <= window:
                if best_windowed_diff is None or diff <= best_windowed_diff:
                    best_windowed, best_windowed_diff = v, diff
            if r_min > target + window:
                break
        return best_windowed if best_windowed is not None else best

    # -- wire --------------------------------------------------------------
    def _write_payload(self) -> bytes:
        out = bytearray(struct.pack("<Q", len(self._vals)))
        for v, g, d in zip(self._vals, self._gs, self._deltas):
            out += struct.pack("<IQQ", v, g, d)
        out += struct.pack("<BB", _MODE_TAGS[self.mode], int(self.merged))
        return bytes(out)

    @classmethod
    def _read_payload(cls, reader: Reader, epsilon: float, n: int) -> "GkSummary":
        (count,) = reader.take("<Q")
        vals, gs, deltas = [], [], []
        for _ in range(count):
            v, g, d = reader.take("<IQQ")
            vals.append(v)
            gs.append(g)
            deltas.append(d)
        mode_tag, merged = reader.take("<BB")
        if mode_tag not in _MODE_NAMES:
            raise FormatError(f"unknown GK mode tag {mode_tag}", reader.offset - 2)
        summary = cls(epsilon, mode=_MODE_NAMES[mode_tag])
        summary.n = n
        summary.merged = bool(merged)
        summary._vals, summary._gs, summary._deltas = vals, gs, deltas
        summary._size_at_compress = max(1, len(vals))
        return summary


def merge(a: GkSummary, b: GkSummary) -> GkSummary:
    """Module-level convenience wrapper; absorbs ``b`` into ``a``."""
    if not isinstance(a, GkSummary) or not isinstance(b, GkSummary):
        raise MergeError("merge requires two GK summaries")
    return a.merge(b)


register(Algo.GK, GkSummary)

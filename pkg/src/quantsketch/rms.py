"""Random mergeable summaries: level-weighted sampling into a buffer hierarchy.

Configuration is derived from epsilon (which must be below 1/2):

    h = floor(log2(1/eps))            hierarchy height
    b = h + 1                         buffer budget
    s = floor((1/eps) * sqrt(log2(1/eps)))   buffer capacity
    constLevel = 1 - 2*log2(1/eps) - log2(log2(1/eps)) / 2

Arriving items survive with probability 2^-curLevel and wait in a staging
list; every s survivors fill a buffer which is placed at the first hierarchy
level whose LevelVal is -1 or equals curLevel, after which
curLevel = max(0, ceil(constLevel + log2(n+1))).  When no free buffer exists,
the two buffers at the lowest populated LevelVal merge: their sorted union
keeps either the even- or odd-indexed half (fair coin) and moves one level up.
An item stored at a level with value L stands for 2^L original items, which is
exactly the weight used by queries after finalization flattens the hierarchy
into a single sorted weighted array.
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
class RmsConfig:
    epsilon: float
    h: int
    b: int
    s: int
    const_level: float

    @classmethod
    def from_epsilon(cls, epsilon: float) -> "RmsConfig":
        if not 0.0 < epsilon < 0.5:
            raise ConfigurationError(
                f"epsilon must be in (0, 0.5) for the buffer hierarchy, got {epsilon}"
            )
        inv = 1.0 / epsilon
        log_inv = math.log2(inv)
        h = int(math.floor(log_inv))
        s = int(math.floor(inv * math.sqrt(log_inv)))
        const_level = 1.0 - 2.0 * log_inv - 0.5 * math.log2(log_inv)
        return cls(epsilon=epsilon, h=h, b=h + 1, s=s, const_level=const_level)


@dataclass
class Level:
    level_val: int = -1
    buffers: list[list[int]] = field(default_factory=list)


class RmsSummary(Summary):
    algo = Algo.RMS

    def __init__(self, epsilon: float, rng: np.random.Generator | None = None) -> None:
        super().__init__(epsilon)
        self.cfg = RmsConfig.from_epsilon(epsilon)
        self._rng = rng
        self.levels: list[Level] = [Level() for _ in range(self.cfg.b)]
        self.staging: list[int] = []
        self.cur_level = 0
        self._free = self.cfg.b
        self._flat: tuple[np.ndarray, np.ndarray] | None = None  # (values, weights)

    # -- inspection --------------------------------------------------------
    def _params(self) -> dict[str, Any]:
        return {"h": self.cfg.h, "b": self.cfg.b, "s": self.cfg.s, "cur_level": self.cur_level}

    def buffers_held(self) -> int:
        return sum(len(lvl.buffers) for lvl in self.levels)

    def estimated_mass(self) -> float:
        """Total stream mass implied by the stored items and their weights."""
        mass = float(len(self.staging)) * 2.0**self.cur_level
        for lvl in self.levels:
            if lvl.buffers and lvl.level_val >= 0:
                mass += 2.0**lvl.level_val * sum(len(b) for b in lvl.buffers)
        return mass

    @property
    def finalized(self) -> bool:
        return self._flat is not None

    def _need_rng(self) -> np.random.Generator:
        if self._rng is None:
            raise StateError("this summary has no random stream attached")
        return self._rng

    # -- build ---------------------------------------------------------------
    def add(self, value: int) -> None:
        self._check_live()
        if self.finalized:
            raise StateError("cannot insert after finalization")
        self.n += 1
        if self._need_rng().random() < 2.0 ** (-self.cur_level):
            self.staging.append(int(value))
            if len(self.staging) >= self.cfg.s:
                self._flush_staging()

    def add_many(self, values) -> None:
        self._check_live()
        if self.finalized:
            raise StateError("cannot insert after finalization")
        arr = np.asarray(values)
        if arr.size == 0:
            return
        draws = self._need_rng().random(arr.size).tolist()
        staging = self.staging
        s_cap = self.cfg.s
        for v, d in zip(arr.tolist(), draws):
            self.n += 1
            if d < 2.0 ** (-self.cur_level):
                staging.append(int(v))
                if len(staging) >= s_cap:
                    self._flush_staging()

    def _update_cur_level(self) -> None:
        self.cur_level = max(0, math.ceil(self.cfg.const_level + math.log2(self.n + 1)))

    def _flush_staging(self) -> None:
        items = sorted(self.staging)
        self.staging.clear()  # in place: add_many iterates while holding the list
        self._acquire_buffer_slot()
        self._place(items, self.cur_level)
        self._update_cur_level()

    def _acquire_buffer_slot(self) -> None:
        if self._free > 0:
            self._free -= 1
            return
        self._merge_two_buffers()
        self._free -= 1

    def _lowest_level_with(self, count: int) -> int | None:
        best = None
        best_val = None
        for i, lvl in enumerate(self.levels):
            if len(lvl.buffers) >= count and lvl.level_val >= 0:
                if best_val is None or lvl.level_val < best_val:
                    best, best_val = i, lvl.level_val
        return best

    def _merge_two_buffers(self) -> None:
        """Free one buffer by halving a pair at the lowest populated level value."""
        li = self._lowest_level_with(2)
        if li is not None:
            lvl = self.levels[li]
            b1 = lvl.buffers.pop(0)
            b2 = lvl.buffers.pop(0)
            survivors = self._halve(sorted(b1 + b2))
            self._place_at_level_val(survivors, lvl.level_val + 1)
            self._free += 1
            return
        # Degenerate fallback: every level holds at most one buffer.  Merge the
        # buffers from the two lowest populated level values, rate-subsampling
        # each side down to one level above the higher of the two.
        holders = sorted(
            (i for i, lvl in enumerate(self.levels) if lvl.buffers and lvl.level_val >= 0),
            key=lambda i: self.levels[i].level_val,
        )
        if len(holders) < 2:
            raise StateError("no buffer pair available to merge")
        ia, ib = holders[0], holders[1]
        la, lb = self.levels[ia], self.levels[ib]
        new_val = max(la.level_val, lb.level_val) + 1
        rng = self._need_rng()
        merged: list[int] = []
        for lvl in (la, lb):
            rate = 2.0 ** (lvl.level_val - new_val)
            buf = lvl.buffers.pop(0)
            merged.extend(v for v in buf if rng.random() < rate)
        self._place_at_level_val(sorted(merged), new_val)
        self._free += 1

    def _halve(self, combined: list[int]) -> list[int]:
        start = int(self._need_rng().integers(0, 2))
        return combined[start::2]

    def _place(self, items: list[int], level_val: int) -> None:
        """Alg-7 placement: first level whose value is -1 or matches."""
        for lvl in self.levels:
            if lvl.level_val == -1 or lvl.level_val == level_val:
                if lvl.level_val == -1:
                    lvl.level_val = level_val
                lvl.buffers.append(items)
                return
        self.levels.append(Level(level_val, [items]))

    def _place_at_level_val(self, items: list[int], level_val: int) -> None:
        """Place on the exact level value, claiming or creating a level as needed."""
        for lvl in self.levels:
            if lvl.level_val == level_val:
                lvl.buffers.append(items)
                return
        for lvl in self.levels:
            if lvl.level_val == -1:
                lvl.level_val = level_val
                lvl.buffers.append(items)
                return
        self.levels.append(Level(level_val, [items]))

    # -- merge ---------------------------------------------------------------
    def _merge_impl(self, other: "RmsSummary") -> None:
        if self.epsilon != other.epsilon:
            raise MergeError(f"epsilon mismatch: {self.epsilon} != {other.epsilon}")
        if self.finalized or other.finalized:
            raise StateError("cannot merge finalized summaries")
        if other.n == 0:
            self._update_cur_level()
            return
        if self.n == 0:
            self.levels = other.levels
            self.staging = other.staging
            self.cur_level = other.cur_level
            self.n = other.n
            self._free = other._free
            self._update_cur_level()
            return
        cfg = self.cfg
        rng = self._need_rng()
        total = self.n + other.n
        new_level = max(0, math.ceil(cfg.const_level + math.log2(total)))
        scratch: list[int] = []
        placed: list[list[int]] = []

        def drain(items: list[int], from_level: int) -> None:
            rate = min(1.0, 2.0 ** (from_level - new_level))
            if rate >= 1.0:
                scratch.extend(items)
            else:
                scratch.extend(v for v in items if rng.random() < rate)
            while len(scratch) >= cfg.s:
                scratch.sort()
                placed.append(scratch[: cfg.s])
                del scratch[: cfg.s]
            assert len(scratch) <= 2 * cfg.s, "scratch buffer exceeded its 2s bound"

        drain(self.staging, self.cur_level)
        drain(other.staging, other.cur_level)
        self.staging = []
        keep_levels: list[Level] = []
        for lvl in self.levels:
            if lvl.level_val >= 0 and lvl.level_val < new_level and lvl.buffers:
                for buf in lvl.buffers:
                    drain(buf, lvl.level_val)
            elif lvl.buffers:
                keep_levels.append(lvl)
        other_high: list[Level] = []
        for lvl in other.levels:
            if lvl.level_val >= 0 and lvl.level_val < new_level and lvl.buffers:
                for buf in lvl.buffers:
                    drain(buf, lvl.level_val)
            elif lvl.buffers:
                other_high.append(lvl)

        self.levels = [Level() for _ in range(cfg.b)]
        for lvl in keep_levels:
            for buf in lvl.buffers:
                self._place_at_level_val(buf, lvl.level_val)
        for buf in placed:
            self._place_at_level_val(buf, new_level)
        scratch.sort()
        if scratch:
            self._place_at_level_val(scratch, new_level)
        for lvl in other_high:
            for buf in lvl.buffers:
                target = next(
                    (x for x in self.levels if x.level_val == lvl.level_val and x.buffers), None
                )
                if target is not None:
                    mine = target.buffers.pop(0)
                    survivors = self._halve(sorted(mine + buf))
                    self._place_at_level_val(survivors, lvl.level_val + 1)
                else:
                    self._place_at_level_val(list(buf), lvl.level_val)

        self.n = total
        self.cur_level = new_level
        self._free = max(0, cfg.b - self.buffers_held())
        while self.buffers_held() > cfg.b:
            self._merge_two_buffers()
            self._free = max(0, cfg.b - self.buffers_held())

    # -- finalize / query --------------------------------------------------
    def finalize(self) -> None:
        """Flush the staging list and flatten the hierarchy for queries."""
        self._check_live()
        if self.staging:
            items = sorted(self.staging)
            self.staging = []
            self._acquire_buffer_slot()
            self._place(items, self.cur_level)
            self._update_cur_level()
        values: list[int] = []
        weights: list[float] = []
        for lvl in self.levels:
            if lvl.level_val < 0:
                continue
            w = 2.0**lvl.level_val
            for buf in lvl.buffers:
                values.extend(buf)
                weights.extend([w] * len(buf))
        order = np.argsort(np.asarray(values, dtype=np.int64), kind="stable")
        varr = np.asarray(values, dtype=np.int64)[order]
        warr = np.asarray(weights, dtype=np.float64)[order]
        self._flat = (varr, np.cumsum(warr))

    def query(self, phi: float) -> int:
        """First stored value whose running weight reaches phi*n; else the largest."""
        self._check_query(phi)
        if not self.finalized:
            raise StateError("finalize() must run before queries")
        varr, cum = self._flat
        if varr.size == 0:
            raise QueryError("summary holds no sampled items")
        target = phi * self.n
        idx = int(np.searchsorted(cum, target, side="left"))
        if idx >= varr.size:
            idx = varr.size - 1
        return int(varr[idx])

    # -- wire --------------------------------------------------------------
    def _write_payload(self) -> bytes:
        cfg = self.cfg
        out = bytearray(
            struct.pack("<IIQd", cfg.h, cfg.b, cfg.s, cfg.const_level)
        )
        out += struct.pack("<iQ", self.cur_level, self.n)
        out += struct.pack("<Q", len(self.staging))
        out += np.asarray(self.staging, dtype="<u4").tobytes()
        out += struct.pack("<I", len(self.levels))
        for lvl in self.levels:
            out += struct.pack("<iI", lvl.level_val, len(lvl.buffers))
            for buf in lvl.buffers:
                out += struct.pack("<Q", len(buf))
                out += np.asarray(buf, dtype="<u4").tobytes()
        return bytes(out)

    @classmethod
    def _read_payload(cls, reader: Reader, epsilon: float, n: int) -> "RmsSummary":
        h, b, s, const_level = reader.take("<IIQd")
        cur_level, n_payload = reader.take("<iQ")
        summary = cls(epsilon)
        cfg = summary.cfg
        if (h, b, s) != (cfg.h, cfg.b, cfg.s):
            raise FormatError(
                f"parameters (h={h}, b={b}, s={s}) disagree with epsilon {epsilon}",
                reader.offset - 24,
            )
        if n_payload != n:
            raise FormatError(f"payload n {n_payload} disagrees with header n {n}", reader.offset - 8)
        (staging_count,) = reader.take("<Q")
        staging = np.frombuffer(reader.take_bytes(4 * staging_count), dtype="<u4")
        (level_count,) = reader.take("<I")
        levels: list[Level] = []
        for _ in range(level_count):
            level_val, buffer_count = reader.take("<iI")
            buffers = []
            for _ in range(buffer_count):
                (blen,) = reader.take("<Q")
                buf = np.frombuffer(reader.take_bytes(4 * blen), dtype="<u4")
                buffers.append([int(v) for v in buf.tolist()])
            levels.append(Level(level_val, buffers))
        summary.n = n
        summary.cur_level = cur_level
        summary.staging = [int(v) for v in staging.tolist()]
        summary.levels = levels
        summary._free = max(0, cfg.b - summary.buffers_held())
        return summary

    def attach_rng(self, rng: np.random.Generator) -> "RmsSummary":
        self._rng = rng
        return self


register(Algo.RMS, RmsSummary)

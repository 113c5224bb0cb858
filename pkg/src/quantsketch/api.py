"""Common mergeable-summary contract and the versioned binary wire format.

Every algorithm implements :class:`Summary`: single items go in with ``add``,
two summaries of the same kind combine with ``merge`` (which absorbs the other
operand), and ``query`` returns a quantile estimate.  ``serialize`` produces
the canonical little-endian blob whose exact byte length is the size metric
used by the harness.

Wire header layout (all little-endian):

    bytes 0-3   magic "DQES"
    byte  4     version = 1
    byte  5     algorithm tag (GK=1, SAMPLING=2, QDIGEST=3, FASTQDIGEST=4, RMS=5)
    bytes 6-13  epsilon, IEEE-754 binary64
    bytes 14-21 n, u64

The payload that follows is algorithm-specific.
"""

from __future__ import annotations

import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, ClassVar

from .corpus import ConfigurationError

WIRE_MAGIC = b"DQES"
WIRE_VERSION = 1
HEADER_LEN = 22


class Algo(IntEnum):
    GK = 1
    SAMPLING = 2
    QDIGEST = 3
    FASTQDIGEST = 4
    RMS = 5


class FormatError(ValueError):
    """Malformed wire blob; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class StateError(RuntimeError):
    """Operation applied to a summary in the wrong lifecycle state."""


class MergeError(ValueError):
    """Merge precondition violated (algorithm, epsilon, or universe mismatch)."""


class QueryError(ValueError):
    """Query precondition violated (empty summary or phi out of range)."""


@dataclass(frozen=True)
class SummaryDescriptor:
    algo: Algo
    epsilon: float
    n: int
    params: dict[str, Any] = field(default_factory=dict)


class Reader:
    """Cursor over a wire blob that raises FormatError with the failing offset."""

    def __init__(self, data: bytes, offset: int = 0) -> None:
        self.data = data
        self.offset = offset

    def take(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise FormatError("truncated blob", self.offset)
        out = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return out

    def take_bytes(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError("truncated blob", self.offset)
        out = self.data[self.offset : self.offset + size]
        self.offset += size
        return out

    def expect_end(self) -> None:
        if self.offset != len(self.data):
            raise FormatError("trailing bytes after payload", self.offset)


class Summary(ABC):
    """A mergeable quantile summary.

    Summaries are single-writer objects: at most one context may mutate a
    given instance at a time, and ``merge`` requires exclusive access to both
    operands.  ``merge`` absorbs the right operand into the left and marks it
    consumed; any further use of a consumed summary raises StateError.
    """

    algo: ClassVar[Algo]

    def __init__(self, epsilon: float) -> None:
        if not 0.0 < epsilon < 1.0:
            raise ConfigurationError(f"epsilon must be in (0, 1), got {epsilon}")
        self.epsilon = float(epsilon)
        self.n = 0
        self._consumed = False

    # -- lifecycle guards -------------------------------------------------
    def _check_live(self) -> None:
        if self._consumed:
            raise StateError("summary was consumed by a merge")

    # -- build ------------------------------------------------------------
    @abstractmethod
    def add(self, value: int) -> None:
        """Absorb one item."""

    def add_many(self, values) -> None:
        for v in values.tolist() if hasattr(values, "tolist") else values:
            self.add(v)

    def end_chunk(self) -> None:
        """Hook invoked by the harness when a data chunk is exhausted."""

    def finalize(self) -> None:
        """Hook invoked once building and merging are complete."""

    # -- merge ------------------------------------------------------------
    def merge(self, other: "Summary") -> "Summary":
        self._check_live()
        other._check_live()
        if type(self) is not type(other):
            raise MergeError(
                f"cannot merge {type(self).__name__} with {type(other).__name__}"
            )
        self._merge_impl(other)
        other._consumed = True
        return self

    @abstractmethod
    def _merge_impl(self, other: "Summary") -> None: ...

    # -- query ------------------------------------------------------------
    @abstractmethod
    def query(self, phi: float) -> int:
        """Estimate of the phi-quantile."""

    def _check_query(self, phi: float) -> None:
        self._check_live()
        if not 0.0 < phi < 1.0:
            raise QueryError(f"phi must be in (0, 1), got {phi}")
        if self.n < 1:
            raise QueryError("cannot query an empty summary")

    # -- descriptor / wire ------------------------------------------------
    def describe(self) -> SummaryDescriptor:
        return SummaryDescriptor(self.algo, self.epsilon, self.n, self._params())

    def _params(self) -> dict[str, Any]:
        return {}

    def serialize(self) -> bytes:
        self._check_live()
        header = WIRE_MAGIC + struct.pack(
            "<BBdQ", WIRE_VERSION, int(self.algo), self.epsilon, self.n
        )
        return header + self._write_payload()

    @abstractmethod
    def _write_payload(self) -> bytes: ...

    @classmethod
    @abstractmethod
    def _read_payload(cls, reader: Reader, epsilon: float, n: int) -> "Summary": ...


_REGISTRY: dict[Algo, type[Summary]] = {}


def register(algo: Algo, cls: type[Summary]) -> None:
    _REGISTRY[algo] = cls


def serialized_size(summary: Summary) -> int:
    return len(summary.serialize())


def deserialize(data: bytes) -> Summary:
    """Reconstruct a summary from its wire blob."""
    reader = Reader(data)
    magic = reader.take_bytes(4)
    if magic != WIRE_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    (version,) = reader.take("<B")
    if version != WIRE_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (algo_tag,) = reader.take("<B")
    try:
        algo = Algo(algo_tag)
    except ValueError:
        raise FormatError(f"unknown algorithm tag {algo_tag}", 5) from None
    epsilon, n = reader.take("<dQ")
    if not 0.0 < epsilon < 1.0:
        raise FormatError(f"epsilon {epsilon} out of range", 6)
    cls = _REGISTRY.get(algo)
    if cls is None:
        raise FormatError(f"no implementation registered for {algo.name}", 5)
    summary = cls._read_payload(reader, epsilon, n)
    reader.expect_end()
    return summary

"""Core domain types: events, vocabulary, windowed frequency vectors, labels."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

OOV_NAME = "OOV"


@dataclass(frozen=True, order=True)
class SyscallEvent:
    session_id: int
    timestamp_ns: int
    syscall: str


@dataclass(frozen=True)
class LabelSpan:
    """Ground-truth attack interval ``[start_ns, end_ns)`` within one session."""

    session_id: int
    start_ns: int
    end_ns: int
    kind: str

    def __post_init__(self):
        if not self.start_ns < self.end_ns:
            from .errors import InvalidSpan
            raise InvalidSpan(f"span start {self.start_ns} >= end {self.end_ns}")

    def overlaps(self, lo: int, hi: int) -> bool:
        return self.start_ns < hi and lo < self.end_ns


class SyscallVocabulary:
    """Frozen name -> dimension map with a trailing out-of-vocabulary slot."""

    def __init__(self, names: Iterable[str]):
        self._names = tuple(names)
        self._index = {name: i for i, name in enumerate(self._names)}
        if len(self._index) != len(self._names):
            raise ValueError("vocabulary names must be distinct")

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def oov_index(self) -> int:
        return len(self._names)

    @property
    def dim(self) -> int:
        return len(self._names) + 1

    def lookup(self, name: str) -> int:
        return self._index.get(name, len(self._names))

    def __contains__(self, name):
        return name in self._index

    def __len__(self):
        return self.dim

    def __eq__(self, other):
        return isinstance(other, SyscallVocabulary) and self._names == other._names

    def __hash__(self):
        return hash(self._names)

    def __repr__(self):
        return f"SyscallVocabulary({list(self._names)!r})"

    def column_names(self) -> list[str]:
        return list(self._names) + [OOV_NAME]

    def digest(self) -> str:
        """Stable hash binding models to the exact name ordering."""
        h = hashlib.sha256()
        for name in self._names:
            h.update(name.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()[:16]


def build_vocabulary(training_events: Iterable[SyscallEvent]) -> SyscallVocabulary:
    """Sorted distinct syscall names seen in training; OOV slot appended."""
    return SyscallVocabulary(sorted({ev.syscall for ev in training_events}))


@dataclass(frozen=True)
class FrequencyVector:
    counts: np.ndarray
    window_index: int
    session_id: int


@dataclass
class WindowedSeries:
    """All windows of a trace, stored column-wise.

    Rows are ordered by session, then window index. ``kinds`` holds, for
    every window, the attack kinds whose spans overlap it (empty for
    legitimate windows).
    """

    counts: np.ndarray
    session_ids: np.ndarray
    window_index: np.ndarray
    labels: np.ndarray
    interval_ns: int
    vocabulary: SyscallVocabulary
    kinds: list[tuple[str, ...]] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.counts)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(n, self.vocabulary.dim)
        self.session_ids = np.asarray(self.session_ids, dtype=np.int64)
        self.window_index = np.asarray(self.window_index, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=bool)
        if not self.kinds:
            self.kinds = [()] * n
        if not (len(self.session_ids) == len(self.window_index) == len(self.labels) == len(self.kinds) == n):
            raise ValueError("WindowedSeries columns differ in length")

    def __len__(self):
        return len(self.counts)

    @property
    def dim(self) -> int:
        return self.vocabulary.dim

    @property
    def vectors(self) -> list[FrequencyVector]:
        return [FrequencyVector(c, int(t), int(s))
                for c, t, s in zip(self.counts, self.window_index, self.session_ids)]

    def sessions(self) -> list[int]:
        return sorted(set(self.session_ids.tolist()))

    def session_slices(self) -> list[tuple[int, slice]]:
        """(session_id, row slice) pairs; rows of a session are contiguous."""
        out = []
        if len(self) == 0:
            return out
        change = np.flatnonzero(np.diff(self.session_ids)) + 1
        starts = np.concatenate([[0], change])
        ends = np.concatenate([change, [len(self)]])
        for a, b in zip(starts, ends):
            out.append((int(self.session_ids[a]), slice(int(a), int(b))))
        return out

    def subset(self, mask: Sequence[bool] | np.ndarray) -> "WindowedSeries":
        mask = np.asarray(mask, dtype=bool)
        return WindowedSeries(
            counts=self.counts[mask],
            session_ids=self.session_ids[mask],
            window_index=self.window_index[mask],
            labels=self.labels[mask],
            interval_ns=self.interval_ns,
            vocabulary=self.vocabulary,
            kinds=[k for k, m in zip(self.kinds, mask) if m],
        )

    def legit_only(self) -> "WindowedSeries":
        return self.subset(~self.labels)

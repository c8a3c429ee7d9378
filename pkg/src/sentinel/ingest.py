"""Trace/label parsing, windowing, feature scaling and inverse-frequency weights."""

from __future__ import annotations

import io
import os
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (DimensionMismatch, EmptyInput, InsufficientData, InvalidSpan,
                     MalformedLine, NonMonotoneTimestamp)
from .trace import LabelSpan, SyscallEvent, SyscallVocabulary, WindowedSeries

TRACE_HEADER = ("session_id", "timestamp_ns", "syscall")
LABEL_HEADER = ("session_id", "start_ns", "end_ns", "kind")

NS_PER_SECOND = 1_000_000_000
DEFAULT_INTERVAL_NS = NS_PER_SECOND
INTERVAL_CHOICES = {"100ms": 100_000_000, "500ms": 500_000_000, "1s": NS_PER_SECOND, "2s": 2 * NS_PER_SECOND}

_SYSCALL_RE = re.compile(r"[A-Za-z0-9_]+\Z")
_INT_RE = re.compile(r"[0-9]+\Z")
_KIND_RE = re.compile(r"[A-Za-z0-9_.\-]+\Z")
_DURATION_RE = re.compile(r"([0-9]+(?:\.[0-9]+)?)\s*(ns|us|ms|s|m|min|h)?\Z")
_UNITS = {"ns": 1, "us": 1_000, "ms": 1_000_000, "s": NS_PER_SECOND, None: NS_PER_SECOND,
          "m": 60 * NS_PER_SECOND, "min": 60 * NS_PER_SECOND, "h": 3600 * NS_PER_SECOND}


def parse_duration(text: str) -> int:
    """'300s', '1.5s', '100ms', '20m' -> nanoseconds. A bare number means seconds."""
    m = _DURATION_RE.match(str(text).strip())
    if not m:
        raise ValueError(f"bad duration {text!r}")
    value, unit = m.groups()
    ns = round(float(value) * _UNITS[unit])
    return int(ns)


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    if isinstance(source, os.PathLike):
        with open(source, "rb") as fh:
            return fh.read().decode("utf-8")
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _lines(text: str):
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if line.strip():
            yield lineno, line


def _int_field(value: str, lineno: int, name: str) -> int:
    value = value.strip()
    if not _INT_RE.match(value):
        raise MalformedLine(lineno, f"{name} must be a non-negative decimal integer, got {value!r}")
    return int(value)


def parse_trace(source) -> list[SyscallEvent]:
    """Parse a trace CSV (``session_id,timestamp_ns,syscall``).

    ``source`` may be bytes, str, an open file or a path. The result is
    grouped by session (ascending session id) with every session in
    timestamp order. Timestamps within a session must be non-decreasing in
    file order; a decrease is reported with its line number.
    """
    text = _read_text(source)
    rows = _lines(text)
    first = next(rows, None)
    if first is None:
        raise EmptyInput("trace input is empty")
    if tuple(c.strip() for c in first[1].split(",")) != TRACE_HEADER:
        rows = _chain_first(first, rows)

    last_ts: dict[int, int] = {}
    by_session: dict[int, list[SyscallEvent]] = {}
    for lineno, line in rows:
        parts = line.split(",")
        if len(parts) != 3:
            raise MalformedLine(lineno, f"expected 3 fields, got {len(parts)}")
        sid = _int_field(parts[0], lineno, "session_id")
        ts = _int_field(parts[1], lineno, "timestamp_ns")
        name = parts[2].strip()
        if not _SYSCALL_RE.match(name):
            raise MalformedLine(lineno, f"bad syscall name {name!r}")
        prev = last_ts.get(sid)
        if prev is not None and ts < prev:
            raise NonMonotoneTimestamp(lineno, f"session {sid}: timestamp {ts} < previous {prev}")
        last_ts[sid] = ts
        by_session.setdefault(sid, []).append(SyscallEvent(sid, ts, name))

    events = []
    for sid in sorted(by_session):
        events.extend(by_session[sid])
    return events


def parse_labels(source) -> list[LabelSpan]:
    """Parse a label CSV (``session_id,start_ns,end_ns,kind``). Empty input -> []."""
    text = _read_text(source)
    rows = _lines(text)
    first = next(rows, None)
    if first is None:
        return []
    if tuple(c.strip() for c in first[1].split(",")) != LABEL_HEADER:
        rows = _chain_first(first, rows)
    spans = []
    for lineno, line in rows:
        parts = line.split(",")
        if len(parts) != 4:
            raise MalformedLine(lineno, f"expected 4 fields, got {len(parts)}")
        sid = _int_field(parts[0], lineno, "session_id")
        start = _int_field(parts[1], lineno, "start_ns")
        end = _int_field(parts[2], lineno, "end_ns")
        kind = parts[3].strip()
        if not _KIND_RE.match(kind):
            raise MalformedLine(lineno, f"bad attack kind {kind!r}")
        if start >= end:
            raise InvalidSpan(f"line {lineno}: start {start} >= end {end}")
        spans.append(LabelSpan(sid, start, end, kind))
    return spans


def _chain_first(first, rest):
    yield first
    yield from rest


def format_trace(events: Iterable[SyscallEvent]) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRACE_HEADER) + "\n")
    for ev in events:
        buf.write(f"{ev.session_id},{ev.timestamp_ns},{ev.syscall}\n")
    return buf.getvalue()


def format_labels(spans: Iterable[LabelSpan]) -> str:
    buf = io.StringIO()
    buf.write(",".join(LABEL_HEADER) + "\n")
    for sp in spans:
        buf.write(f"{sp.session_id},{sp.start_ns},{sp.end_ns},{sp.kind}\n")
    return buf.getvalue()


def windowize(events: Sequence[SyscallEvent], vocab: SyscallVocabulary, interval_ns: int,
              spans: Sequence[LabelSpan] = ()) -> WindowedSeries:
    """Bucket each session's events into consecutive fixed-length windows.

    Window ``t`` of a session covers ``[t*interval, (t+1)*interval)``; a
    session with last timestamp ``L`` gets ``L // interval + 1`` windows so
    every event lands in exactly one window. Empty windows are all zeros.
    A window is attack-labeled iff it overlaps a span of its own session.
    """
    if interval_ns <= 0:
        raise ValueError("interval_ns must be positive")
    d = vocab.dim
    by_session: dict[int, list[SyscallEvent]] = {}
    for ev in events:
        by_session.setdefault(ev.session_id, []).append(ev)
    spans_by_session: dict[int, list[LabelSpan]] = {}
    for sp in spans:
        spans_by_session.setdefault(sp.session_id, []).append(sp)

    counts, sids, tidx, labels, kinds = [], [], [], [], []
    for sid in sorted(by_session):
        evs = by_session[sid]
        ts = np.fromiter((e.timestamp_ns for e in evs), dtype=np.int64, count=len(evs))
        dims = np.fromiter((vocab.lookup(e.syscall) for e in evs), dtype=np.int64, count=len(evs))
        n_windows = int(ts.max()) // interval_ns + 1
        block = np.zeros((n_windows, d), dtype=np.int64)
        np.add.at(block, (ts // interval_ns, dims), 1)
        counts.append(block)
        sids.append(np.full(n_windows, sid, dtype=np.int64))
        tidx.append(np.arange(n_windows, dtype=np.int64))
        sess_spans = spans_by_session.get(sid, [])
        lab = np.zeros(n_windows, dtype=bool)
        knd = [()] * n_windows
        for sp in sess_spans:
            lo = sp.start_ns // interval_ns
            hi = min(n_windows, -(-sp.end_ns // interval_ns))
            for t in range(max(lo, 0), hi):
                lab[t] = True
                if sp.kind not in knd[t]:
                    knd[t] = knd[t] + (sp.kind,)
        labels.append(lab)
        kinds.extend(knd)

    if counts:
        return WindowedSeries(np.concatenate(counts), np.concatenate(sids), np.concatenate(tidx),
                              np.concatenate(labels), interval_ns, vocab, kinds)
    return WindowedSeries(np.zeros((0, d), dtype=np.int64), [], [], [], interval_ns, vocab, [])


def format_windows(series: WindowedSeries) -> str:
    """Debug dump: ``session_id,window_index,label,<names...>,OOV``."""
    buf = io.StringIO()
    buf.write(",".join(["session_id", "window_index", "label"] + series.vocabulary.column_names()) + "\n")
    for sid, t, lab, row in zip(series.session_ids, series.window_index, series.labels, series.counts):
        buf.write(f"{sid},{t},{int(lab)}," + ",".join(str(int(c)) for c in row) + "\n")
    return buf.getvalue()


SCALER_KINDS = ("none", "standardize", "minmax")
_FLOOR = 1e-8


@dataclass(frozen=True)
class Scaler:
    kind: str
    offset: np.ndarray
    scale: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.offset):
            raise DimensionMismatch(f"expected {len(self.offset)} features, got {X.shape[-1]}")
        if self.kind == "none":
            return X.copy()
        return (X - self.offset) / self.scale

    def invert(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        if self.kind == "none":
            return Z.copy()
        return Z * self.scale + self.offset

    def to_arrays(self, prefix: str) -> dict:
        return {f"{prefix}offset": self.offset, f"{prefix}scale": self.scale}

    @classmethod
    def from_arrays(cls, kind: str, arrays: dict, prefix: str) -> "Scaler":
        return cls(kind, np.asarray(arrays[f"{prefix}offset"]), np.asarray(arrays[f"{prefix}scale"]))


def fit_scaler(training, kind: str = "standardize") -> Scaler:
    """Fit per-dimension scaling on training windows (a series or an n x d array)."""
    X = training.counts if isinstance(training, WindowedSeries) else training
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("training data must be 2-D")
    if kind not in SCALER_KINDS:
        raise ValueError(f"unknown scaler kind {kind!r}")
    n, d = X.shape
    if kind == "none":
        return Scaler(kind, np.zeros(d), np.ones(d))
    if kind == "standardize":
        if n < 2:
            raise InsufficientData("standardize needs at least 2 training windows")
        return Scaler(kind, X.mean(axis=0), np.maximum(X.std(axis=0), _FLOOR))
    if n < 1:
        raise InsufficientData("minmax needs at least 1 training window")
    lo = X.min(axis=0)
    return Scaler(kind, lo, np.maximum(X.max(axis=0) - lo, _FLOOR))


def apply_scaler(scaler: Scaler, series) -> np.ndarray:
    X = series.counts if isinstance(series, WindowedSeries) else series
    return scaler.apply(X)


@dataclass(frozen=True)
class IdfWeights:
    weights: np.ndarray
    num_training_windows: int

    def __len__(self):
        return len(self.weights)


def idf_formula(n_windows: int, doc_freq) -> np.ndarray:
    """Smoothed log inverse document frequency, windows as documents."""
    doc_freq = np.asarray(doc_freq, dtype=np.float64)
    return np.log((1.0 + n_windows) / (1.0 + doc_freq)) + 1.0


def compute_idf_weights(training) -> IdfWeights:
    X = training.counts if isinstance(training, WindowedSeries) else np.asarray(training)
    n = len(X)
    if n < 1:
        raise InsufficientData("IDF weights need at least one training window")
    doc_freq = (X > 0).sum(axis=0)
    return IdfWeights(idf_formula(n, doc_freq), n)


def uniform_weights(d: int) -> IdfWeights:
    return IdfWeights(np.ones(d), 0)


def interval_label(interval_ns: int) -> str:
    for label, ns in INTERVAL_CHOICES.items():
        if ns == interval_ns:
            return label
    if interval_ns % NS_PER_SECOND == 0:
        return f"{interval_ns // NS_PER_SECOND}s"
    return f"{interval_ns}ns"

"""Deterministic synthetic syscall traces with labeled attack bursts.

Legitimate traffic is a semi-Markov walk over *actions*. An action is a
fixed syscall script (segments of repeated call patterns, each call
separated by a uniformly jittered gap); between actions the application
idles for a uniformly drawn think time.

Attacks come in two modes:

``frequency-shift``
    a burst with its own syscall mix is spliced into the trace, changing
    per-window counts.
``order-shuffle``
    the whole windows of an existing segment are permuted. Every window's
    count vector survives unchanged, only their order is broken, so a
    per-window model cannot see it.

All randomness comes from numpy's PCG64 bit generator, seeded explicitly;
identical (profile, seed, arguments) give identical events.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .errors import SpanOutOfRange
from .ingest import NS_PER_SECOND
from .trace import LabelSpan, SyscallEvent

ATTACK_KINDS = (
    "checkcontainer", "ecryptfs_creds", "enum_configs", "enum_network", "enum_protections",
    "enum_psk", "enum_system", "enum_users_history", "enum_xchat", "env",
    "gnome_commander_creds", "hashdump", "mount_cifs_creds", "pptpd_chap_secrets", "tor_hiddenservices",
)
ATTACK_MODES = ("frequency-shift", "order-shuffle")

MS = 1_000_000


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# -- profiles ----------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    calls: tuple[str, ...]
    repeat: int
    gap_ns: tuple[int, int]


@dataclass(frozen=True)
class ActionTemplate:
    name: str
    segments: tuple[Segment, ...]

    def expand(self) -> tuple[list[str], np.ndarray, np.ndarray]:
        """Flat call list with per-call gap bounds (low, high) in ns."""
        names, lo, hi = [], [], []
        for seg in self.segments:
            for _ in range(seg.repeat):
                for call in seg.calls:
                    names.append(call)
                    lo.append(seg.gap_ns[0])
                    hi.append(seg.gap_ns[1])
        return names, np.asarray(lo, dtype=np.int64), np.asarray(hi, dtype=np.int64)


@dataclass(frozen=True)
class WorkloadProfile:
    name: str
    syscalls: tuple[str, ...]
    actions: tuple[ActionTemplate, ...]
    transitions: np.ndarray
    think_time_ns: tuple[int, int] = (1 * NS_PER_SECOND, 5 * NS_PER_SECOND)
    seed: int = 0
    initial: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        k = len(self.actions)
        if P.shape != (k, k):
            raise ValueError(f"transition matrix must be {k}x{k}, got {P.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("transition rows must be non-negative and sum to 1")
        lo, hi = self.think_time_ns
        if not 0 < lo <= hi:
            raise ValueError("think-time bounds must satisfy 0 < low <= high")
        for act in self.actions:
            for seg in act.segments:
                if not 0 < seg.gap_ns[0] <= seg.gap_ns[1]:
                    raise ValueError(f"action {act.name}: jitter bounds must satisfy 0 < low <= high")
                if seg.repeat < 0 or not seg.calls:
                    raise ValueError(f"action {act.name}: bad segment")
        object.__setattr__(self, "transitions", P)
        if self.initial is not None:
            init = np.asarray(self.initial, dtype=np.float64)
            if init.shape != (k,) or abs(init.sum() - 1.0) > 1e-9:
                raise ValueError("initial distribution must have one entry per action and sum to 1")
            object.__setattr__(self, "initial", init)

    def stationary(self) -> np.ndarray:
        """Stationary distribution of the action chain."""
        P = self.transitions
        k = len(P)
        A = np.vstack([P.T - np.eye(k), np.ones(k)])
        rhs = np.concatenate([np.zeros(k), [1.0]])
        pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        return pi

    def with_seed(self, seed: int) -> "WorkloadProfile":
        return WorkloadProfile(self.name, self.syscalls, self.actions, self.transitions,
                               self.think_time_ns, seed, self.initial)


def _seconds_to_ns(value) -> int:
    return int(round(float(value) * NS_PER_SECOND))


def profile_from_dict(cfg: dict) -> WorkloadProfile:
    """Build a profile from its config mapping (see ``DEFAULT_PROFILE``)."""
    actions = []
    for act in cfg["actions"]:
        segs = []
        for seg in act["segments"]:
            lo, hi = seg.get("gap_ms", [10, 10])
            segs.append(Segment(tuple(seg["calls"]), int(seg.get("repeat", 1)),
                                (int(round(lo * MS)), int(round(hi * MS)))))
        actions.append(ActionTemplate(act["name"], tuple(segs)))
    names = [a.name for a in actions]
    trans = cfg["transitions"]
    if isinstance(trans, dict):
        P = np.zeros((len(names), len(names)))
        for src, row in trans.items():
            for dst, prob in row.items():
                P[names.index(src), names.index(dst)] = prob
    else:
        P = np.asarray(trans, dtype=np.float64)
    lo, hi = cfg.get("think_time_s", [1.0, 5.0])
    declared = tuple(cfg.get("syscalls", ()))
    used = sorted({c for a in actions for s in a.segments for c in s.calls})
    syscalls = declared or tuple(used)
    missing = set(used) - set(syscalls)
    if missing:
        raise ValueError(f"actions use syscalls missing from the profile: {sorted(missing)}")
    initial = cfg.get("initial")
    if isinstance(initial, dict):
        initial = [initial.get(n, 0.0) for n in names]
    return WorkloadProfile(cfg.get("name", "custom"), syscalls, tuple(actions), P,
                           (_seconds_to_ns(lo), _seconds_to_ns(hi)), int(cfg.get("seed", 0)),
                           None if initial is None else np.asarray(initial, dtype=np.float64))


def load_profile(name_or_path) -> WorkloadProfile:
    """``default`` (built in) or a path to a YAML profile file."""
    if str(name_or_path) in BUILTIN_PROFILES:
        return profile_from_dict(copy.deepcopy(BUILTIN_PROFILES[str(name_or_path)]))
    with open(Path(name_or_path), encoding="utf-8") as fh:
        return profile_from_dict(yaml.safe_load(fh))


# Thirty common Linux syscalls. A web-application stand-in: five
# request-handling actions, each a few seconds of distinct phases, plus a
# rarely visited maintenance action that is the only source of several
# calls (so those calls are rare in training windows).
DEFAULT_SYSCALLS = [
    "accept", "access", "brk", "clock_gettime", "close", "connect", "epoll_wait", "fcntl",
    "fstat", "futex", "getdents", "ioctl", "lseek", "lstat", "mmap", "mprotect", "munmap",
    "open", "openat", "pipe", "poll", "read", "recvfrom", "rt_sigaction", "sched_yield",
    "select", "sendto", "socket", "stat", "write",
]

DEFAULT_PROFILE = {
    "name": "default",
    "seed": 0,
    "think_time_s": [1.0, 5.0],
    "syscalls": DEFAULT_SYSCALLS,
    "actions": [
        {"name": "page_view", "segments": [
            {"calls": ["accept", "recvfrom", "epoll_wait"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["openat", "fstat", "read", "close"], "repeat": 25, "gap_ms": [8, 12]},
            {"calls": ["mmap", "brk", "munmap"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["sendto", "write", "clock_gettime"], "repeat": 30, "gap_ms": [9, 13]},
        ]},
        {"name": "search", "segments": [
            {"calls": ["accept", "recvfrom", "epoll_wait"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["connect", "sendto", "poll"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["futex", "poll", "recvfrom", "futex"], "repeat": 25, "gap_ms": [8, 12]},
            {"calls": ["read", "lseek"], "repeat": 45, "gap_ms": [9, 13]},
            {"calls": ["sendto", "write", "clock_gettime"], "repeat": 30, "gap_ms": [9, 13]},
        ]},
        {"name": "form_submit", "segments": [
            {"calls": ["accept", "recvfrom", "epoll_wait"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["recvfrom", "read"], "repeat": 45, "gap_ms": [9, 13]},
            {"calls": ["futex", "stat", "access"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["open", "write", "fcntl", "close"], "repeat": 25, "gap_ms": [8, 12]},
            {"calls": ["sendto", "write", "clock_gettime"], "repeat": 30, "gap_ms": [9, 13]},
        ]},
        {"name": "login", "segments": [
            {"calls": ["accept", "recvfrom", "epoll_wait"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["futex", "mprotect", "stat"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["open", "read", "close"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["sendto", "write", "clock_gettime"], "repeat": 30, "gap_ms": [9, 13]},
        ]},
        {"name": "upload", "segments": [
            {"calls": ["accept", "recvfrom", "epoll_wait"], "repeat": 30, "gap_ms": [9, 13]},
            {"calls": ["recvfrom", "write"], "repeat": 45, "gap_ms": [9, 13]},
            {"calls": ["recvfrom", "write"], "repeat": 45, "gap_ms": [9, 13]},
            {"calls": ["fstat", "lseek", "fcntl", "close"], "repeat": 25, "gap_ms": [8, 12]},
            {"calls": ["sendto", "write", "clock_gettime"], "repeat": 30, "gap_ms": [9, 13]},
        ]},
        {"name": "maintenance", "segments": [
            {"calls": ["getdents", "lstat", "stat"], "repeat": 20, "gap_ms": [12, 18]},
            {"calls": ["pipe", "select", "rt_sigaction", "ioctl", "socket", "sched_yield"], "repeat": 6, "gap_ms": [20, 30]},
        ]},
    ],
    "transitions": {
        "page_view": {"page_view": 0.2, "search": 0.35, "form_submit": 0.15, "login": 0.05, "upload": 0.2, "maintenance": 0.05},
        "search": {"page_view": 0.5, "search": 0.1, "form_submit": 0.2, "upload": 0.15, "maintenance": 0.05},
        "form_submit": {"page_view": 0.6, "search": 0.2, "upload": 0.15, "maintenance": 0.05},
        "login": {"page_view": 0.7, "search": 0.2, "upload": 0.1},
        "upload": {"page_view": 0.5, "search": 0.2, "form_submit": 0.2, "login": 0.05, "maintenance": 0.05},
        "maintenance": {"page_view": 0.4, "search": 0.3, "form_submit": 0.1, "login": 0.2},
    },
    "initial": {"login": 1.0},
}

BUILTIN_PROFILES = {"default": DEFAULT_PROFILE}


# -- attack profiles ---------------------------------------------------------

# Post-exploitation scripts spawn shells (execve/clone/wait4, unseen during
# training) and walk files; all of them lean on fcntl/close.
_KIND_MIX = {
    "checkcontainer": {"openat": 3, "read": 3, "stat": 2},
    "ecryptfs_creds": {"getdents": 3, "openat": 2, "lstat": 2},
    "enum_configs": {"openat": 3, "read": 3, "fstat": 2},
    "enum_network": {"socket": 3, "ioctl": 3, "openat": 2, "read": 2},
    "enum_protections": {"stat": 3, "access": 3, "getdents": 2},
    "enum_psk": {"getdents": 3, "openat": 2, "read": 2},
    "enum_system": {"getdents": 3, "openat": 3, "read": 2, "stat": 2},
    "enum_users_history": {"openat": 3, "read": 3, "lstat": 2},
    "enum_xchat": {"getdents": 2, "openat": 2, "read": 2},
    "env": {"read": 3, "write": 2, "brk": 1},
    "gnome_commander_creds": {"openat": 2, "read": 2, "access": 2},
    "hashdump": {"openat": 3, "read": 3, "lseek": 2},
    "mount_cifs_creds": {"openat": 2, "read": 3, "stat": 1},
    "pptpd_chap_secrets": {"openat": 2, "read": 3, "access": 1},
    "tor_hiddenservices": {"getdents": 2, "openat": 2, "read": 2, "lstat": 1},
}
_SHELL_MIX = {"fcntl": 6, "close": 5, "execve": 1, "clone": 1, "wait4": 1}


@dataclass(frozen=True)
class AttackProfile:
    kind: str
    mode: str
    mix: dict = field(default_factory=dict)       # frequency-shift: syscall -> relative weight
    rate_hz: float = 150.0                        # frequency-shift: mean calls per second
    duration_ns: tuple[int, int] = (10 * NS_PER_SECOND, 10 * NS_PER_SECOND)
    block_ns: int = NS_PER_SECOND                 # order-shuffle: permuted block length

    def __post_init__(self):
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"unknown attack mode {self.mode!r}")
        if self.mode == "frequency-shift" and (not self.mix or self.rate_hz <= 0):
            raise ValueError("frequency-shift needs a non-empty mix and a positive rate")
        lo, hi = self.duration_ns
        if not 0 < lo <= hi:
            raise ValueError("duration bounds must satisfy 0 < low <= high")


def attack_profile(kind: str, mode: str, duration_ns: int | tuple[int, int] = 10 * NS_PER_SECOND,
                   rate_hz: float = 150.0, mix: dict | None = None) -> AttackProfile:
    if isinstance(duration_ns, (int, np.integer)):
        duration_ns = (int(duration_ns), int(duration_ns))
    if mix is None and mode == "frequency-shift":
        mix = {**_SHELL_MIX, **{k: v for k, v in _KIND_MIX.get(kind, {"openat": 2, "read": 2}).items()}}
    return AttackProfile(kind, mode, dict(mix or {}), rate_hz, tuple(duration_ns))


def rare_syscall_attack(kind: str = "enum_system", rate_hz: float = 12.0,
                        duration_ns: int = 10 * NS_PER_SECOND) -> AttackProfile:
    """Low-rate burst made only of calls the default workload uses rarely."""
    mix = {"getdents": 3, "lstat": 3, "pipe": 1, "select": 1, "ioctl": 1, "sched_yield": 1}
    return AttackProfile(kind, "frequency-shift", mix, rate_hz, (duration_ns, duration_ns))


# -- generation --------------------------------------------------------------

@dataclass
class LegitTrace:
    events: list[SyscallEvent]
    actions: list[tuple[int, str]]    # (start_ns, action name)


def simulate_legit(profile: WorkloadProfile, duration_ns: int, session_id: int = 0,
                   seed: int | None = None) -> LegitTrace:
    if duration_ns <= 0:
        raise ValueError("duration must be positive")
    rng = make_rng(profile.seed if seed is None else seed)
    k = len(profile.actions)
    expanded = [a.expand() for a in profile.actions]
    init = profile.initial if profile.initial is not None else profile.stationary()
    init = np.clip(init, 0, None)
    init = init / init.sum()
    lo_think, hi_think = profile.think_time_ns

    ts_chunks, name_chunks, log = [], [], []
    t = 0
    state = None
    while True:
        t += int(rng.integers(lo_think, hi_think + 1))
        if t >= duration_ns:
            break
        state = int(rng.choice(k, p=init if state is None else profile.transitions[state]))
        names, glo, ghi = expanded[state]
        log.append((t, profile.actions[state].name))
        if not names:
            continue
        gaps = rng.integers(glo, ghi + 1)
        gaps[0] = 0
        stamps = t + np.cumsum(gaps)
        ts_chunks.append(stamps)
        name_chunks.extend(names)
        t = int(stamps[-1]) + 1

    if ts_chunks:
        stamps = np.concatenate(ts_chunks)
        keep = stamps < duration_ns
        events = [SyscallEvent(session_id, int(s), n) for s, n, kp in zip(stamps, name_chunks, keep) if kp]
    else:
        events = []
    return LegitTrace(events, log)


def generate_legit(profile: WorkloadProfile, duration_ns: int, session_id: int = 0,
                   seed: int | None = None) -> list[SyscallEvent]:
    """Legitimate events for one session; ``seed`` overrides the profile seed."""
    return simulate_legit(profile, duration_ns, session_id, seed).events


def _derangement_without_runs(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random permutation with no fixed point and no preserved neighbour pair."""
    if n < 2:
        return np.arange(n)
    best = None
    for _ in range(10_000):
        perm = rng.permutation(n)
        bad = int(np.sum(perm == np.arange(n))) + int(np.sum(np.diff(perm) == 1))
        if bad == 0:
            return perm
        if best is None or bad < best[0]:
            best = (bad, perm)
    return best[1]


def inject_attack(events: Sequence[SyscallEvent], attack: AttackProfile, at_ns: int, seed: int,
                  session_id: int | None = None, trace_end_ns: int | None = None,
                  duration_ns: int | None = None) -> tuple[list[SyscallEvent], LabelSpan]:
    """Insert one attack into a session's events; returns (events', span).

    ``trace_end_ns`` bounds the session (default: last event + 1). The
    span must fit inside ``[0, trace_end_ns)``. Order-shuffle spans are
    snapped to whole blocks.
    """
    rng = make_rng(seed)
    events = list(events)
    if session_id is None:
        session_id = events[0].session_id if events else 0
    sess = [e for e in events if e.session_id == session_id]
    others = [e for e in events if e.session_id != session_id]
    end_bound = trace_end_ns if trace_end_ns is not None else (sess[-1].timestamp_ns + 1 if sess else 0)
    if duration_ns is None:
        lo, hi = attack.duration_ns
        duration_ns = int(rng.integers(lo, hi + 1))

    if attack.mode == "order-shuffle":
        block = attack.block_ns
        start = (at_ns // block) * block
        n_blocks = max(2, -(-duration_ns // block))
        end = start + n_blocks * block
    else:
        start, end = at_ns, at_ns + duration_ns
    if start < 0 or end > end_bound or start >= end:
        raise SpanOutOfRange(f"attack span [{start}, {end}) outside session range [0, {end_bound})")

    if attack.mode == "frequency-shift":
        n_calls = int(rng.poisson(attack.rate_hz * (end - start) / NS_PER_SECOND))
        names = sorted(attack.mix)
        weights = np.asarray([attack.mix[n] for n in names], dtype=np.float64)
        picks = rng.choice(len(names), size=n_calls, p=weights / weights.sum())
        stamps = np.sort(rng.integers(start, end, size=n_calls))
        injected = [SyscallEvent(session_id, int(s), names[p]) for s, p in zip(stamps, picks)]
        merged = sorted(sess + injected, key=lambda e: e.timestamp_ns)
    else:
        perm = _derangement_without_runs(n_blocks, rng)
        # block j's content moves to position where[j]
        where = np.empty(n_blocks, dtype=np.int64)
        where[perm] = np.arange(n_blocks)
        moved = []
        for e in sess:
            if start <= e.timestamp_ns < end:
                j, offset = divmod(e.timestamp_ns - start, block)
                moved.append(SyscallEvent(session_id, int(start + where[j] * block + offset), e.syscall))
            else:
                moved.append(e)
        merged = sorted(moved, key=lambda e: e.timestamp_ns)
    return others + merged, LabelSpan(session_id, int(start), int(end), attack.kind)


@dataclass
class Scenario:
    events: list[SyscallEvent]
    spans: list[LabelSpan]
    duration_ns: int


def generate_scenario(profile: WorkloadProfile, duration_ns: int, seed: int, mode: str | None = None,
                      n_bursts: int = 0, burst_ns: int = 10 * NS_PER_SECOND, kinds: Sequence[str] | None = None,
                      at_ns: Sequence[int] | None = None, session_id: int = 0, rate_hz: float = 150.0,
                      attack: AttackProfile | None = None) -> Scenario:
    """One session of legitimate traffic with attacks placed in it.

    Without explicit ``at_ns`` the trace is cut into ``n_bursts`` equal
    slots and each burst starts at a whole second drawn inside its slot,
    clear of the slot edges.
    """
    legit_seed, attack_seed = (int(s) for s in make_rng(seed).integers(0, 2 ** 63 - 1, size=2))
    events = generate_legit(profile, duration_ns, session_id, seed=legit_seed)
    rng = make_rng(attack_seed)
    spans: list[LabelSpan] = []
    if mode is None and attack is None:
        return Scenario(events, spans, duration_ns)

    if at_ns is None:
        at_ns = []
        slot = duration_ns // max(n_bursts, 1)
        for b in range(n_bursts):
            lo = b * slot + NS_PER_SECOND * 20
            hi = (b + 1) * slot - burst_ns - NS_PER_SECOND * 5
            if hi <= lo:
                lo, hi = b * slot, max(b * slot, (b + 1) * slot - burst_ns)
            sec = int(rng.integers(lo // NS_PER_SECOND, hi // NS_PER_SECOND + 1))
            at_ns.append(sec * NS_PER_SECOND)
    kinds = list(kinds) if kinds else list(ATTACK_KINDS)
    for b, at in enumerate(at_ns):
        kind = kinds[b % len(kinds)]
        prof = attack or attack_profile(kind, mode, burst_ns, rate_hz)
        if attack is not None:
            prof = AttackProfile(kind, attack.mode, attack.mix, attack.rate_hz, attack.duration_ns, attack.block_ns)
        events, span = inject_attack(events, prof, int(at), seed=int(rng.integers(0, 2 ** 63 - 1)),
                                     session_id=session_id, trace_end_ns=duration_ns, duration_ns=burst_ns)
        spans.append(span)
    return Scenario(events, spans, duration_ns)

"""ROC curves, AUC and TPR at fixed FPR, plus per-scenario reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateLabels

DEFAULT_FPR_LIST = (0.01, 0.05, 0.1)
AVERAGED = "averaged"


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray     # score at each point; +inf for the origin
    n_pos: int
    n_neg: int
    area2: int                 # twice the trapezoid area in (pos x neg) count units

    @property
    def auc(self) -> float:
        return self.area2 / (2 * self.n_pos * self.n_neg)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=bool).reshape(-1)
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    if y.all() or not y.any():
        raise DegenerateLabels("ROC needs at least one positive and one negative label")
    return s, y


def roc_curve(scores, labels) -> RocCurve:
    """Threshold sweep from high to low score, one point per distinct score."""
    s, y = _check(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    tp = np.r_[0, tp].astype(np.int64)
    fp = np.r_[0, fp].astype(np.int64)
    n_pos, n_neg = int(tp[-1]), int(fp[-1])
    area2 = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    thresholds = np.r_[np.inf, s[last_of_group]]
    return RocCurve(fp / n_neg, tp / n_pos, thresholds, n_pos, n_neg, area2)


def auc(scores, labels) -> float:
    return roc_curve(scores, labels).auc


def tpr_at_fpr(scores, labels, fpr: float) -> float:
    """TPR of the last ROC point whose FPR does not exceed ``fpr``."""
    if not 0 <= fpr <= 1:
        raise ValueError(f"fpr must lie in [0, 1], got {fpr}")
    curve = roc_curve(scores, labels)
    return curve_tpr_at(curve, fpr)


def curve_tpr_at(curve: RocCurve, fpr: float) -> float:
    # compare in integer counts to avoid float rounding at exact grid values
    fp_counts = np.rint(curve.fpr * curve.n_neg)
    ok = np.flatnonzero(fp_counts <= fpr * curve.n_neg + 1e-9)
    return float(curve.tpr[ok[-1]])


def mann_whitney_auc(scores, labels) -> float:
    """Pair-counting AUC: P(pos > neg) + 1/2 P(pos == neg). O(P*N)."""
    s, y = _check(scores, labels)
    pos, neg = s[y], s[~y]
    diff = pos[:, None] - neg[None, :]
    num2 = 2 * int(np.sum(diff > 0)) + int(np.sum(diff == 0))
    return num2 / (2 * len(pos) * len(neg))


# -- reports -----------------------------------------------------------------

@dataclass
class DetectorResult:
    detector: str
    scenario: str
    curve: RocCurve
    tpr_at: dict[float, float]

    @property
    def auc(self) -> float:
        return self.curve.auc


@dataclass
class EvalReport:
    fpr_list: tuple[float, ...] = DEFAULT_FPR_LIST
    results: list[DetectorResult] = field(default_factory=list)
    unscored: dict[str, int] = field(default_factory=dict)

    def scenarios(self) -> list[str]:
        seen = []
        for r in self.results:
            if r.scenario not in seen:
                seen.append(r.scenario)
        return seen

    def for_scenario(self, scenario: str) -> list[DetectorResult]:
        return [r for r in self.results if r.scenario == scenario]

    def get(self, scenario: str, detector: str) -> DetectorResult:
        for r in self.results:
            if r.scenario == scenario and r.detector == detector:
                return r
        raise KeyError((scenario, detector))

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "detector", "auc"] + [f"tpr@{_fmt_rate(f)}" for f in self.fpr_list]
                   + ["n_attack", "n_legit"])
        for r in self.results:
            w.writerow([r.scenario, r.detector, f"{r.auc:.6f}"]
                       + [f"{r.tpr_at[f]:.6f}" for f in self.fpr_list]
                       + [r.curve.n_pos, r.curve.n_neg])
        return buf.getvalue()

    def roc_csv(self, scenario: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["detector", "fpr", "tpr"])
        for r in self.for_scenario(scenario):
            for x, y in r.curve.points():
                w.writerow([r.detector, f"{x:.6f}", f"{y:.6f}"])
        return buf.getvalue()


def _fmt_rate(f: float) -> str:
    return f"{f:g}"


@dataclass
class ScoredWindows:
    """Scores of one detector over a window set, aligned with labels/kinds."""

    detector: str
    scores: np.ndarray                 # NaN = unscored
    labels: np.ndarray
    kinds: list[tuple[str, ...]]


def evaluate(scored: Sequence[ScoredWindows], fpr_list: Sequence[float] = DEFAULT_FPR_LIST,
             scenarios: Sequence[str] | None = None, strict_intersection: bool = False) -> EvalReport:
    """Per-scenario ROC/AUC for every detector.

    Scenario ``k`` compares windows attacked by kind ``k`` against all
    legitimate windows; the ``averaged`` scenario pools every window.
    Unscored windows (NaN) are dropped per detector, or, with
    ``strict_intersection``, dropped for all detectors alike.
    """
    report = EvalReport(tuple(fpr_list))
    if not scored:
        return report
    n = len(scored[0].labels)
    common = np.ones(n, dtype=bool)
    for sw in scored:
        common &= ~np.isnan(sw.scores)
    kinds = scored[0].kinds
    labels = np.asarray(scored[0].labels, dtype=bool)
    all_kinds = sorted({k for ks in kinds for k in ks})
    if scenarios:
        all_kinds = [k for k in all_kinds if k in scenarios]
    scenario_masks = [(AVERAGED, np.ones(n, dtype=bool))]
    for k in all_kinds:
        scenario_masks.append((k, ~labels | np.array([k in ks for ks in kinds], dtype=bool)))

    for sw in scored:
        valid = common if strict_intersection else ~np.isnan(sw.scores)
        report.unscored[sw.detector] = int((~valid).sum())
    for name, mask in scenario_masks:
        for sw in scored:
            valid = common if strict_intersection else ~np.isnan(sw.scores)
            sel = mask & valid
            y = labels[sel]
            if y.all() or not y.any():
                raise DegenerateLabels(f"scenario {name}, detector {sw.detector}: single-class windows")
            curve = roc_curve(sw.scores[sel], y)
            report.results.append(DetectorResult(sw.detector, name, curve,
                                                 {f: curve_tpr_at(curve, f) for f in fpr_list}))
    return report


def binomial_auc_tolerance(n_pos: int, n_neg: int, z: float = 3.0) -> float:
    """z-sigma half-width of the AUC of random scores (Hanley-McNeil at 0.5)."""
    return z * math.sqrt((n_pos + n_neg + 1) / (12.0 * n_pos * n_neg))

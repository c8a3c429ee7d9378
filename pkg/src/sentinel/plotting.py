"""matplotlib figures for the report command.

Figures are written straight to files through the Agg backend. SVG output
is made reproducible (fixed hash salt, no date stamp) so that reruns with
the same inputs give the same bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DETECTOR_STYLE = {
    "pca": {"color": "#1f77b4", "linestyle": "--"},
    "ocsvm": {"color": "#2ca02c", "linestyle": "-."},
    "lstm": {"color": "#d62728", "linestyle": "-"},
}

_RC = {
    "svg.hashsalt": "sentinel",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    metadata = {"Date": None} if path.suffix == ".svg" else None
    fig.savefig(path, metadata=metadata)
    plt.close(fig)
    return path


def plot_roc(results, path, title: str = "") -> Path:
    """One ROC polyline per detector on the unit square, AUC in the legend."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot([0, 1], [0, 1], color="0.7", linewidth=0.8, linestyle=":", gid="roc-chance")
        for r in results:
            style = DETECTOR_STYLE.get(r.detector, {})
            ax.plot(r.curve.fpr, r.curve.tpr, drawstyle="default", linewidth=1.6,
                    label=f"{r.detector} (AUC {r.auc:.2f})", gid=f"roc-{r.detector}", **style)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_score_distributions(scores: np.ndarray, labels: np.ndarray, path, detector: str,
                             bins: int = 40) -> Path:
    """Overlaid histograms of legitimate vs attack scores for one detector."""
    ok = ~np.isnan(scores)
    s, y = scores[ok], labels[ok]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        edges = np.histogram_bin_edges(s, bins=bins) if len(s) else bins
        ax.hist(s[~y], bins=edges, alpha=0.6, density=True, label="legitimate", color="#1f77b4")
        if y.any():
            ax.hist(s[y], bins=edges, alpha=0.6, density=True, label="attack", color="#d62728")
        ax.set_xlabel(f"{detector} anomaly score")
        ax.set_ylabel("density")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_explained_variance(ratios, path, k: int | None = None) -> Path:
    ratios = np.asarray(ratios)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.plot(np.arange(1, len(ratios) + 1), ratios, marker="o", markersize=3, color="#1f77b4")
        if k:
            ax.axvline(k, color="0.5", linestyle=":", linewidth=1)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("number of components")
        ax.set_ylabel("cumulative explained variance")
        fig.tight_layout()
        return _save(fig, path)

"""Density-estimation PCA: a low-rank-plus-isotropic Gaussian over windows.

The retained directions keep their sample variances; every discarded
direction shares one noise variance, the mean of the discarded
eigenvalues. The anomaly score is the negative log-likelihood.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import BadRank, DimensionMismatch, EigenFailure, InsufficientData
from .ingest import Scaler
from .serialize import load_container, save_container

log = logging.getLogger(__name__)

DEFAULT_K = 20
SIGMA2_FLOOR = 1e-9
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PcaDensityModel:
    mean: np.ndarray
    components: np.ndarray      # d x k, orthonormal columns
    eigenvalues: np.ndarray     # all d covariance eigenvalues, descending
    k: int
    sigma2: float
    scaler: Scaler | None = None
    vocab_hash: str = ""

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def retained_variances(self) -> np.ndarray:
        # floored so a degenerate retained direction cannot make the density improper
        return np.maximum(self.eigenvalues[: self.k], self.sigma2)

    def covariance(self) -> np.ndarray:
        """Dense model covariance ``W diag(lam - s2) W^T + s2 I``."""
        W = self.components
        return W @ np.diag(self.retained_variances - self.sigma2) @ W.T + self.sigma2 * np.eye(self.dim)

    def log_likelihood(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} features, got {X.shape[1]}")
        centered = X - self.mean
        proj = centered @ self.components
        lam = self.retained_variances
        resid = np.maximum((centered ** 2).sum(axis=1) - (proj ** 2).sum(axis=1), 0.0)
        maha = (proj ** 2 / lam).sum(axis=1) + resid / self.sigma2
        logdet = np.log(lam).sum() + (self.dim - self.k) * np.log(self.sigma2)
        return -0.5 * (self.dim * _LOG_2PI + logdet + maha)

    def score(self, X) -> np.ndarray:
        """Negative log-likelihood of scaled windows; higher is more anomalous."""
        return -self.log_likelihood(X)

    def score_counts(self, counts) -> np.ndarray:
        Z = self.scaler.apply(counts) if self.scaler is not None else np.asarray(counts, dtype=np.float64)
        return self.score(Z)

    def reconstruction_error(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        centered = X - self.mean
        recon = centered @ self.components @ self.components.T
        return ((centered - recon) ** 2).sum(axis=1)

    def save(self, path) -> None:
        meta = {"k": self.k, "sigma2": self.sigma2, "vocab_hash": self.vocab_hash,
                "scaler_kind": self.scaler.kind if self.scaler else None}
        arrays = {"mean": self.mean, "components": self.components, "eigenvalues": self.eigenvalues}
        if self.scaler is not None:
            arrays.update(self.scaler.to_arrays("scaler_"))
        save_container(path, "pca", meta, arrays)

    @classmethod
    def load(cls, path) -> "PcaDensityModel":
        meta, arrays = load_container(path, "pca")
        scaler = Scaler.from_arrays(meta["scaler_kind"], arrays, "scaler_") if meta["scaler_kind"] else None
        return cls(arrays["mean"], arrays["components"], arrays["eigenvalues"], int(meta["k"]),
                   float(meta["sigma2"]), scaler, meta["vocab_hash"])


def _sorted_eigh(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        vals, vecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(vecs))):
        raise EigenFailure("eigendecomposition produced non-finite values")
    order = np.argsort(vals, kind="stable")[::-1]
    vals = np.maximum(vals[order], 0.0)
    vecs = vecs[:, order]
    # sign convention: largest-magnitude entry of each eigenvector is positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals, vecs * signs


def fit_pca(X, k: int = DEFAULT_K, scaler: Scaler | None = None, vocab_hash: str = "") -> PcaDensityModel:
    """Fit the Gaussian to ``X`` (n x d, already scaled)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("X must be 2-D")
    n, d = X.shape
    if n < 2:
        raise InsufficientData(f"PCA needs at least 2 training windows, got {n}")
    if not 1 <= k <= d:
        raise BadRank(f"k={k} outside [1, {d}]")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    vals, vecs = _sorted_eigh(cov)
    sigma2 = float(vals[k:].mean()) if k < d else 0.0
    sigma2 = max(sigma2, SIGMA2_FLOOR)
    return PcaDensityModel(mean, vecs[:, :k].copy(), vals, int(k), sigma2, scaler, vocab_hash)


def effective_k(requested: int, d: int) -> int:
    """Clamp the requested rank below the feature dimension when needed."""
    if requested >= d:
        k = max(1, d - 1)
        log.warning("pca k=%d clamped to %d (feature dimension %d)", requested, k, d)
        return k
    return requested


def pca_score(model: PcaDensityModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) != model.dim:
        raise DimensionMismatch(f"expected a vector of length {model.dim}")
    return float(model.score(x[None, :])[0])


def explained_variance(model: PcaDensityModel) -> np.ndarray:
    """Cumulative explained-variance ratios over all d eigenvalues."""
    vals = model.eigenvalues
    total = vals.sum()
    if total <= 0:
        return np.ones(len(vals))
    ratios = np.cumsum(vals) / total
    ratios[-1] = 1.0
    return np.minimum(ratios, 1.0)

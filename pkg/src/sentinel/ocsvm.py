"""One-class SVM (nu formulation, RBF kernel) trained by SMO.

Dual problem solved here::

    min_a  1/2 a^T K a    s.t.  0 <= a_i <= 1/(nu n),  sum_i a_i = 1

Decision value ``f(x) = sum_i a_i K(x_i, x) - rho``; the anomaly score is
``-f(x)``, positive outside the learned region.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InsufficientData, NonConvergence
from .ingest import Scaler
from .serialize import load_container, save_container

log = logging.getLogger(__name__)

DEFAULT_NU = 0.05
KKT_TOL = 1e-4
MAX_PAIR_UPDATES = 1_000_000
CACHE_BYTES = 64 * 1024 * 1024
_TAU = 1e-12


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    sq = (A ** 2).sum(axis=1)[:, None] + (B ** 2).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def scale_gamma(X) -> float:
    X = np.asarray(X, dtype=np.float64)
    return 1.0 / (X.shape[1] * max(float(X.var(axis=0).mean()), 1e-8))


class _KernelRows:
    """Kernel matrix access: fully precomputed if it fits the cache budget,
    otherwise an LRU cache of rows."""

    def __init__(self, X, gamma, cache_bytes=CACHE_BYTES):
        self.X = X
        self.gamma = gamma
        n = len(X)
        self.full = None
        if n * n * 8 <= cache_bytes:
            self.full = rbf_kernel(X, X, gamma)
        self.max_rows = max(2, cache_bytes // (8 * n))
        self.rows: OrderedDict[int, np.ndarray] = OrderedDict()

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        r = self.rows.get(i)
        if r is None:
            r = rbf_kernel(self.X[i], self.X, self.gamma)[0]
            self.rows[i] = r
            if len(self.rows) > self.max_rows:
                self.rows.popitem(last=False)
        else:
            self.rows.move_to_end(i)
        return r


@dataclass(frozen=True)
class OcsvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    gamma: float
    nu: float
    scaler: Scaler | None = None
    vocab_hash: str = ""
    n_iter: int = 0

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} features, got {X.shape[1]}")
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.alphas - self.rho

    def score(self, X) -> np.ndarray:
        return -self.decision_function(X)

    def score_counts(self, counts) -> np.ndarray:
        Z = self.scaler.apply(counts) if self.scaler is not None else np.asarray(counts, dtype=np.float64)
        return self.score(Z)

    def save(self, path) -> None:
        meta = {"rho": self.rho, "gamma": self.gamma, "nu": self.nu, "vocab_hash": self.vocab_hash,
                "n_iter": self.n_iter, "scaler_kind": self.scaler.kind if self.scaler else None}
        arrays = {"support_vectors": self.support_vectors, "alphas": self.alphas}
        if self.scaler is not None:
            arrays.update(self.scaler.to_arrays("scaler_"))
        save_container(path, "ocsvm", meta, arrays)

    @classmethod
    def load(cls, path) -> "OcsvmModel":
        meta, arrays = load_container(path, "ocsvm")
        scaler = Scaler.from_arrays(meta["scaler_kind"], arrays, "scaler_") if meta["scaler_kind"] else None
        return cls(arrays["support_vectors"], arrays["alphas"], float(meta["rho"]), float(meta["gamma"]),
                   float(meta["nu"]), scaler, meta["vocab_hash"], int(meta["n_iter"]))


@dataclass
class DualSolution:
    alpha: np.ndarray
    grad: np.ndarray        # K @ alpha
    rho: float
    C: float
    n_iter: int

    def objective(self) -> float:
        return 0.5 * float(self.alpha @ self.grad)


def solve_dual(X, nu: float, gamma: float, tol: float = KKT_TOL, max_iter: int = MAX_PAIR_UPDATES,
               cache_bytes: int = CACHE_BYTES) -> DualSolution:
    """SMO with maximal-violating-pair selection (lowest index wins ties)."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    C = 1.0 / (nu * n)
    kern = _KernelRows(X, gamma, cache_bytes)

    # feasible start: the first floor(nu n) points at the upper bound
    alpha = np.zeros(n)
    n_full = min(int(nu * n), n)
    alpha[:n_full] = C
    if n_full < n:
        alpha[n_full] = 1.0 - C * n_full
    alpha = np.clip(alpha, 0.0, C)

    grad = np.zeros(n)
    for i in np.flatnonzero(alpha):
        grad += alpha[i] * kern.row(i)
    diag = np.ones(n)  # RBF: K(x, x) = 1

    n_iter = 0
    while True:
        up = alpha < C
        low = alpha > 0
        g_up = np.where(up, grad, np.inf)
        g_low = np.where(low, grad, -np.inf)
        i = int(np.argmin(g_up))
        j = int(np.argmax(g_low))
        if g_low[j] - g_up[i] <= tol:
            break
        if n_iter >= max_iter:
            raise NonConvergence(f"SMO did not reach tolerance {tol} in {max_iter} pair updates")
        Ki, Kj = kern.row(i), kern.row(j)
        eta = max(diag[i] + diag[j] - 2.0 * Ki[j], _TAU)
        step = (grad[j] - grad[i]) / eta
        step = min(step, C - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        # snap to bounds to keep the index sets exact
        if C - alpha[i] < 1e-15 * C:
            alpha[i] = C
        if alpha[j] < 1e-15 * C:
            alpha[j] = 0.0
        grad += step * (Ki - Kj)
        n_iter += 1

    # Any rho in [max G over a=C, min G over a<C] (widened by tol) satisfies
    # KKT. Taking the low end puts every a<C point at f >= 0, so only
    # bound points can be training outliers and their count is <= nu n.
    below = alpha < C
    rho = float(grad[below].min()) if below.any() else float(grad.max())
    return DualSolution(alpha, grad, rho, C, n_iter)


def kkt_residuals(sol: DualSolution) -> np.ndarray:
    """Per-point violation of the optimality conditions of the dual."""
    a, g, rho, C = sol.alpha, sol.grad, sol.rho, sol.C
    res = np.zeros(len(a))
    below = a < C
    above = a > 0
    res[below] = np.maximum(res[below], rho - g[below])
    res[above] = np.maximum(res[above], g[above] - rho)
    return res


def fit_ocsvm(X, nu: float = DEFAULT_NU, gamma="scale", scaler: Scaler | None = None, vocab_hash: str = "",
              tol: float = KKT_TOL, max_iter: int = MAX_PAIR_UPDATES, cache_bytes: int = CACHE_BYTES) -> OcsvmModel:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("X must be 2-D")
    n = len(X)
    if n < 2:
        raise InsufficientData(f"OCSVM needs at least 2 training windows, got {n}")
    if not 0 < nu <= 1:
        raise ValueError(f"nu must be in (0, 1], got {nu}")
    g = scale_gamma(X) if gamma == "scale" else float(gamma)
    if g <= 0:
        raise ValueError("gamma must be positive")
    sol = solve_dual(X, nu, g, tol=tol, max_iter=max_iter, cache_bytes=cache_bytes)
    sv_tol = 1e-12 * sol.C
    sv = sol.alpha > sv_tol
    log.debug("ocsvm: %d pair updates, %d support vectors", sol.n_iter, int(sv.sum()))
    return OcsvmModel(X[sv].copy(), sol.alpha[sv].copy(), sol.rho, g, float(nu), scaler, vocab_hash, sol.n_iter)


def ocsvm_score(model: OcsvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) != model.dim:
        raise DimensionMismatch(f"expected a vector of length {model.dim}")
    return float(model.score(x[None, :])[0])

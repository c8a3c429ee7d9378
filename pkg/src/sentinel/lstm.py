"""Single-layer LSTM next-window predictor with inverse-frequency distance.

The network reads the previous ``delta`` scaled frequency vectors and
predicts the next one through a dense head on the last hidden state. A
window's anomaly score is the IDF-weighted Euclidean distance, in raw
count units, between the prediction and the observed window.

Everything is plain numpy in float64; gate order in the stacked weight
matrices is input, forget, cell, output.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, InsufficientData, TrainingDiverged
from .ingest import IdfWeights, Scaler, compute_idf_weights, fit_scaler
from .serialize import load_container, save_container
from .trace import WindowedSeries

log = logging.getLogger(__name__)

DEFAULT_FPR_TARGET = 0.01
CLIP_NORM = 5.0
PARAM_NAMES = ("W", "U", "b", "V", "c")


@dataclass(frozen=True)
class LstmHyperparams:
    hidden_units: int = 100
    delta: int = 15
    batch_size: int = 128
    epochs: int = 150
    validation_split: float = 0.20
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    clip_norm: float = CLIP_NORM

    def __post_init__(self):
        for name in ("hidden_units", "delta", "batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.validation_split < 1:
            raise ValueError("validation_split must lie in (0, 1)")
        if self.learning_rate <= 0 or self.adam_eps <= 0:
            raise ValueError("learning_rate and adam_eps must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")


PROFILES = {
    "paper": LstmHyperparams(),
    "test": LstmHyperparams(hidden_units=16, epochs=40, batch_size=32),
}


def hyperparams_for(profile: str, **overrides) -> LstmHyperparams:
    if profile not in PROFILES:
        raise ValueError(f"unknown hyper-parameter profile {profile!r} (choose from {sorted(PROFILES)})")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(PROFILES[profile], **overrides)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def init_params(d: int, h: int, rng: np.random.Generator) -> dict:
    bound = 1.0 / math.sqrt(h)
    b = np.zeros(4 * h)
    b[h:2 * h] = 1.0
    return {
        "W": rng.uniform(-bound, bound, size=(4 * h, d)),
        "U": rng.uniform(-bound, bound, size=(4 * h, h)),
        "b": b,
        "V": rng.uniform(-bound, bound, size=(d, h)),
        "c": np.zeros(d),
    }


def forward(params: dict, X: np.ndarray, keep_cache: bool = False):
    """Run the recurrence over ``X`` (batch, steps, d) from zero state.

    Returns the dense-head prediction (batch, d), plus the per-step cache
    needed for backpropagation when ``keep_cache`` is set.
    """
    W, U, b, V, c = (params[k] for k in PARAM_NAMES)
    B, steps, _ = X.shape
    h = U.shape[1]
    hs = np.zeros((B, h))
    cs = np.zeros((B, h))
    cache = []
    for t in range(steps):
        z = X[:, t, :] @ W.T + hs @ U.T + b
        i = _sigmoid(z[:, :h])
        f = _sigmoid(z[:, h:2 * h])
        g = np.tanh(z[:, 2 * h:3 * h])
        o = _sigmoid(z[:, 3 * h:])
        c_prev, h_prev = cs, hs
        cs = f * c_prev + i * g
        tc = np.tanh(cs)
        hs = o * tc
        if keep_cache:
            cache.append((X[:, t, :], h_prev, c_prev, i, f, g, o, tc))
    y = hs @ V.T + c
    if keep_cache:
        return y, (cache, hs)
    return y


def mse_loss(y: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((y - target) ** 2))


def backward(params: dict, y: np.ndarray, target: np.ndarray, cache) -> dict:
    """Gradients of the mean squared error with respect to every parameter."""
    W, U, V = params["W"], params["U"], params["V"]
    steps_cache, h_last = cache
    h = U.shape[1]
    dy = 2.0 * (y - target) / y.size
    grads = {
        "V": dy.T @ h_last,
        "c": dy.sum(axis=0),
        "W": np.zeros_like(W),
        "U": np.zeros_like(U),
        "b": np.zeros(4 * h),
    }
    dh = dy @ V
    dc = np.zeros_like(dh)
    for x_t, h_prev, c_prev, i, f, g, o, tc in reversed(steps_cache):
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc ** 2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g ** 2),
            do * o * (1.0 - o),
        ], axis=1)
        grads["W"] += dz.T @ x_t
        grads["U"] += dz.T @ h_prev
        grads["b"] += dz.sum(axis=0)
        dh = dz @ U
        dc = dc * f
    return grads


def loss_and_grads(params: dict, X: np.ndarray, target: np.ndarray) -> tuple[float, dict]:
    y, cache = forward(params, X, keep_cache=True)
    return mse_loss(y, target), backward(params, y, target, cache)


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in PARAM_NAMES:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def clip_global_norm(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def weighted_distance(pred, actual, idf) -> np.ndarray | float:
    """sqrt(sum_i w_i (actual_i - pred_i)^2), row-wise for 2-D input."""
    w = idf.weights if isinstance(idf, IdfWeights) else np.asarray(idf, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape or pred.shape[-1] != len(w):
        raise DimensionMismatch(f"shapes {pred.shape}, {actual.shape} and weights ({len(w)},) disagree")
    out = np.sqrt(np.sum(w * (actual - pred) ** 2, axis=-1))
    return float(out) if out.ndim == 0 else out


def quantile_threshold(distances, p: float) -> float:
    """Upper order statistic at rank ceil((1-p)(m-1)); exceedance is <= p."""
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    d = np.asarray(distances, dtype=np.float64)
    d = d[np.isfinite(d)]
    if len(d) == 0:
        raise InsufficientData("no distances to calibrate a threshold on")
    return float(np.quantile(d, 1.0 - p, method="higher"))


def sequence_index(series: WindowedSeries, delta: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows usable as prediction targets and the start row of their history.

    A target needs ``delta`` preceding windows of the same session with
    consecutive window indices; sequences never cross sessions or gaps.
    """
    targets, starts = [], []
    for _, sl in series.session_slices():
        idx = series.window_index[sl]
        run_start = 0
        for k in range(1, len(idx) + 1):
            if k == len(idx) or idx[k] != idx[k - 1] + 1:
                lo, hi = sl.start + run_start, sl.start + k
                for t in range(lo + delta, hi):
                    targets.append(t)
                    starts.append(t - delta)
                run_start = k
    return np.asarray(targets, dtype=np.int64), np.asarray(starts, dtype=np.int64)


def _stack_sequences(Z: np.ndarray, starts: np.ndarray, delta: int) -> np.ndarray:
    if len(starts) == 0:
        return np.zeros((0, delta, Z.shape[1]))
    return Z[starts[:, None] + np.arange(delta)[None, :]]


@dataclass
class LstmPredictor:
    params: dict
    scaler: Scaler
    idf: IdfWeights
    hyperparams: LstmHyperparams
    threshold: float = float("nan")
    vocab_hash: str = ""
    history: dict = field(default_factory=lambda: {"loss": [], "val_loss": []})

    @property
    def dim(self) -> int:
        return self.params["W"].shape[1]

    @property
    def hidden_units(self) -> int:
        return self.params["U"].shape[1]

    def predict_scaled(self, seqs: np.ndarray) -> np.ndarray:
        seqs = np.asarray(seqs, dtype=np.float64)
        if seqs.ndim == 2:
            seqs = seqs[None]
        if seqs.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} features, got {seqs.shape[-1]}")
        if len(seqs) == 0:
            return np.zeros((0, self.dim))
        return forward(self.params, seqs)

    def distances(self, series: WindowedSeries, idf: IdfWeights | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(target rows, distances) for every scoreable window of ``series``."""
        delta = self.hyperparams.delta
        targets, starts = sequence_index(series, delta)
        Z = self.scaler.apply(series.counts)
        pred = self.scaler.invert(self.predict_scaled(_stack_sequences(Z, starts, delta)))
        actual = series.counts[targets].astype(np.float64)
        return targets, weighted_distance(pred, actual, idf or self.idf).reshape(-1)

    def save(self, path) -> None:
        meta = {"threshold": self.threshold, "vocab_hash": self.vocab_hash,
                "hyperparams": asdict(self.hyperparams), "scaler_kind": self.scaler.kind,
                "idf_n": self.idf.num_training_windows, "history": self.history}
        arrays = {f"param_{k}": v for k, v in self.params.items()}
        arrays.update(self.scaler.to_arrays("scaler_"))
        arrays["idf"] = self.idf.weights
        save_container(path, "lstm", meta, arrays)

    @classmethod
    def load(cls, path) -> "LstmPredictor":
        meta, arrays = load_container(path, "lstm")
        params = {k: arrays[f"param_{k}"] for k in PARAM_NAMES}
        return cls(params, Scaler.from_arrays(meta["scaler_kind"], arrays, "scaler_"),
                   IdfWeights(arrays["idf"], int(meta["idf_n"])), LstmHyperparams(**meta["hyperparams"]),
                   float(meta["threshold"]), meta["vocab_hash"], meta["history"])


def lstm_forward(model: LstmPredictor, seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape != (model.hyperparams.delta, model.dim):
        raise DimensionMismatch(f"expected a ({model.hyperparams.delta}, {model.dim}) sequence, got {seq.shape}")
    return model.predict_scaled(seq[None])[0]


def train_lstm(series: WindowedSeries, hp: LstmHyperparams = LstmHyperparams(), fpr_target: float | None = DEFAULT_FPR_TARGET,
               vocab_hash: str = "", scaler: Scaler | None = None, idf: IdfWeights | None = None) -> LstmPredictor:
    """Fit on legitimate windows and calibrate the threshold on the
    chronologically last ``validation_split`` share of the sequences."""
    targets, starts = sequence_index(series, hp.delta)
    if len(targets) < 2:
        raise InsufficientData(f"need at least 2 full sequences of {hp.delta + 1} windows, got {len(targets)}")
    scaler = scaler or fit_scaler(series, "minmax")
    idf = idf or compute_idf_weights(series)
    Z = scaler.apply(series.counts)
    seqs = _stack_sequences(Z, starts, hp.delta)
    ys = Z[targets]

    n_val = min(max(1, int(round(len(targets) * hp.validation_split))), len(targets) - 1)
    n_train = len(targets) - n_val
    X_tr, y_tr = seqs[:n_train], ys[:n_train]
    X_val, y_val = seqs[n_train:], ys[n_train:]

    rng = np.random.default_rng(hp.seed)
    params = init_params(series.dim, hp.hidden_units, rng)
    opt = Adam(params, hp.learning_rate, hp.adam_beta1, hp.adam_beta2, hp.adam_eps)
    history = {"loss": [], "val_loss": []}
    for epoch in range(hp.epochs):
        order = rng.permutation(n_train)
        total = 0.0
        for lo in range(0, n_train, hp.batch_size):
            batch = order[lo:lo + hp.batch_size]
            loss, grads = loss_and_grads(params, X_tr[batch], y_tr[batch])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} in epoch {epoch + 1}")
            clip_global_norm(grads, hp.clip_norm)
            opt.step(params, grads)
            total += loss * len(batch)
        val_loss = mse_loss(forward(params, X_val), y_val)
        history["loss"].append(total / n_train)
        history["val_loss"].append(val_loss)
        if not math.isfinite(val_loss):
            raise TrainingDiverged(f"validation loss became {val_loss} in epoch {epoch + 1}")
        log.debug("epoch %d: loss %.6g val_loss %.6g", epoch + 1, total / n_train, val_loss)
    if not all(np.all(np.isfinite(v)) for v in params.values()):
        raise TrainingDiverged("non-finite weights after training")

    model = LstmPredictor(params, scaler, idf, hp, vocab_hash=vocab_hash, history=history)
    if fpr_target is not None:
        pred = scaler.invert(forward(params, X_val))
        actual = series.counts[targets[n_train:]].astype(np.float64)
        model.threshold = max(quantile_threshold(weighted_distance(pred, actual, idf).reshape(-1), fpr_target), 1e-12)
    return model


def calibrate_threshold(model: LstmPredictor, legit_validation: WindowedSeries, p: float = DEFAULT_FPR_TARGET) -> float:
    """Set and return the threshold from legitimate validation windows."""
    if legit_validation.labels.any():
        raise ValueError("calibration series must contain only legitimate windows")
    _, dist = model.distances(legit_validation)
    if len(dist) == 0:
        raise InsufficientData("calibration series has no scoreable window")
    model.threshold = max(quantile_threshold(dist, p), 1e-12)
    return model.threshold


@dataclass
class SeriesScores:
    scores: np.ndarray      # NaN where unscored
    flags: np.ndarray
    scored: np.ndarray

    @property
    def n_unscored(self) -> int:
        return int((~self.scored).sum())


def lstm_score_series(model: LstmPredictor, series: WindowedSeries, idf: IdfWeights | None = None) -> SeriesScores:
    targets, dist = model.distances(series, idf)
    scores = np.full(len(series), np.nan)
    scores[targets] = dist
    scored = np.zeros(len(series), dtype=bool)
    scored[targets] = True
    flags = np.zeros(len(series), dtype=bool)
    if math.isfinite(model.threshold):
        flags[targets] = dist > model.threshold
    return SeriesScores(scores, flags, scored)

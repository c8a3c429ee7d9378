"""Fit, persist and apply a per-application set of detectors."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ModelMismatch
from .ingest import compute_idf_weights, fit_scaler
from .lstm import LstmHyperparams, LstmPredictor, lstm_score_series, train_lstm
from .ocsvm import DEFAULT_NU, OcsvmModel, fit_ocsvm
from .pca import DEFAULT_K, PcaDensityModel, effective_k, fit_pca
from .trace import SyscallVocabulary, WindowedSeries

log = logging.getLogger(__name__)

DETECTORS = ("pca", "ocsvm", "lstm")
MODEL_FILES = {"pca": "pca.model", "ocsvm": "ocsvm.model", "lstm": "lstm.model"}
MANIFEST = "manifest.json"
SCORES_HEADER = ("session_id", "window_index", "label", "detector", "score", "flag")


@dataclass
class TrainSettings:
    detectors: tuple[str, ...] = DETECTORS
    pca_k: int = DEFAULT_K
    nu: float = DEFAULT_NU
    gamma: float | str = "scale"
    lstm: LstmHyperparams = field(default_factory=LstmHyperparams)
    fpr_target: float = 0.01
    profile: str = "paper"


@dataclass
class ModelSet:
    vocabulary: SyscallVocabulary
    interval_ns: int
    models: dict
    settings: TrainSettings | None = None

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, model in self.models.items():
            model.save(out / MODEL_FILES[name])
        s = self.settings or TrainSettings()
        manifest = {
            "format_version": 1,
            "vocabulary": list(self.vocabulary.names),
            "vocab_hash": self.vocabulary.digest(),
            "interval_ns": self.interval_ns,
            "detectors": [d for d in DETECTORS if d in self.models],
            "files": {d: MODEL_FILES[d] for d in DETECTORS if d in self.models},
            "hyperparameters": {
                "profile": s.profile,
                "pca_k": self.models["pca"].k if "pca" in self.models else s.pca_k,
                "nu": s.nu,
                "gamma": self.models["ocsvm"].gamma if "ocsvm" in self.models else s.gamma,
                "lstm": asdict(s.lstm),
                "fpr_target": s.fpr_target,
            },
            "seeds": {"lstm": s.lstm.seed},
        }
        if "lstm" in self.models:
            manifest["lstm_threshold"] = self.models["lstm"].threshold
        path = out / MANIFEST
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, model_dir) -> "ModelSet":
        d = Path(model_dir)
        try:
            manifest = json.loads((d / MANIFEST).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ModelMismatch(f"no {MANIFEST} in {d}") from exc
        vocab = SyscallVocabulary(manifest["vocabulary"])
        if vocab.digest() != manifest["vocab_hash"]:
            raise ModelMismatch("manifest vocabulary does not match its hash")
        loaders = {"pca": PcaDensityModel.load, "ocsvm": OcsvmModel.load, "lstm": LstmPredictor.load}
        models = {}
        for name in manifest["detectors"]:
            model = loaders[name](d / manifest["files"][name])
            if model.vocab_hash != manifest["vocab_hash"]:
                raise ModelMismatch(f"{name} model was trained on a different vocabulary")
            models[name] = model
        return cls(vocab, int(manifest["interval_ns"]), models)


def train_models(series: WindowedSeries, settings: TrainSettings) -> ModelSet:
    """Fit the selected detectors on legitimate windows."""
    if series.labels.any():
        raise DataError("training windows include attack-labeled windows")
    if len(series) == 0:
        raise DataError("no training windows")
    vhash = series.vocabulary.digest()
    models = {}
    if "pca" in settings.detectors or "ocsvm" in settings.detectors:
        std = fit_scaler(series, "standardize")
        X = std.apply(series.counts)
        if "pca" in settings.detectors:
            k = effective_k(settings.pca_k, series.dim)
            models["pca"] = fit_pca(X, k, std, vhash)
        if "ocsvm" in settings.detectors:
            models["ocsvm"] = fit_ocsvm(X, settings.nu, settings.gamma, std, vhash)
    if "lstm" in settings.detectors:
        models["lstm"] = train_lstm(series, settings.lstm, settings.fpr_target, vhash,
                                    scaler=fit_scaler(series, "minmax"), idf=compute_idf_weights(series))
    return ModelSet(series.vocabulary, series.interval_ns, models, settings)


@dataclass
class DetectorScores:
    scores: np.ndarray            # NaN = unscored
    flags: np.ndarray | None      # only the LSTM has a calibrated threshold


def score_models(models: ModelSet, series: WindowedSeries) -> dict[str, DetectorScores]:
    if series.vocabulary != models.vocabulary:
        raise ModelMismatch("series was windowed with a different vocabulary")
    if series.interval_ns != models.interval_ns:
        raise ModelMismatch(f"series interval {series.interval_ns} ns != model interval {models.interval_ns} ns")
    out = {}
    for name in DETECTORS:
        model = models.models.get(name)
        if model is None:
            continue
        if name == "lstm":
            res = lstm_score_series(model, series)
            if res.n_unscored:
                log.warning("lstm: %d window(s) without %d windows of history are unscored",
                            res.n_unscored, model.hyperparams.delta)
            out[name] = DetectorScores(res.scores, res.flags)
        else:
            out[name] = DetectorScores(model.score_counts(series.counts), None)
    return out


def format_scores(series: WindowedSeries, scores: dict[str, DetectorScores]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORES_HEADER)
    for name in DETECTORS:
        if name not in scores:
            continue
        ds = scores[name]
        for row in range(len(series)):
            s = ds.scores[row]
            score = "" if math.isnan(s) else repr(float(s))
            if ds.flags is None or math.isnan(s):
                flag = ""
            else:
                flag = str(int(ds.flags[row]))
            w.writerow([int(series.session_ids[row]), int(series.window_index[row]),
                        int(series.labels[row]), name, score, flag])
    return buf.getvalue()


@dataclass
class ScoreTable:
    """Parsed scores.csv: one score column per detector over a shared window set."""

    keys: list[tuple[int, int]]
    labels: np.ndarray
    scores: dict[str, np.ndarray]


def parse_scores(text: str) -> ScoreTable:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != SCORES_HEADER:
        raise DataError(f"scores file must start with header {','.join(SCORES_HEADER)}")
    keys: list[tuple[int, int]] = []
    index: dict[tuple[int, int], int] = {}
    labels: list[bool] = []
    raw: dict[str, dict[int, float]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(SCORES_HEADER):
            raise DataError(f"scores line {lineno}: expected {len(SCORES_HEADER)} fields")
        try:
            key = (int(row[0]), int(row[1]))
            lab = bool(int(row[2]))
            score = float(row[4]) if row[4] != "" else math.nan
        except ValueError as exc:
            raise DataError(f"scores line {lineno}: {exc}") from exc
        if key not in index:
            index[key] = len(keys)
            keys.append(key)
            labels.append(lab)
        raw.setdefault(row[3], {})[index[key]] = score
    n = len(keys)
    scores = {}
    for det, vals in raw.items():
        arr = np.full(n, np.nan)
        for i, v in vals.items():
            arr[i] = v
        scores[det] = arr
    return ScoreTable(keys, np.asarray(labels, dtype=bool), scores)

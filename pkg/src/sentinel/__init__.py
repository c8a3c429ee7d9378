"""Learn per-application system-call profiles and flag exploit-like windows."""

__version__ = "0.1.0"

from .evaluation import auc, roc_curve, tpr_at_fpr
from .ingest import (IdfWeights, Scaler, apply_scaler, compute_idf_weights, fit_scaler, parse_labels,
                     parse_trace, windowize)
from .lstm import (LstmHyperparams, LstmPredictor, calibrate_threshold, lstm_forward, lstm_score_series,
                   train_lstm, weighted_distance)
from .ocsvm import OcsvmModel, fit_ocsvm, ocsvm_score
from .pca import PcaDensityModel, explained_variance, fit_pca, pca_score
from .trace import (FrequencyVector, LabelSpan, SyscallEvent, SyscallVocabulary, WindowedSeries,
                    build_vocabulary)
from .workload import AttackProfile, WorkloadProfile, generate_legit, inject_attack

__all__ = [
    "AttackProfile", "FrequencyVector", "IdfWeights", "LabelSpan", "LstmHyperparams", "LstmPredictor",
    "OcsvmModel", "PcaDensityModel", "Scaler", "SyscallEvent", "SyscallVocabulary", "WindowedSeries",
    "WorkloadProfile", "apply_scaler", "auc", "build_vocabulary", "calibrate_threshold",
    "compute_idf_weights", "explained_variance", "fit_ocsvm", "fit_pca", "fit_scaler", "generate_legit",
    "inject_attack", "lstm_forward", "lstm_score_series", "ocsvm_score", "parse_labels", "parse_trace",
    "pca_score", "roc_curve", "tpr_at_fpr", "train_lstm", "weighted_distance", "windowize",
]

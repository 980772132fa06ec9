"""The four binary classifiers and a kind-based dispatch layer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..features import fit_normalizer
from .base import KINDS, SCHEMA_VERSION, Prediction, TrainedModel, as_matrix, encode_labels
from .knn import knn_predict, knn_train, knn_votes, minkowski
from .mahalanobis import mahalanobis_predict, mahalanobis_sq, mahalanobis_train
from .mlp import mlp_gradient, mlp_loss, mlp_predict, mlp_proba, mlp_train
from .svm import poly_kernel, svm_decision, svm_predict, svm_train


@dataclass(frozen=True)
class ClassifierConfig:
    knn_k: int = 5
    knn_p: float = 3.0
    svm_C: float = 1.0
    svm_tol: float = 1e-3
    svm_degree: int = 3
    svm_coef0: float = 1.0
    svm_max_iter: int = 1_000_000
    mlp_hidden: Tuple[int, int] = (19, 11)
    mlp_lr: float = 0.01
    mlp_momentum: float = 0.9
    mlp_batch_size: int = 32
    mlp_max_epochs: int = 500
    mlp_patience: int = 25
    mahalanobis_ridge: float = 1e-6


def normalize_kind(kind: str) -> str:
    k = str(kind).upper()
    if k not in KINDS:
        raise ValueError(f"unknown classifier {kind!r}; choose from {', '.join(KINDS).lower()}")
    return k


def train_model(kind: str, X, y, class_set: Optional[Sequence[str]] = None,
                cfg: ClassifierConfig = ClassifierConfig(), X_val=None, y_val=None,
                seed: int = 0, normalize: bool = True) -> TrainedModel:
    """Fit a z-score normalizer on ``X`` and train a classifier of ``kind``."""
    kind = normalize_kind(kind)
    X = as_matrix(X)
    nrm = fit_normalizer(X) if normalize else None
    if kind == "KNN":
        return knn_train(X, y, class_set, cfg.knn_k, cfg.knn_p, nrm)
    if kind == "SVM":
        return svm_train(X, y, class_set, cfg.svm_C, cfg.svm_tol, cfg.svm_degree,
                         cfg.svm_coef0, cfg.svm_max_iter, nrm)
    if kind == "MLP":
        return mlp_train(X, y, X_val if X_val is not None else np.zeros((0, X.shape[1])),
                         y_val if y_val is not None else [], class_set, seed,
                         cfg.mlp_hidden, cfg.mlp_lr, cfg.mlp_momentum, cfg.mlp_batch_size,
                         cfg.mlp_max_epochs, cfg.mlp_patience, nrm)
    return mahalanobis_train(X, y, class_set, cfg.mahalanobis_ridge, nrm)


def predict_codes(model: TrainedModel, X) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized prediction: (class codes, scores) for every row of X."""
    X = as_matrix(X)
    if X.shape[0] == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    if model.kind == "KNN":
        return knn_votes(model, X)
    if model.kind == "SVM":
        f = svm_decision(model, X)
        return (f > 0).astype(int), f
    if model.kind == "MLP":
        p = mlp_proba(model, X)
        k = (p[:, 1] > p[:, 0]).astype(int)
        return k, p[np.arange(k.size), k]
    d = mahalanobis_sq(model, X)
    s = d[:, 0] - d[:, 1]
    return (s > 0).astype(int), s


def predict(model: TrainedModel, X) -> List[Prediction]:
    codes, scores = predict_codes(model, X)
    return [Prediction(model.class_set[c], float(s)) for c, s in zip(codes, scores)]


__all__ = [
    "KINDS", "SCHEMA_VERSION", "ClassifierConfig", "Prediction", "TrainedModel",
    "encode_labels", "knn_predict", "knn_train", "mahalanobis_predict", "mahalanobis_train",
    "minkowski", "mlp_gradient", "mlp_loss", "mlp_predict", "mlp_train", "normalize_kind",
    "poly_kernel", "predict", "predict_codes", "svm_predict", "svm_train", "train_model",
]

"""Nearest class mean under a shared (pooled, ridge-regularized) covariance."""
from __future__ import annotations

import numpy as np

from ..errors import InsufficientClassData
from ..features import Normalizer
from .base import Prediction, TrainedModel, as_matrix, encode_labels

RIDGE = 1e-6


def pooled_covariance(Z: np.ndarray, codes: np.ndarray) -> np.ndarray:
    scatter = np.zeros((Z.shape[1], Z.shape[1]))
    for c in (0, 1):
        D = Z[codes == c] - Z[codes == c].mean(axis=0)
        scatter += D.T @ D
    return scatter / (Z.shape[0] - 2)


def mahalanobis_train(X, y, class_set=None, ridge: float = RIDGE,
                      normalizer: Normalizer = None) -> TrainedModel:
    X = as_matrix(X)
    codes, class_set = encode_labels(y, class_set)
    counts = np.bincount(codes, minlength=2)
    if counts.min() < 2:
        raise InsufficientClassData(
            f"class {class_set[int(np.argmin(counts))]!r} has {counts.min()} example(s), need 2")
    normalizer = normalizer or Normalizer.identity(X.shape[1])
    Z = normalizer.apply(X)
    means = np.vstack([Z[codes == c].mean(axis=0) for c in (0, 1)])
    cov = pooled_covariance(Z, codes)
    d = cov.shape[0]
    lam = ridge * np.trace(cov) / d
    if lam <= 0:
        lam = ridge
    inv = np.linalg.inv(cov + lam * np.eye(d))
    inv = 0.5 * (inv + inv.T)
    return TrainedModel("MAHALANOBIS", class_set,
                        {"means": means, "cov_inv": inv, "ridge": float(ridge), "lambda": float(lam)},
                        normalizer)


def mahalanobis_sq(model: TrainedModel, X) -> np.ndarray:
    """Squared distances to each class mean, shape (n, 2)."""
    Z = model.normalizer.apply(as_matrix(X))
    inv = model.params["cov_inv"]
    out = np.empty((Z.shape[0], 2))
    for c, mu in enumerate(model.params["means"]):
        D = Z - mu
        out[:, c] = np.einsum("ij,jk,ik->i", D, inv, D)
    return out


def mahalanobis_predict(model: TrainedModel, v) -> Prediction:
    """Score is d0^2 - d1^2, positive when ``class_set[1]`` is nearer; ties go to class 0."""
    d = mahalanobis_sq(model, v)[0]
    score = float(d[0] - d[1])
    return Prediction(model.class_set[int(score > 0)], score)

"""k-nearest-neighbour classifier with Minkowski distance."""
from __future__ import annotations

import logging

import numpy as np

from ..errors import EmptyTrainSet
from ..features import Normalizer
from .base import Prediction, TrainedModel, as_matrix, encode_labels

log = logging.getLogger(__name__)

K = 5
P = 3.0


def minkowski(X, Y, p: float = P) -> np.ndarray:
    """Pairwise (sum |x_i - y_i|^p)^(1/p) between the rows of X and Y."""
    X, Y = as_matrix(X), as_matrix(Y)
    out = np.empty((X.shape[0], Y.shape[0]))
    step = max(1, 2 ** 22 // max(Y.size, 1))
    for i in range(0, X.shape[0], step):
        diff = np.abs(X[i:i + step, None, :] - Y[None, :, :])
        out[i:i + step] = np.sum(diff ** p, axis=-1) ** (1.0 / p)
    return out


def knn_train(X, y, class_set=None, k: int = K, p: float = P,
              normalizer: Normalizer = None) -> TrainedModel:
    X = as_matrix(X)
    if X.shape[0] == 0:
        raise EmptyTrainSet("k-NN needs at least one training vector")
    codes, class_set = encode_labels(y, class_set, need_both=False)
    if X.shape[0] < k:
        log.warning("k=%d exceeds the %d training vectors; clamped", k, X.shape[0])
    normalizer = normalizer or Normalizer.identity(X.shape[1])
    return TrainedModel("KNN", class_set,
                        {"X": normalizer.apply(X), "y": codes, "k": int(k), "p": float(p)},
                        normalizer, info={"k_clamped": X.shape[0] < k})


def knn_votes(model: TrainedModel, X):
    """Predicted class codes and the vote fraction behind each prediction."""
    Z = model.normalizer.apply(as_matrix(X))
    train, codes = model.params["X"], model.params["y"]
    k = min(model.params["k"], train.shape[0])
    d = minkowski(Z, train, model.params["p"])
    # stable sort: equal distances resolve to the earlier training vector
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    labels = codes[nearest]
    dist = np.take_along_axis(d, nearest, axis=1)
    votes1 = labels.sum(axis=1)
    votes0 = k - votes1
    pred = (votes1 > votes0).astype(int)
    tie = votes1 == votes0
    if tie.any():
        mean0 = np.where(labels == 0, dist, 0).sum(1) / np.maximum(votes0, 1)
        mean1 = np.where(labels == 1, dist, 0).sum(1) / np.maximum(votes1, 1)
        pred = np.where(tie, (mean1 < mean0).astype(int), pred)
    frac = np.where(pred == 1, votes1, votes0) / k
    return pred, frac


def knn_predict(model: TrainedModel, v) -> Prediction:
    """Score is the fraction of the k neighbours voting for the predicted class."""
    pred, frac = knn_votes(model, v)
    return Prediction(model.class_set[pred[0]], float(frac[0]))

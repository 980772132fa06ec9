"""Two-hidden-layer perceptron (tanh, softmax output, cross-entropy loss).

Trained with mini-batch gradient descent plus momentum and early stopping
on a validation set; the best-validation weights are kept.
"""
from __future__ import annotations

import numpy as np

from ..errors import DivergentLoss, EmptyValidationSet
from ..features import Normalizer
from .base import Prediction, TrainedModel, as_matrix, encode_labels

HIDDEN = (19, 11)
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


def init_params(n_in: int, hidden=HIDDEN, n_out: int = 2, seed: int = 0) -> dict:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
    rng = np.random.default_rng(seed)
    sizes = (n_in,) + tuple(hidden) + (n_out,)
    params = {}
    for k in range(len(sizes) - 1):
        bound = 1.0 / np.sqrt(sizes[k])
        params[f"W{k + 1}"] = rng.uniform(-bound, bound, (sizes[k], sizes[k + 1]))
        params[f"b{k + 1}"] = rng.uniform(-bound, bound, sizes[k + 1])
    return params


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(params: dict, Z: np.ndarray):
    h1 = np.tanh(Z @ params["W1"] + params["b1"])
    h2 = np.tanh(h1 @ params["W2"] + params["b2"])
    logits = h2 @ params["W3"] + params["b3"]
    return h1, h2, logits


def _xent(logits: np.ndarray, codes: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(codes.size), codes].mean())


def loss(params: dict, Z, codes) -> float:
    """Mean cross-entropy on already-normalized inputs."""
    return _xent(_forward(params, as_matrix(Z))[2], np.asarray(codes))


def gradient(params: dict, Z, codes) -> dict:
    """Backpropagated gradient of ``loss`` with respect to every parameter."""
    Z, codes = as_matrix(Z), np.asarray(codes)
    n = Z.shape[0]
    h1, h2, logits = _forward(params, Z)
    d3 = softmax(logits)
    d3[np.arange(n), codes] -= 1.0
    d3 /= n
    d2 = (d3 @ params["W3"].T) * (1.0 - h2 ** 2)
    d1 = (d2 @ params["W2"].T) * (1.0 - h1 ** 2)
    return {"W3": h2.T @ d3, "b3": d3.sum(0),
            "W2": h1.T @ d2, "b2": d2.sum(0),
            "W1": Z.T @ d1, "b1": d1.sum(0)}


def mlp_gradient(model: TrainedModel, X, y) -> dict:
    """Gradient of the model's loss on a raw (unnormalized) batch."""
    codes, _ = encode_labels(y, model.class_set, need_both=False)
    return gradient(model.params, model.normalizer.apply(as_matrix(X)), codes)


def mlp_loss(model: TrainedModel, X, y) -> float:
    codes, _ = encode_labels(y, model.class_set, need_both=False)
    return loss(model.params, model.normalizer.apply(as_matrix(X)), codes)


def mlp_train(X, y, X_val, y_val, class_set=None, seed: int = 0, hidden=HIDDEN,
              lr: float = 0.01, momentum: float = 0.9, batch_size: int = 32,
              max_epochs: int = 500, patience: int = 25,
              normalizer: Normalizer = None) -> TrainedModel:
    X = as_matrix(X)
    X_val = np.asarray(X_val, dtype=np.float64)
    if X_val.size == 0:
        raise EmptyValidationSet("MLP training needs a non-empty validation set")
    X_val = as_matrix(X_val)
    codes, class_set = encode_labels(y, class_set)
    val_codes, _ = encode_labels(y_val, class_set, need_both=False)
    normalizer = normalizer or Normalizer.identity(X.shape[1])
    Z, Zv = normalizer.apply(X), normalizer.apply(X_val)

    params = init_params(Z.shape[1], hidden, 2, seed)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    rng = np.random.default_rng([seed, 1])
    best = {k: v.copy() for k, v in params.items()}
    best_val = loss(params, Zv, val_codes)
    best_epoch, stale, epoch = 0, 0, 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(Z.shape[0])
        for i in range(0, order.size, batch_size):
            idx = order[i:i + batch_size]
            g = gradient(params, Z[idx], codes[idx])
            for k in params:
                velocity[k] = momentum * velocity[k] - lr * g[k]
                params[k] = params[k] + velocity[k]
        val = loss(params, Zv, val_codes)
        if not np.isfinite(val):
            raise DivergentLoss(f"validation loss became {val} at epoch {epoch}")
        if val < best_val:
            best_val, best_epoch, stale = val, epoch, 0
            best = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= patience:
                break
    best["activation"] = "tanh"
    best["output"] = "softmax"
    best["hidden"] = list(hidden)
    return TrainedModel("MLP", class_set, best, normalizer,
                        info={"epochs": epoch, "best_epoch": best_epoch,
                              "best_val_loss": best_val})


def mlp_proba(model: TrainedModel, X) -> np.ndarray:
    Z = model.normalizer.apply(as_matrix(X))
    return softmax(_forward(model.params, Z)[2])


def mlp_predict(model: TrainedModel, v) -> Prediction:
    """Score is the posterior of the predicted class."""
    p = mlp_proba(model, v)[0]
    k = int(p[1] > p[0])
    return Prediction(model.class_set[k], float(p[k]))

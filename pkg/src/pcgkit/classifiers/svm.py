"""Soft-margin SVM with a cubic polynomial kernel, trained by SMO.

The dual is solved with maximal-violating-pair working-set selection using
second-order information for the second index, on a precomputed Gram matrix.
Training stops when the KKT gap between the two index sets drops below
``tol``.
"""
from __future__ import annotations

import numpy as np

from ..errors import NonConvergence, SingleClassTrainSet
from ..features import Normalizer
from .base import Prediction, TrainedModel, as_matrix, encode_labels

TAU = 1e-12
MAX_ITER = 1_000_000


def poly_kernel(X, Y, degree: int = 3, gamma: float = None, coef0: float = 1.0) -> np.ndarray:
    """(gamma * x.y + coef0) ** degree, gamma defaulting to 1/d."""
    X, Y = as_matrix(X), as_matrix(Y)
    if gamma is None:
        gamma = 1.0 / X.shape[1]
    return (gamma * (X @ Y.T) + coef0) ** degree


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int = MAX_ITER):
    """Solve min 1/2 a'Qa - sum(a), 0 <= a <= C, y'a = 0 with Q = yy'K.

    Returns (alpha, rho, n_iter); the decision function is
    f(x) = sum_i alpha_i y_i K(x_i, x) - rho.
    """
    n = y.size
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    for it in range(max_iter):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        minus_yG = -y * G
        if not up.any() or not low.any():
            break
        cand = np.where(up, minus_yG, -np.inf)
        i = int(np.argmax(cand))
        g_max = cand[i]
        low_vals = np.where(low, minus_yG, np.inf)
        g_min = low_vals.min()
        if g_max - g_min < tol:
            break
        # second-order choice of j among violating members of the low set
        b = g_max - minus_yG
        viol = low & (b > 0)
        a = QD[i] + QD - 2.0 * y[i] * y * Q[i]
        a = np.where(a > 0, a, TAU)
        obj = np.where(viol, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))

        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Q[i, j]
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Q[i, j]
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[i] * (ai - ai_old) + Q[j] * (aj - aj_old)
    else:
        raise NonConvergence(f"SMO did not reach tol={tol} within {max_iter} pair updates")

    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2)
    return alpha, rho, it


def svm_train(X, y, class_set=None, C: float = 1.0, tol: float = 1e-3, degree: int = 3,
              coef0: float = 1.0, max_iter: int = MAX_ITER,
              normalizer: Normalizer = None) -> TrainedModel:
    X = as_matrix(X)
    codes, class_set = encode_labels(y, class_set)
    if np.unique(codes).size < 2:
        raise SingleClassTrainSet("SVM needs both classes in the training set")
    normalizer = normalizer or Normalizer.identity(X.shape[1])
    Z = normalizer.apply(X)
    gamma = 1.0 / Z.shape[1]
    ypm = np.where(codes == 1, 1.0, -1.0)
    K = poly_kernel(Z, Z, degree, gamma, coef0)
    alpha, rho, n_iter = smo(K, ypm, C, tol, max_iter)
    sv = alpha > 0
    params = {
        "support_vectors": Z[sv],
        "dual_coef": alpha[sv] * ypm[sv],  # alpha_i * y_i
        "alpha": alpha[sv],
        "bias": -rho,
        "C": float(C), "degree": int(degree), "gamma": gamma, "coef0": float(coef0),
        "tol": float(tol),
    }
    return TrainedModel("SVM", class_set, params, normalizer,
                        info={"n_iter": int(n_iter), "n_support": int(sv.sum())})


def svm_decision(model: TrainedModel, X) -> np.ndarray:
    Z = model.normalizer.apply(as_matrix(X))
    p = model.params
    K = poly_kernel(p["support_vectors"], Z, p["degree"], p["gamma"], p["coef0"])
    return p["dual_coef"] @ K + p["bias"]


def svm_predict(model: TrainedModel, v) -> Prediction:
    """Score is the signed margin f(v); positive means ``class_set[1]``."""
    f = float(svm_decision(model, v)[0])
    return Prediction(model.class_set[int(f > 0)], f)

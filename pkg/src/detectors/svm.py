"""
Binary RBF-kernel SVM trained with SMO (maximal violating pair).

Dual: min 1/2 a'Qa - e'a with Q = yy'K, 0 <= a_i <= C, y'a = 0.
Decision: f(x) = sum_i a_i y_i K(x_i, x) + b.
Stops when the max KKT violation m - M drops below ``tol``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from src.exceptions import ConfigError, ConvergenceError, DataError, DimensionError
from src.logger import get_logger

logger = get_logger(__name__)

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 100_000
SUPPORT_EPS = 1e-12


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(a, b, metric="sqeuclidean"))


def default_gamma(x: np.ndarray) -> float:
    """1 / (d * variance of all features)."""
    variance = float(np.var(x))
    d = x.shape[1]
    return 1.0 / (d * variance) if variance > 0 else 1.0 / d


@dataclass
class RbfSvm:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # a_i * y_i
    bias: float
    gamma: float
    C: float
    alphas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residual: float = 0.0
    iterations: int = 0

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.support_vectors.shape[0] == 0:
            return np.full(x.shape[0], self.bias)
        if x.shape[1] != self.support_vectors.shape[1]:
            raise DimensionError(f"SVM expects {self.support_vectors.shape[1]} features, got {x.shape[1]}")
        return rbf_kernel(x, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.where(self.decision(x) >= 0, 1, -1)


def _signed_labels(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y).reshape(-1)
    values = set(np.unique(y).tolist())
    if values <= {-1, 1}:
        signed = y.astype(np.float64)
    elif values <= {0, 1}:
        signed = np.where(y == 1, 1.0, -1.0)
    else:
        raise DataError(f"Binary SVM labels must be in {{-1, +1}} or {{0, 1}}, got {sorted(values)}")
    if not (np.any(signed > 0) and np.any(signed < 0)):
        raise DataError("Binary SVM needs at least one sample on each side")
    return signed


def rbf_svm_fit(x: np.ndarray, y: np.ndarray, gamma: Optional[float] = None, C: float = DEFAULT_C,
                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> RbfSvm:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != np.asarray(y).reshape(-1).shape[0]:
        raise DimensionError(f"SVM inputs {x.shape} do not match {np.asarray(y).size} labels")
    y = _signed_labels(y)
    gamma = default_gamma(x) if gamma is None else float(gamma)
    if not gamma > 0 or not C > 0:
        raise ConfigError(f"SVM needs gamma > 0 and C > 0 (gamma={gamma}, C={C})")

    n = x.shape[0]
    kernel = rbf_kernel(x, x, gamma)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q a - e
    residual = np.inf

    iteration = 0
    while True:
        score = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        j = int(np.flatnonzero(low)[np.argmin(score[low])])
        m, M = score[i], score[j]
        residual = float(m - M)
        if residual < tol:
            break
        if iteration >= max_iter:
            raise ConvergenceError(f"SMO did not converge in {max_iter} iterations", residual,
                                   details={"tol": tol, "n": n})

        a = max(kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j], 1e-12)
        step = residual / a
        step = min(step, C - alpha[i] if y[i] > 0 else alpha[i])
        step = min(step, alpha[j] if y[j] > 0 else C - alpha[j])
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        np.clip(alpha, 0.0, C, out=alpha)
        grad += y * step * (kernel[:, i] - kernel[:, j])
        iteration += 1

    score = -y * grad
    free = (alpha > SUPPORT_EPS) & (alpha < C - SUPPORT_EPS)
    if np.any(free):
        bias = float(score[free].mean())
    else:
        bias = float((m + M) / 2.0)

    support = alpha > SUPPORT_EPS
    logger.debug("SMO converged: n=%d, iterations=%d, residual=%.2e, support vectors=%d", n, iteration, residual,
                 int(support.sum()))
    return RbfSvm(support_vectors=x[support], dual_coef=(alpha * y)[support], bias=bias, gamma=gamma, C=float(C),
                  alphas=alpha, residual=residual, iterations=iteration)

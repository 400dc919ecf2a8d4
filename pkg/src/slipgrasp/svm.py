"""Support vector machines trained by sequential minimal optimization.

Provides:
  linear_kernel / rbf_kernel — Gram matrix computation
  smo_train        — maximal-violating-pair SMO on a precomputed kernel
  dual_objective / kkt_residual — diagnostics on a dual solution
  SvmPairModel     — one trained binary classifier (support vectors, bias)
  PairwiseSVC      — one-vs-one multiclass wrapper with margin tie-break

The dual problem per class pair is

  max_a  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
  s.t.   0 <= a_i <= C,  sum_i a_i y_i = 0

solved by repeatedly picking the maximal violating pair (i, j): i maximizes
y_i g_i among points whose a_i can still grow in the +y_i direction, j
minimizes y_j g_j among points that can shrink, where g is the gradient of
the dual objective. The step size is clipped to the box and the gradient is
maintained incrementally, so each iteration is O(n).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError
from sklearn.base import BaseEstimator, ClassifierMixin


def linear_kernel(X, Y=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    return X @ Y.T


def rbf_kernel(X, Y=None, gamma: float = 1.0) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    sq = (np.sum(X * X, axis=1)[:, None] + np.sum(Y * Y, axis=1)[None, :]
          - 2.0 * X @ Y.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def dual_objective(K, y, alpha) -> float:
    w = alpha * y
    return float(alpha.sum() - 0.5 * w @ K @ w)


def _bounds(y, C):
    """Box bounds for y_i * a_i: A_i <= y_i a_i <= B_i."""
    A = np.where(y > 0, 0.0, -C)
    B = np.where(y > 0, C, 0.0)
    return A, B


def kkt_residual(K, y, alpha, C) -> float:
    """Maximal-violating-pair gap; zero at the exact optimum."""
    g = 1.0 - y * (K @ (alpha * y))
    A, B = _bounds(y, C)
    yg = y * g
    ya = y * alpha
    up = ya < B - 1e-12
    low = ya > A + 1e-12
    if not up.any() or not low.any():
        return 0.0
    return float(max(0.0, yg[up].max() - yg[low].min()))


@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    converged: bool
    objective: float
    objective_history: np.ndarray | None = None


def smo_train(K, y, C: float = 1.0, tol: float = 1e-3,
              max_iter: int = 100_000, track_objective: bool = False
              ) -> SmoResult:
    """Solve the dual on a precomputed kernel matrix K (n x n)."""
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if K.shape != (n, n):
        raise DimensionMismatchError(f"kernel {K.shape} vs {n} labels")
    if C <= 0:
        raise ValueError("C must be positive")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise EmptyInputError("need at least one sample of each class")

    alpha = np.zeros(n)
    g = np.ones(n)              # gradient of the dual objective at alpha=0
    A, B = _bounds(y, C)
    history = [] if track_objective else None

    it = 0
    converged = False
    gap_pair = (0.0, 0.0)
    while it < max_iter:
        ya = y * alpha
        yg = y * g
        up = ya < B - 1e-12
        low = ya > A + 1e-12
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        j = int(np.argmin(np.where(low, yg, np.inf)))
        gap_pair = (yg[i], yg[j])
        if yg[i] - yg[j] < tol:
            converged = True
            break
        eta = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
        lam = min(B[i] - ya[i], ya[j] - A[j], (yg[i] - yg[j]) / eta)
        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        g -= lam * y * (K[i] - K[j])
        it += 1
        if history is not None:
            history.append(dual_objective(K, y, alpha))

    # bias from free support vectors; midpoint of the last violating pair
    # when none are free
    free = (alpha > 1e-9) & (alpha < C - 1e-9)
    if free.any():
        bias = float((y[free] * g[free]).mean())
    else:
        bias = float((gap_pair[0] + gap_pair[1]) / 2.0)
    return SmoResult(
        alpha=alpha, bias=bias, iterations=it, converged=converged,
        objective=dual_objective(K, y, alpha),
        objective_history=np.array(history) if history is not None else None)


@dataclass
class SvmPairModel:
    """One binary decision function f(x) = sum_k w_k K(x_k, x) + b."""
    class_pos: int
    class_neg: int
    support_vectors: np.ndarray
    dual_weights: np.ndarray      # alpha_k * y_k, nonzero entries only
    bias: float
    converged: bool

    def decision(self, X, kernel, gamma) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise DimensionMismatchError(
                f"feature dim {X.shape[1]} != {self.support_vectors.shape[1]}")
        if kernel == "linear":
            K = linear_kernel(X, self.support_vectors)
        else:
            K = rbf_kernel(X, self.support_vectors, gamma)
        return K @ self.dual_weights + self.bias


class PairwiseSVC(BaseEstimator, ClassifierMixin):
    """One-vs-one SVC with from-scratch SMO training.

    Parameters mirror the usual sklearn estimator surface: kernel in
    {"linear", "rbf"}, penalty C, RBF width gamma ("scale" resolves to
    1 / (n_features * X.var())), SMO stopping tolerance and budget.
    """

    def __init__(self, kernel: str = "linear", C: float = 1.0,
                 gamma="scale", tol: float = 1e-3, max_iter: int = 100_000):
        self.kernel = kernel
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def _resolve_gamma(self, X) -> float:
        if self.gamma == "scale":
            var = float(X.var())
            return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        return float(self.gamma)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DimensionMismatchError("X and y disagree on sample count")
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise EmptyInputError("need at least two classes")
        self.gamma_ = self._resolve_gamma(X)
        if self.kernel == "linear":
            gram = linear_kernel(X)
        else:
            gram = rbf_kernel(X, gamma=self.gamma_)

        self.pair_models_ = []
        for p in range(self.classes_.size):
            for q in range(p + 1, self.classes_.size):
                mask = (y == self.classes_[p]) | (y == self.classes_[q])
                idx = np.flatnonzero(mask)
                yy = np.where(y[idx] == self.classes_[p], 1.0, -1.0)
                res = smo_train(gram[np.ix_(idx, idx)], yy, C=self.C,
                                tol=self.tol, max_iter=self.max_iter)
                sv = res.alpha > 1e-9
                self.pair_models_.append(SvmPairModel(
                    class_pos=p, class_neg=q,
                    support_vectors=X[idx][sv].copy(),
                    dual_weights=(res.alpha * yy)[sv],
                    bias=res.bias, converged=res.converged))
        self.converged_ = all(m.converged for m in self.pair_models_)
        return self

    def decision_function(self, X) -> np.ndarray:
        """(n_samples, n_pairs) pairwise decision values."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack(
            [m.decision(X, self.kernel, self.gamma_)
             for m in self.pair_models_], axis=1)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        dec = self.decision_function(X)
        n_cls = self.classes_.size
        votes = np.zeros((X.shape[0], n_cls))
        margins = np.zeros((X.shape[0], n_cls))
        for k, m in enumerate(self.pair_models_):
            pos = dec[:, k] > 0
            votes[pos, m.class_pos] += 1
            votes[~pos, m.class_neg] += 1
            margins[pos, m.class_pos] += np.abs(dec[pos, k])
            margins[~pos, m.class_neg] += np.abs(dec[~pos, k])
        # majority vote; ties go to the class with the larger summed margin
        best = np.zeros(X.shape[0], dtype=int)
        for r in range(X.shape[0]):
            top = np.flatnonzero(votes[r] == votes[r].max())
            best[r] = top[np.argmax(margins[r, top])]
        return self.classes_[best]

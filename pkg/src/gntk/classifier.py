"""Classifiers on precomputed kernels: exact kernel regression and a soft-margin C-SVM (SMO)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve


@dataclass
class KernelPredictor:
    """Linear decision functions over training kernel columns.

    ``decision = gram_cross @ coefficients + bias``; ``coefficients`` is (n_train, K).
    For the SVM column ``k`` holds alpha_i * y_i of the one-vs-rest problem for class ``k``.
    """

    kind: str
    coefficients: np.ndarray
    bias: np.ndarray
    support_indices: np.ndarray
    ridge: float = 0.0
    C: float | None = None
    converged: bool = True
    info: dict = field(default_factory=dict)

    @property
    def n_train(self) -> int:
        return self.coefficients.shape[0]

    def decision_function(self, gram_cross) -> np.ndarray:
        gram_cross = np.atleast_2d(np.asarray(gram_cross, dtype=np.float64))
        if gram_cross.shape[1] != self.n_train:
            raise ValueError(f"cross kernel has {gram_cross.shape[1]} columns, "
                             f"expected {self.n_train}")
        return gram_cross @ self.coefficients + self.bias

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "coefficients": self.coefficients.tolist(),
            "bias": self.bias.tolist(),
            "support_indices": self.support_indices.tolist(),
            "hyperparameters": {"ridge": self.ridge, "C": self.C},
            "converged": self.converged,
        })

    @classmethod
    def from_json(cls, text: str) -> "KernelPredictor":
        d = json.loads(text)
        hp = d["hyperparameters"]
        return cls(d["kind"], np.array(d["coefficients"], dtype=np.float64).reshape(-1, len(d["bias"])),
                   np.array(d["bias"], dtype=np.float64),
                   np.array(d["support_indices"], dtype=np.int64),
                   hp["ridge"], hp["C"], d["converged"])


def one_hot(labels, num_classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _check_square(gram):
    gram = np.asarray(gram, dtype=np.float64)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ValueError("training Gram matrix must be square")
    return gram


def fit_kernel_regression(gram_train, labels, ridge: float = 0.0) -> KernelPredictor:
    """Solve (K + ridge I) c = Y by Cholesky; ``labels`` is one-hot (n, K) or a vector.

    If ``ridge == 0`` and the factorisation fails, retries once with
    ``1e-8 * mean(diag K)`` before giving up.
    """
    gram = _check_square(gram_train)
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != gram.shape[0]:
        raise ValueError("labels and Gram matrix differ in size")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    n = gram.shape[0]
    tries = [ridge] if ridge > 0 else [0.0, 1e-8 * float(np.mean(np.diag(gram)))]
    for r in tries:
        try:
            factor = cho_factor(gram + r * np.eye(n), lower=True, check_finite=True)
        except LinAlgError:
            continue
        coef = cho_solve(factor, y)
        return KernelPredictor("regression", coef, np.zeros(y.shape[1]), np.arange(n), r)
    raise LinAlgError(f"Gram matrix is not positive definite with ridge {tries[-1]:.3g}; "
                      "use a larger ridge")


def dual_objective(alpha, grad) -> float:
    """sum(alpha) - 1/2 alpha^T Q alpha, given grad = Q alpha - 1."""
    return float(-0.5 * alpha @ (grad - 1.0))


def _smo(K, y, C, tol, max_iter, alpha0=None, Q=None):
    """Working-set-2 SMO with second-order pair selection on the SVM dual.

    ``alpha0`` must be feasible for ``C`` (e.g. the solution for a smaller C).
    Returns alpha, rho, converged, dual objective recorded once per n updates.
    """
    n = len(y)
    if Q is None:
        Q = (y[:, None] * y[None, :]) * K
    diagQ = np.diag(Q).copy()
    if alpha0 is None:
        alpha = np.zeros(n)
        grad = -np.ones(n)
    else:
        alpha = np.array(alpha0, dtype=np.float64)
        grad = Q @ alpha - 1.0
    pos = y > 0
    history = [dual_objective(alpha, grad)]
    converged = False
    for it in range(max_iter):
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y * grad
        if not up.any() or not low.any():
            converged = True
            break
        s_up = np.where(up, score, -np.inf)
        i = int(np.argmax(s_up))
        m_val = s_up[i]
        M_val = np.min(np.where(low, score, np.inf))
        if m_val - M_val < tol:
            converged = True
            break
        b = m_val - score
        cand = low & (b > 0)
        a = diagQ[i] + diagQ - 2.0 * y[i] * y * Q[i]
        a = np.where(a > 0, a, 1e-12)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        # two-variable update (LIBSVM formulation)
        Qi, Qj = Q[i], Q[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diagQ[i] + diagQ[j] + 2 * Qi[j]
            quad = quad if quad > 0 else 1e-12
            delta = (-grad[i] - grad[j]) / quad
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
            quad = diagQ[i] + diagQ[j] - 2 * Qi[j]
            quad = quad if quad > 0 else 1e-12
            delta = (grad[i] - grad[j]) / quad
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
        grad += Qi * (ai - ai_old) + Qj * (aj - aj_old)
        if (it + 1) % n == 0:
            history.append(dual_objective(alpha, grad))
    history.append(dual_objective(alpha, grad))
    rho = _rho(alpha, grad, y, C)
    return alpha, rho, converged, history


def _rho(alpha, grad, y, C):
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    pos = y > 0
    at_upper = alpha >= C
    at_lower = alpha <= 0
    # bounds on rho from KKT at the box boundaries
    ub_mask = (at_upper & ~pos) | (at_lower & pos)
    lb_mask = (at_upper & pos) | (at_lower & ~pos)
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if np.isfinite(ub) and np.isfinite(lb):
        return float((ub + lb) / 2)
    return float(ub if np.isfinite(ub) else lb)


def _binary_labels(labels):
    y = np.asarray(labels, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("SVM labels must be -1 or +1")
    return y


def fit_svm(gram_train, labels, C: float = 1.0, tol: float = 1e-3,
            max_passes: int | None = None, alpha0=None) -> KernelPredictor:
    """Binary C-SVM on a precomputed kernel; ``labels`` in {-1, +1}.

    Stops when the maximal KKT violation drops below ``tol`` or after
    ``max_passes * n`` pair updates (``max_passes`` defaults to ``10 n``); in the
    latter case ``converged`` is False and the current iterate is returned.
    """
    K = _check_square(gram_train)
    y = _binary_labels(labels)
    if not C > 0:
        raise ValueError("C must be positive")
    n = len(y)
    if max_passes is None:
        max_passes = 10 * n
    alpha, rho, converged, history = _smo(K, y, float(C), tol, max_passes * n, alpha0)
    return _binary_predictor(alpha, y, rho, C, converged, history)


def _binary_predictor(alpha, y, rho, C, converged, history):
    coef = (alpha * y)[:, None]
    return KernelPredictor("svm", coef, np.array([-rho]), np.flatnonzero(alpha > 0), 0.0,
                           float(C), converged, {"alpha": alpha, "dual_history": history})


def fit_svm_path(gram_train, labels, Cs, tol: float = 1e-3,
                 max_passes: int | None = None) -> list[KernelPredictor]:
    """Binary SVMs for every C, solved in ascending C with warm starts.

    The solution for a smaller C is feasible for a larger one, so each solve starts
    from it. Results come back in the order of ``Cs``.
    """
    K = _check_square(gram_train)
    y = _binary_labels(labels)
    n = len(y)
    if max_passes is None:
        max_passes = 10 * n
    Q = (y[:, None] * y[None, :]) * K
    out: list = [None] * len(Cs)
    alpha = None
    for idx in np.argsort(Cs, kind="stable"):
        C = float(Cs[idx])
        if not C > 0:
            raise ValueError("C must be positive")
        alpha, rho, converged, history = _smo(K, y, C, tol, max_passes * n, alpha, Q)
        out[idx] = _binary_predictor(alpha.copy(), y, rho, C, converged, history)
    return out


def _ovr(machines, C):
    if len(machines) == 1:
        m = machines[0]
        c = m.coefficients[:, 0]
        return KernelPredictor("svm", np.stack([-c, c], axis=1), np.array([-m.bias[0], m.bias[0]]),
                               m.support_indices, 0.0, float(C), m.converged,
                               {"machines": [m.info]})
    support = sorted(set().union(*(m.support_indices.tolist() for m in machines)))
    return KernelPredictor("svm", np.stack([m.coefficients[:, 0] for m in machines], axis=1),
                           np.array([m.bias[0] for m in machines]),
                           np.array(support, dtype=np.int64), 0.0, float(C),
                           all(m.converged for m in machines),
                           {"machines": [m.info for m in machines]})


def _ovr_targets(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    if k <= 2:
        # the second one-vs-rest machine is the exact mirror of the first
        return [np.where(labels == 1, 1.0, -1.0)]
    return [np.where(labels == cls, 1.0, -1.0) for cls in range(k)]


def fit_svm_multiclass(gram_train, labels, num_classes: int | None = None, C: float = 1.0,
                       tol: float = 1e-3, max_passes: int | None = None) -> KernelPredictor:
    """One-vs-rest over class indices; decision column k scores class k."""
    machines = [fit_svm(gram_train, t, C, tol, max_passes)
                for t in _ovr_targets(labels, num_classes)]
    return _ovr(machines, C)


def fit_svm_multiclass_path(gram_train, labels, Cs, num_classes: int | None = None,
                            tol: float = 1e-3, max_passes: int | None = None):
    per_target = [fit_svm_path(gram_train, t, Cs, tol, max_passes)
                  for t in _ovr_targets(labels, num_classes)]
    return [_ovr([path[i] for path in per_target], C) for i, C in enumerate(Cs)]


def predict(pred: KernelPredictor, gram_cross) -> np.ndarray:
    """Class indices: argmax over per-class decision values, ties to the lowest index.

    A single-column (binary, +/-1) predictor maps decision >= 0 to 1, else 0.
    """
    dec = pred.decision_function(gram_cross)
    if dec.shape[1] == 1:
        return (dec[:, 0] >= 0).astype(np.int64)
    return np.argmax(dec, axis=1)

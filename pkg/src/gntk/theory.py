"""Generalisation-bound quantities for the single-block, norm-scaled kernel.

The bounds are stated for one BLOCK with one ReLU layer, c_u equal to the inverse norm
of the aggregated input feature, no jumping knowledge, and the 1/(2 pi) closed forms
(activation constant 1). Every aggregated feature is then unit-norm.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import Graph, LabeledDataset
from .kernel import ArchConfig, GramMatrix, gram_matrix

THEORY_ARCH = ArchConfig(num_blocks=1, mlp_layers=1, scaling="norm",
                         jumping_knowledge=False, c_sigma=1.0)


@dataclass
class SyntheticLabelSpec:
    """Labels  y = a1 sum_u <hbar_u, b1> + sum_l a_2l sum_u <hbar_u, b_2l>^(2l).

    ``pairs[l-1] = (a_2l, b_2l)`` for l = 1..len(pairs).
    """

    alpha_1: float
    beta_1: np.ndarray
    pairs: list = field(default_factory=list)

    def bound(self) -> float:
        """2|a1| |b1| + sum_l sqrt(2 pi) (2l - 1) |a_2l| |b_2l|^(2l)."""
        total = 2.0 * abs(self.alpha_1) * float(np.linalg.norm(self.beta_1))
        for l, (a, b) in enumerate(self.pairs, start=1):
            total += math.sqrt(2 * math.pi) * (2 * l - 1) * abs(a) * float(np.linalg.norm(b)) ** (2 * l)
        if not math.isfinite(total):
            raise ValueError("label bound is not finite")
        return total


@dataclass
class BoundReport:
    quad_form: float
    trace: float
    n: int
    bound_value: float
    V_bar: int
    delta: float
    theorem2_rhs: float | None = None
    theorem3_bound: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def table(self) -> str:
        rows = [("n", self.n), ("V_bar", self.V_bar), ("delta", self.delta),
                ("y^T K^-1 y", self.quad_form), ("tr K", self.trace),
                ("tr bound 2 n V_bar^2", self.theorem3_bound),
                ("population loss bound", self.bound_value),
                ("label-class bound B", self.theorem2_rhs)]
        width = max(len(k) for k, _ in rows)
        lines = []
        for k, v in rows:
            if v is None:
                continue
            text = f"{v:.6g}" if isinstance(v, float) else str(v)
            lines.append(f"{k:<{width}}  {text}")
        return "\n".join(lines)


def aggregated_unit_features(g: Graph) -> np.ndarray:
    """hbar_u = c_u sum_{v in N(u)+u} h_v with c_u the inverse norm; errors on a zero sum."""
    agg = (g.adjacency_matrix() + np.eye(g.node_count)) @ g.features
    norms = np.linalg.norm(agg, axis=1)
    if np.any(norms == 0):
        raise ValueError("norm scaling undefined: a node has an all-zero aggregated feature")
    return agg / norms[:, None]


def theory_kernel(dataset: LabeledDataset, workers: int = 1) -> GramMatrix:
    for g in dataset.graphs:
        aggregated_unit_features(g)
    return gram_matrix(dataset, THEORY_ARCH, workers)


def _values(gram) -> np.ndarray:
    return np.asarray(gram.values if isinstance(gram, GramMatrix) else gram, dtype=np.float64)


def quad_form(gram, y, ridge: float = 0.0) -> float:
    """y^T (K + ridge I)^-1 y through a Cholesky factorisation."""
    K = _values(gram)
    y = np.asarray(y, dtype=np.float64)
    try:
        factor = cho_factor(K + ridge * np.eye(len(K)), lower=True)
    except LinAlgError as exc:
        raise LinAlgError(f"kernel matrix is singular at ridge {ridge:g} (e.g. graphs with "
                          "identical representations); use a positive ridge") from exc
    return float(y @ cho_solve(factor, y))


def synth_labels(dataset: LabeledDataset, spec: SyntheticLabelSpec) -> np.ndarray:
    out = np.empty(len(dataset))
    for i, g in enumerate(dataset.graphs):
        hbar = aggregated_unit_features(g)
        y = spec.alpha_1 * float(np.sum(hbar @ np.asarray(spec.beta_1, float)))
        for l, (a, b) in enumerate(spec.pairs, start=1):
            y += a * float(np.sum((hbar @ np.asarray(b, float)) ** (2 * l)))
        out[i] = y
    return out


def check_theorem2(dataset: LabeledDataset, spec: SyntheticLabelSpec, gram=None,
                   slack: float = 1e-8):
    """(sqrt(y^T K^-1 y), B, holds) for labels generated from ``spec``."""
    K = theory_kernel(dataset) if gram is None else gram
    y = synth_labels(dataset, spec)
    lhs = math.sqrt(max(quad_form(K, y, 0.0), 0.0))
    rhs = spec.bound()
    return lhs, rhs, lhs <= rhs + slack


def check_theorem3(gram, dataset: LabeledDataset):
    """(tr K, 2 n V_bar^2, holds)."""
    trace = float(np.trace(_values(gram)))
    bound = 2.0 * len(dataset) * dataset.max_nodes ** 2
    return trace, bound, trace <= bound


def theorem1_bound(gram, y, delta: float, ridge: float = 0.0) -> float:
    """2 sqrt(y^T K^-1 y tr K) / n + 3 sqrt(log(2/delta) / (2n)), loss bounded in [0, 1]."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    K = _values(gram)
    n = len(K)
    y = np.asarray(y, dtype=np.float64)
    q = 0.0 if not np.any(y) else quad_form(K, y, ridge)
    return 2 * math.sqrt(max(q, 0.0) * float(np.trace(K))) / n + 3 * math.sqrt(math.log(2 / delta) / (2 * n))


def bound_report(dataset: LabeledDataset, y=None, delta: float = 0.05,
                 spec: SyntheticLabelSpec | None = None, ridge: float = 0.0,
                 gram=None) -> BoundReport:
    K = theory_kernel(dataset) if gram is None else gram
    if y is None:
        y = synth_labels(dataset, spec) if spec is not None else dataset.labels.astype(float)
    y = np.asarray(y, dtype=np.float64)
    q = quad_form(K, y, ridge) if np.any(y) else 0.0
    trace, t3, _ = check_theorem3(K, dataset)
    return BoundReport(q, trace, len(dataset), theorem1_bound(K, y, delta, ridge),
                       dataset.max_nodes, delta, None if spec is None else spec.bound(), t3)


def arcsin_series_part(lam, terms: int = 50):
    """lam * (pi - arccos lam) / (2 pi) via lam/4 + (1/2pi) sum_l c_l lam^(2l).

    c_l = (2l-3)!! / ((2l-2)!! (2l-1)), l = 1..terms.
    """
    lam = np.asarray(lam, dtype=np.float64)
    total = np.zeros_like(lam)
    coef = 1.0  # (2l-3)!!/(2l-2)!! at l = 1
    for l in range(1, terms + 1):
        if l > 1:
            coef *= (2 * l - 3) / (2 * l - 2)
        total = total + coef / (2 * l - 1) * lam ** (2 * l)
    return lam / 4 + total / (2 * np.pi)


def arcsin_series_tail_bound(lam, terms: int = 50):
    """Upper bound on the omitted terms of :func:`arcsin_series_part` (coefficients <= 1)."""
    x2 = np.asarray(lam, dtype=np.float64) ** 2
    with np.errstate(divide="ignore"):
        return np.where(x2 < 1, x2 ** (terms + 1) / (1 - x2), np.inf) / (2 * np.pi)

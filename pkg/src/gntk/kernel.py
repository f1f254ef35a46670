"""Analytic graph neural tangent kernel.

For a pair of graphs the kernel is a dynamic program over node-pair matrices:
neighbourhood aggregation of the covariance ``sigma`` and the tangent kernel ``theta``,
followed by ``R`` ReLU layers evaluated with the arc-cosine closed forms, repeated for
``L`` blocks, then summed over node pairs (optionally over every block: jumping knowledge).
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import Graph, LabeledDataset

SCALINGS = ("sum", "average", "norm")
_SCALE_ALIASES = {"avg": "average", "mean": "average"}


@dataclass(frozen=True)
class ArchConfig:
    """Infinite-width GNN architecture: ``num_blocks`` BLOCKs of ``mlp_layers`` ReLU layers.

    ``scaling`` picks the aggregation factor c_u: ``sum`` (1), ``average``
    (1/(deg+1)) or ``norm`` (inverse norm of each block's aggregated input features).
    """

    num_blocks: int = 2
    mlp_layers: int = 1
    scaling: str = "sum"
    jumping_knowledge: bool = False
    c_sigma: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "scaling", _SCALE_ALIASES.get(self.scaling, self.scaling))
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")
        if int(self.num_blocks) < 1 or int(self.mlp_layers) < 1:
            raise ValueError("num_blocks and mlp_layers must be >= 1")
        if not self.c_sigma > 0:
            raise ValueError("c_sigma must be positive")
        object.__setattr__(self, "num_blocks", int(self.num_blocks))
        object.__setattr__(self, "mlp_layers", int(self.mlp_layers))
        object.__setattr__(self, "jumping_knowledge", bool(self.jumping_knowledge))
        object.__setattr__(self, "c_sigma", float(self.c_sigma))

    def canonical(self) -> str:
        d = asdict(self)
        d["c_sigma"] = repr(self.c_sigma)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.canonical().encode()).digest()

    def label(self) -> str:
        jk = "-jk" if self.jumping_knowledge else ""
        return f"L{self.num_blocks}-R{self.mlp_layers}-{self.scaling}{jk}-cs{self.c_sigma:g}"


@dataclass(frozen=True)
class PairState:
    sigma: np.ndarray
    theta: np.ndarray
    diag_g: np.ndarray
    diag_gp: np.ndarray


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    arch: ArchConfig
    dataset_name: str = ""
    normalized: bool = False


def scaling_factors(g: Graph, scaling: str) -> np.ndarray:
    """Per-node c_u. Under ``norm`` an all-zero aggregated feature gets c_u = 0."""
    scaling = _SCALE_ALIASES.get(scaling, scaling)
    n = g.node_count
    if scaling == "sum":
        return np.ones(n)
    if scaling == "average":
        return 1.0 / (g.degrees() + 1.0)
    if scaling == "norm":
        agg = (g.adjacency_matrix() + np.eye(n)) @ g.features
        norms = np.linalg.norm(agg, axis=1)
        out = np.zeros(n)
        np.divide(1.0, norms, out=out, where=norms > 0)
        return out
    raise ValueError(f"unknown scaling {scaling!r}")


def aggregation_operator(g: Graph, scaling: str) -> np.ndarray:
    """diag(c) (A + I): left-multiplying a node matrix aggregates over N(u) + {u}."""
    c = scaling_factors(g, scaling)
    return c[:, None] * (g.adjacency_matrix() + np.eye(g.node_count))


def input_covariance(g: Graph, g2: Graph) -> np.ndarray:
    if g.feature_dim != g2.feature_dim:
        raise ValueError(f"feature dims differ: {g.feature_dim} vs {g2.feature_dim}")
    return g.features @ g2.features.T


def arccos_expectations(lam, s, c_sigma: float = 2.0):
    """ReLU Gaussian expectations from correlation ``lam`` and scale ``s``.

    Returns ``(c_sigma * E[relu(a) relu(b)], c_sigma * E[step(a) step(b)])`` for
    (a, b) centred normal with variances whose geometric mean is ``s``.
    """
    lam = np.clip(lam, -1.0, 1.0)
    angle = np.pi - np.arccos(lam)
    sigma = c_sigma * s * (lam * angle + np.sqrt(1.0 - lam * lam)) / (2 * np.pi)
    sigma_dot = c_sigma * angle / (2 * np.pi)
    return sigma, sigma_dot


# pi - arccos(lam) has unbounded slope at |lam| = 1, so rounding of an exactly
# (anti)parallel pair would leak ~sqrt(eps) of summation-order noise into the kernel.
# Correlations this close to +-1 are indistinguishable from it in float64 anyway.
_SNAP = 1e-13


def _correlation(sigma, diag_g, diag_gp):
    s = np.sqrt(np.outer(diag_g, diag_gp))
    ok = s > 0
    lam = np.divide(sigma, s, out=np.zeros_like(s), where=ok)
    lam = np.clip(lam, -1.0, 1.0)
    lam[np.abs(lam) > 1.0 - _SNAP] = np.sign(lam[np.abs(lam) > 1.0 - _SNAP])
    return lam, s


def aggregate(state: PairState, g: Graph, g2: Graph, arch: ArchConfig,
              diag_g=None, diag_gp=None, ops=None) -> PairState:
    """Neighbourhood aggregation of ``sigma`` and ``theta``.

    The diagonals of the self-covariances after aggregation depend on full
    self-covariance matrices, so they cannot be derived from ``state``; pass them in
    (see :func:`self_recursion`). For a self pair (``g is g2``) they are read off the
    aggregated ``sigma``. ``ops`` overrides the two aggregation operators; the default,
    built from the input features, is the first-block operator.
    """
    if ops is None:
        pg = aggregation_operator(g, arch.scaling)
        pg2 = pg if g2 is g else aggregation_operator(g2, arch.scaling)
    else:
        pg, pg2 = ops
    if state.sigma.shape != (g.node_count, g2.node_count):
        raise ValueError("state shape does not match graphs")
    sigma = pg @ state.sigma @ pg2.T
    theta = pg @ state.theta @ pg2.T
    if diag_g is None or diag_gp is None:
        if g2 is not g:
            raise ValueError("aggregated diagonals must be supplied for a cross pair")
        diag_g = diag_gp = np.diag(sigma).copy()
    return PairState(sigma, theta, np.asarray(diag_g, float), np.asarray(diag_gp, float))


def relu_transform(state: PairState, arch: ArchConfig) -> PairState:
    """One fully connected ReLU layer: closed-form update of sigma, theta and diagonals.

    Zero-variance nodes take the lam = 0, s = 0 branch: sigma 0, derivative c_sigma/4.
    """
    lam, s = _correlation(state.sigma, state.diag_g, state.diag_gp)
    sigma, sigma_dot = arccos_expectations(lam, s, arch.c_sigma)
    theta = state.theta * sigma_dot + sigma
    half = arch.c_sigma / 2.0
    return PairState(sigma, theta, state.diag_g * half, state.diag_gp * half)


class _Prepared:
    """Per-graph quantities reused across all pairs: per-block operators and diagonals."""

    __slots__ = ("graph", "ops", "diags", "key")

    def __init__(self, g: Graph, arch: ArchConfig):
        self.graph = g
        self.ops, self.diags = self_recursion(g, arch)
        self.key = (g.node_count, g.adjacency, g.features.tobytes())


def norm_operator(g: Graph, sigma_self: np.ndarray) -> np.ndarray:
    """Norm-scaled aggregation given the self-covariance of the block input.

    c_u = 1 / ||sum_{v in N(u)+u} h_v||, whose infinite-width value is the square root
    of the (u, u) entry of the aggregated self-covariance; zero norms give c_u = 0.
    """
    agg = g.adjacency_matrix() + np.eye(g.node_count)
    sq = np.einsum("uv,vw,uw->u", agg, sigma_self, agg)
    c = np.zeros(g.node_count)
    np.divide(1.0, np.sqrt(np.clip(sq, 0.0, None)), out=c, where=sq > 0)
    return c[:, None] * agg


def self_recursion(g: Graph, arch: ArchConfig):
    """Run the (G, G) recursion once.

    Returns ``(ops, diags)``: ``ops[l]`` is the aggregation operator of block l+1 and
    ``diags[l][r]`` the diagonal of Sigma(G, G) entering ReLU layer r+1 of block l+1.
    Under ``norm`` scaling each block normalises its own aggregated input, so the
    operator depends on the self-covariance; for ``sum``/``average`` it is fixed.
    """
    fixed = None if arch.scaling == "norm" else aggregation_operator(g, arch.scaling)
    sigma = g.features @ g.features.T
    ops, diags = [], []
    for _ in range(arch.num_blocks):
        op = norm_operator(g, sigma) if fixed is None else fixed
        ops.append(op)
        sigma = op @ sigma @ op.T
        block = []
        for _ in range(arch.mlp_layers):
            d = np.diag(sigma).copy()
            block.append(d)
            lam, s = _correlation(sigma, d, d)
            sigma, _ = arccos_expectations(lam, s, arch.c_sigma)
        diags.append(block)
    return ops, diags


def self_diagonals(g: Graph, arch: ArchConfig) -> list[list[np.ndarray]]:
    """``out[l][r]``: diagonal of Sigma(G, G) entering ReLU layer r+1 of block l+1."""
    return self_recursion(g, arch)[1]


def _pair_dp(a: _Prepared, b: _Prepared, arch: ArchConfig) -> list[float]:
    if b.key < a.key:
        a, b = b, a  # canonical order: swapping the arguments replays identical arithmetic
    sigma = input_covariance(a.graph, b.graph)
    theta = sigma
    readouts = [float(theta.sum())]
    for l in range(arch.num_blocks):
        sigma = a.ops[l] @ sigma @ b.ops[l].T
        theta = a.ops[l] @ theta @ b.ops[l].T
        for r in range(arch.mlp_layers):
            lam, s = _correlation(sigma, a.diags[l][r], b.diags[l][r])
            sigma, sigma_dot = arccos_expectations(lam, s, arch.c_sigma)
            theta = theta * sigma_dot + sigma
        readouts.append(float(theta.sum()))
    return readouts


def pair_kernel(g: Graph, g2: Graph, arch: ArchConfig, return_layers: bool = False):
    """Theta(G, G'). With ``return_layers`` also returns the L+1 per-block readouts."""
    if g.feature_dim != g2.feature_dim:
        raise ValueError(f"feature dims differ: {g.feature_dim} vs {g2.feature_dim}")
    a = _Prepared(g, arch)
    b = a if g2 is g else _Prepared(g2, arch)
    readouts = _pair_dp(a, b, arch)
    value = _readout(readouts, arch)
    return (value, readouts) if return_layers else value


def _readout(readouts: list[float], arch: ArchConfig) -> float:
    if arch.jumping_knowledge:
        return math.fsum(readouts)
    return readouts[-1]


# -- Gram matrix -------------------------------------------------------------

_WORKER_STATE: dict = {}


def _init_worker(prepared, arch):
    _WORKER_STATE["prepared"] = prepared
    _WORKER_STATE["arch"] = arch


def _compute_rows(rows):
    prepared, arch = _WORKER_STATE["prepared"], _WORKER_STATE["arch"]
    n = len(prepared)
    out = []
    for i in rows:
        out.append((i, [_readout(_pair_dp(prepared[i], prepared[j], arch), arch)
                        for j in range(i, n)]))
    return out


def _row_chunks(n: int, workers: int) -> list[list[int]]:
    # static interleaving balances the triangular workload
    nchunks = max(1, workers * 4)
    return [list(range(c, n, nchunks)) for c in range(nchunks) if c < n]


def gram_matrix(dataset: LabeledDataset, arch: ArchConfig, workers: int = 1,
                progress=None) -> GramMatrix:
    """Kernel values for all pairs i <= j, mirrored. Bitwise independent of ``workers``."""
    graphs = dataset.graphs
    dims = {g.feature_dim for g in graphs}
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dims {sorted(dims)}")
    if 0 in dims:
        raise ValueError("dataset is not featurized")
    prepared = [_Prepared(g, arch) for g in graphs]
    n = len(graphs)
    values = np.zeros((n, n))
    workers = max(1, int(workers or 1))
    if workers == 1:
        _init_worker(prepared, arch)
        chunks = [[i] for i in range(n)]
        results = map(_compute_rows, chunks)
    else:
        pool = ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(prepared, arch))
        results = pool.map(_compute_rows, _row_chunks(n, workers))
    try:
        for chunk in results:
            for i, row in chunk:
                values[i, i:] = row
                values[i:, i] = row
                if progress is not None:
                    progress(i)
    finally:
        if workers > 1:
            pool.shutdown()
    return GramMatrix(values, arch, dataset.name, False)


def normalize_gram(m: GramMatrix) -> GramMatrix:
    """Cosine normalisation K_ij / sqrt(K_ii K_jj). Idempotent."""
    d = np.diag(m.values)
    if np.any(d <= 0):
        raise ValueError("cannot normalise: non-positive diagonal entry")
    r = np.sqrt(d)
    values = m.values / np.outer(r, r)
    np.fill_diagonal(values, 1.0)
    return replace(m, values=values, normalized=True)


def cpu_workers(requested: int | None) -> int:
    if requested is None or requested <= 0:
        return os.cpu_count() or 1
    return requested

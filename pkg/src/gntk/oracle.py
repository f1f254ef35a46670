"""Brute-force checks for the analytic kernel.

* Monte Carlo estimates of the two ReLU Gaussian expectations.
* A finite-width GNN with standard-normal weights and hand-written backprop, whose
  empirical tangent kernel <df/dtheta(G), df/dtheta(G')> approaches the analytic
  kernel as the width grows.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .data import Graph
from .kernel import ArchConfig, aggregation_operator, pair_kernel


@dataclass(frozen=True)
class McEstimate:
    relu: float        # E[relu(a) relu(b)]
    relu_se: float
    step: float        # E[step(a) step(b)], step(z) = 1[z >= 0]
    step_se: float
    samples: int


def mc_relu_expectations(cov, samples: int = 1_000_000, seed: int = 0,
                         chunk: int = 250_000) -> McEstimate:
    """Plain Monte Carlo over (a, b) ~ N(0, cov); no c_sigma factor applied."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
        raise ValueError("cov must be a symmetric 2x2 matrix")
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-10:
        raise ValueError(f"cov is not PSD (min eigenvalue {w.min():.3g})")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    root = v * np.sqrt(np.clip(w, 0.0, None))
    rng = np.random.default_rng(seed)
    # running sums of x and x^2 for both estimators
    acc = np.zeros(4)
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        ab = rng.standard_normal((k, 2)) @ root.T
        a, b = ab[:, 0], ab[:, 1]
        rr = np.maximum(a, 0.0) * np.maximum(b, 0.0)
        ss = ((a >= 0) & (b >= 0)).astype(np.float64)
        acc += [rr.sum(), (rr * rr).sum(), ss.sum(), (ss * ss).sum()]
        done += k

    def mean_se(s1, s2):
        mean = s1 / samples
        var = max(s2 / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
        return mean, math.sqrt(var / samples)

    relu, relu_se = mean_se(acc[0], acc[1])
    step, step_se = mean_se(acc[2], acc[3])
    return McEstimate(relu, relu_se, step, step_se, samples)


@dataclass
class FiniteGNN:
    """Finite-width GNN matching the BLOCK/READOUT family.

    ``weights[l][r]`` has shape (width, fan_in) with standard-normal entries; the
    sqrt(c_sigma / width) factor is applied in the forward pass. The scalar head is
    ``readout . sum_u h_u`` (per-block pieces concatenated under jumping knowledge)
    with standard-normal ``readout``: its output dimension is one, so no extra scale.
    """

    arch: ArchConfig
    width: int
    weights: list
    readout: list

    def __post_init__(self):
        if self.arch.scaling == "norm":
            # c_u would depend on the weights; the oracle covers sum and average scaling
            raise ValueError("FiniteGNN supports 'sum' and 'average' scaling only")

    @classmethod
    def sample(cls, arch: ArchConfig, width: int, input_dim: int, rng) -> "FiniteGNN":
        rng = np.random.default_rng(rng)
        weights = []
        fan_in = input_dim
        for _ in range(arch.num_blocks):
            block = []
            for _ in range(arch.mlp_layers):
                block.append(rng.standard_normal((width, fan_in)))
                fan_in = width
            weights.append(block)
        if arch.jumping_knowledge:
            readout = [rng.standard_normal(input_dim)]
            readout += [rng.standard_normal(width) for _ in range(arch.num_blocks)]
        else:
            readout = [rng.standard_normal(width)]
        return cls(arch, width, weights, readout)

    @property
    def input_dim(self) -> int:
        return self.weights[0][0].shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [w for block in self.weights for w in block] + list(self.readout)


@dataclass
class _Trace:
    """Forward/backward record for one graph."""
    output: float
    layer_inputs: list     # Zin per layer, (n, fan_in)
    layer_deltas: list     # df/dpre per layer, (n, width)
    readout_grads: list    # df/dreadout pieces


def _check_input(gnn: FiniteGNN, g: Graph):
    if g.feature_dim != gnn.input_dim:
        raise ValueError(f"graph feature dim {g.feature_dim} != network input dim {gnn.input_dim}")


def _run(gnn: FiniteGNN, g: Graph, backward: bool = True) -> _Trace:
    _check_input(gnn, g)
    arch = gnn.arch
    scale = math.sqrt(arch.c_sigma / gnn.width)
    op = aggregation_operator(g, arch.scaling)
    h = g.features
    hs = [h]
    inputs, pres = [], []
    for block in gnn.weights:
        z = op @ h
        for w in block:
            pre = z @ w.T
            inputs.append(z)
            pres.append(pre)
            z = scale * np.maximum(pre, 0.0)
        h = z
        hs.append(h)

    pooled = [x.sum(axis=0) for x in (hs if arch.jumping_knowledge else hs[-1:])]
    output = float(sum(v @ p for v, p in zip(gnn.readout, pooled)))
    if not backward:
        return _Trace(output, [], [], [])

    n = g.node_count
    R = arch.mlp_layers
    deltas = [None] * len(pres)
    if arch.jumping_knowledge:
        dh = np.broadcast_to(gnn.readout[-1], (n, gnn.width))
    else:
        dh = np.broadcast_to(gnn.readout[0], (n, gnn.width))
    for l in reversed(range(arch.num_blocks)):
        dz = dh
        for r in reversed(range(R)):
            k = l * R + r
            dpre = dz * (scale * (pres[k] >= 0))
            deltas[k] = dpre
            dz = dpre @ gnn.weights[l][r]
        dh = op.T @ dz
        if arch.jumping_knowledge:
            dh = dh + gnn.readout[l]
    return _Trace(output, inputs, deltas, pooled)


def forward(gnn: FiniteGNN, g: Graph) -> float:
    return _run(gnn, g, backward=False).output


def parameter_gradients(gnn: FiniteGNN, g: Graph) -> list[np.ndarray]:
    """df/dtheta for every parameter array, ordered as :meth:`FiniteGNN.parameters`."""
    tr = _run(gnn, g)
    grads = [d.T @ z for z, d in zip(tr.layer_inputs, tr.layer_deltas)]
    return grads + [np.asarray(p, dtype=np.float64) for p in tr.readout_grads]


def _trace_inner(a: _Trace, b: _Trace) -> float:
    # <D_a^T Z_a, D_b^T Z_b>_F = sum((D_a D_b^T) * (Z_a Z_b^T)) avoids width x width products
    total = 0.0
    for za, da, zb, db in zip(a.layer_inputs, a.layer_deltas, b.layer_inputs, b.layer_deltas):
        total += float(np.sum((da @ db.T) * (za @ zb.T)))
    total += sum(float(pa @ pb) for pa, pb in zip(a.readout_grads, b.readout_grads))
    return total


def empirical_ntk(gnn: FiniteGNN, g: Graph, g2: Graph) -> float:
    ta = _run(gnn, g)
    tb = ta if g2 is g else _run(gnn, g2)
    return _trace_inner(ta, tb)


def finite_difference_gradients(gnn: FiniteGNN, g: Graph, step: float = 1e-5) -> list[np.ndarray]:
    """Central differences of :func:`forward`, one parameter entry at a time."""
    out = []
    for p in gnn.parameters():
        grad = np.zeros_like(p)
        flat, gflat = p.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = forward(gnn, g)
            flat[i] = keep - step
            down = forward(gnn, g)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * step)
        out.append(grad)
    return out


@dataclass(frozen=True)
class ConvergenceRow:
    width: int
    draw_count: int
    mean: float
    std: float
    analytic: float
    rel_error: float              # |mean - analytic| / |analytic|
    mean_abs_rel_error: float = float("nan")  # mean over draws of |sample - analytic| / |analytic|


def convergence_table(pairs, arch: ArchConfig, widths, draws: int, seed: int = 0):
    """Empirical NTK statistics for several graph pairs sharing each weight draw.

    Returns one list of :class:`ConvergenceRow` per pair. Draw ``k`` at width index
    ``w`` uses its own child seed, so results do not depend on evaluation order.
    """
    widths = list(widths)
    if widths != sorted(widths):
        raise ValueError("widths must be ascending")
    graphs: list[Graph] = []
    index = {}
    for g, g2 in pairs:
        for x in (g, g2):
            if id(x) not in index:
                index[id(x)] = len(graphs)
                graphs.append(x)
    input_dim = graphs[0].feature_dim
    analytic = [pair_kernel(g, g2, arch) for g, g2 in pairs]
    streams = np.random.SeedSequence(seed).spawn(len(widths))
    tables = [[] for _ in pairs]
    for width, ss in zip(widths, streams):
        samples = np.zeros((draws, len(pairs)))
        for k, child in enumerate(ss.spawn(draws)):
            gnn = FiniteGNN.sample(arch, width, input_dim, np.random.default_rng(child))
            traces = [_run(gnn, x) for x in graphs]
            for p, (g, g2) in enumerate(pairs):
                samples[k, p] = _trace_inner(traces[index[id(g)]], traces[index[id(g2)]])
        for p in range(len(pairs)):
            mean = float(samples[:, p].mean())
            std = float(samples[:, p].std())
            rel = abs(mean - analytic[p]) / abs(analytic[p])
            spread = float(np.mean(np.abs(samples[:, p] - analytic[p]))) / abs(analytic[p])
            tables[p].append(ConvergenceRow(width, draws, mean, std, analytic[p], rel, spread))
    return tables


def convergence_study(g: Graph, g2: Graph, arch: ArchConfig, widths, draws: int,
                      seed: int = 0) -> list[ConvergenceRow]:
    return convergence_table([(g, g2)], arch, widths, draws, seed)[0]


def convergence_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["width", "draw_count", "mean", "std", "analytic", "rel_error",
                "mean_abs_rel_error"])
    for r in rows:
        w.writerow([r.width, r.draw_count, repr(r.mean), repr(r.std), repr(r.analytic),
                    repr(r.rel_error), repr(r.mean_abs_rel_error)])
    return buf.getvalue()

"""Analytic kernel: closed forms, dynamic program, Gram matrices and the binary cache."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import graphs, random_dataset
from gntk import cache
from gntk.data import Graph, LabeledDataset
from gntk.kernel import (ArchConfig, GramMatrix, PairState, aggregate, arccos_expectations,
                         gram_matrix, input_covariance, normalize_gram, pair_kernel,
                         relu_transform, scaling_factors, self_diagonals)

archs = st.builds(ArchConfig, st.integers(1, 3), st.integers(1, 3),
                  st.sampled_from(["sum", "average", "norm"]), st.booleans(),
                  st.sampled_from([1.0, 2.0]))


# -- independent reference: explicit double sums over neighbourhoods -----------

def _c(g, scaling, self_cov):
    """c_u; under norm scaling ||sum_v h_v||^2 = sum_{v, w} <h_v, h_w> from the self-covariance."""
    n = g.node_count
    if scaling == "sum":
        return [1.0] * n
    if scaling == "average":
        return [1.0 / (len(g.adjacency[u]) + 1) for u in range(n)]
    out = []
    for u in range(n):
        hood = (u, *g.adjacency[u])
        sq = sum(self_cov[v, w] for v in hood for w in hood)
        out.append(1.0 / math.sqrt(sq) if sq > 0 else 0.0)
    return out


def _agg(m, g, g2, scaling, cov_g, cov_g2):
    c, c2 = _c(g, scaling, cov_g), _c(g2, scaling, cov_g2)
    out = np.zeros_like(m)
    for u in range(g.node_count):
        for u2 in range(g2.node_count):
            total = 0.0
            for v in (u, *g.adjacency[u]):
                for v2 in (u2, *g2.adjacency[u2]):
                    total += m[v, v2]
            out[u, u2] = c[u] * c2[u2] * total
    return out


def _relu(sig, da, db, cs):
    out, dot = np.zeros_like(sig), np.zeros_like(sig)
    for i in range(sig.shape[0]):
        for j in range(sig.shape[1]):
            s = math.sqrt(da[i] * db[j])
            lam = 0.0 if s == 0 else min(1.0, max(-1.0, sig[i, j] / s))
            out[i, j] = cs * s * (lam * (math.pi - math.acos(lam)) + math.sqrt(1 - lam * lam)) / (2 * math.pi)
            dot[i, j] = cs * (math.pi - math.acos(lam)) / (2 * math.pi)
    return out, dot


def reference_kernel(g, g2, arch):
    """Runs the (G,G), (G',G') and (G,G') recursions side by side with full matrices."""
    sa, sb = g.features @ g.features.T, g2.features @ g2.features.T
    sig = g.features @ g2.features.T
    theta = sig.copy()
    readouts = [theta.sum()]
    for _ in range(arch.num_blocks):
        sig = _agg(sig, g, g2, arch.scaling, sa, sb)
        theta = _agg(theta, g, g2, arch.scaling, sa, sb)
        sa, sb = _agg(sa, g, g, arch.scaling, sa, sa), _agg(sb, g2, g2, arch.scaling, sb, sb)
        for _ in range(arch.mlp_layers):
            da, db = np.diag(sa).copy(), np.diag(sb).copy()
            sig, dot = _relu(sig, da, db, arch.c_sigma)
            theta = theta * dot + sig
            sa, _ = _relu(sa, da, da, arch.c_sigma)
            sb, _ = _relu(sb, db, db, arch.c_sigma)
        readouts.append(theta.sum())
    return sum(readouts) if arch.jumping_knowledge else readouts[-1]


# -- closed forms ----------------------------------------------------------------

@pytest.mark.parametrize("lam, sigma, dot", [
    (1.0, 1.0, 1.0),
    (0.0, 1 / math.pi, 0.5),
    (0.5, (0.5 * 2 * math.pi / 3 + math.sqrt(3) / 2) / math.pi, 2 / 3),
])
def test_closed_form_values(lam, sigma, dot):
    s, d = arccos_expectations(lam, 1.0, c_sigma=2.0)
    assert s == pytest.approx(sigma, abs=1e-15)
    assert d == pytest.approx(dot, abs=1e-15)


def test_closed_form_half_correlation_decimal():
    s, _ = arccos_expectations(0.5, 1.0, 2.0)
    assert round(float(s), 5) == 0.60900
    assert float(arccos_expectations(0.0, 1.0)[0]) == pytest.approx(0.31831, abs=5e-6)


@given(st.floats(-1.5, 1.5), st.floats(0, 10))
def test_closed_form_ranges(lam, s):
    sigma, dot = arccos_expectations(lam, s, 2.0)
    assert 0.0 <= dot <= 1.0
    assert 0.0 <= sigma <= s * (1 + 1e-12)


def test_zero_diagonal_branch():
    st_ = PairState(np.zeros((1, 2)), np.ones((1, 2)), np.zeros(1), np.array([1.0, 0.0]))
    out = relu_transform(st_, ArchConfig(c_sigma=2.0))
    np.testing.assert_array_equal(out.sigma, 0.0)
    np.testing.assert_allclose(out.theta, 0.5)  # theta * c_sigma/4 + 0
    assert np.all(np.isfinite(out.theta))


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31), st.floats(0, 1e-6))
def test_relu_transform_never_nan(n, m, seed, slack):
    rng = np.random.default_rng(seed)
    da, db = rng.random(n) * 3, rng.random(m) * 3
    da[rng.random(n) < 0.2] = 0.0
    bound = np.sqrt(np.outer(da, db))
    sig = rng.uniform(-1, 1, (n, m)) * bound * (1 + slack)
    out = relu_transform(PairState(sig, rng.standard_normal((n, m)), da, db), ArchConfig())
    assert np.all(np.isfinite(out.sigma)) and np.all(np.isfinite(out.theta))
    lam_bound = np.sqrt(np.outer(out.diag_g, out.diag_gp))
    assert np.all(np.abs(out.sigma) <= lam_bound * (1 + 1e-9) + 1e-15)


# -- building blocks -------------------------------------------------------------

def test_input_covariance_one_hot():
    e = np.eye(3)
    g, g2 = Graph.from_edges(1, [], e[[0]]), Graph.from_edges(2, [(0, 1)], e[[0, 2]])
    np.testing.assert_array_equal(input_covariance(g, g2), [[1.0, 0.0]])
    big = Graph.from_edges(3, [(0, 1)], np.random.default_rng(0).standard_normal((3, 3)))
    assert np.linalg.eigvalsh(input_covariance(big, big)).min() > -1e-12
    with pytest.raises(ValueError):
        input_covariance(g, Graph.from_edges(1, [], np.ones((1, 2))))


def test_aggregate_isolated_and_single_node():
    a = Graph.from_edges(1, [], np.ones((1, 2)))
    b = Graph.from_edges(1, [], np.ones((1, 2)))
    s = PairState(np.array([[0.3]]), np.array([[0.7]]), np.array([1.0]), np.array([2.0]))
    for scaling in ("sum", "average"):
        out = aggregate(s, a, b, ArchConfig(scaling=scaling), s.diag_g, s.diag_gp)
        assert out.sigma[0, 0] == 0.3 and out.theta[0, 0] == 0.7
    out = aggregate(s, a, a, ArchConfig(scaling="average"))
    assert out.sigma[0, 0] == 0.3 and out.diag_g[0] == 0.3


def test_aggregate_edge_graph_identity():
    g = Graph.from_edges(2, [(0, 1)], np.eye(2))
    s = PairState(np.eye(2), np.eye(2), np.ones(2), np.ones(2))
    out = aggregate(s, g, g, ArchConfig(scaling="sum"))
    np.testing.assert_array_equal(out.sigma, 2.0)
    np.testing.assert_array_equal(out.theta, 2.0)
    np.testing.assert_array_equal(s.sigma, np.eye(2))  # input untouched


def test_aggregate_cross_pair_needs_diagonals():
    g = Graph.from_edges(2, [(0, 1)], np.eye(2))
    h = Graph.from_edges(2, [(0, 1)], np.eye(2))
    s = PairState(np.eye(2), np.eye(2), np.ones(2), np.ones(2))
    with pytest.raises(ValueError):
        aggregate(s, g, h, ArchConfig())


def test_scaling_factors():
    g = Graph.from_edges(3, [(0, 1), (1, 2)], np.ones((3, 2)))
    np.testing.assert_allclose(scaling_factors(g, "average"), [1 / 2, 1 / 3, 1 / 2])
    np.testing.assert_allclose(scaling_factors(g, "norm"),
                               1 / np.linalg.norm([[2, 2], [3, 3], [2, 2]], axis=1))
    z = Graph.from_edges(1, [], np.zeros((1, 2)))
    assert scaling_factors(z, "norm")[0] == 0.0


def test_self_diagonals_match_full_self_recursion():
    g = Graph.random(3, 5, 3)
    arch = ArchConfig(3, 2, "norm")
    diags = self_diagonals(g, arch)
    sa = g.features @ g.features.T
    for l in range(arch.num_blocks):
        sa = _agg(sa, g, g, arch.scaling, sa, sa)
        for r in range(arch.mlp_layers):
            np.testing.assert_allclose(diags[l][r], np.diag(sa), rtol=1e-12)
            sa, _ = _relu(sa, np.diag(sa).copy(), np.diag(sa).copy(), arch.c_sigma)


# -- pair kernel -----------------------------------------------------------------

def test_single_node_kernel_is_two():
    g = Graph.from_edges(1, [], np.array([[0.0, 1.0]]))
    h = Graph.from_edges(1, [], np.array([[0.0, 1.0]]))
    assert pair_kernel(g, h, ArchConfig(1, 1, "sum", False, 2.0)) == pytest.approx(2.0, abs=1e-15)


@given(graphs(), graphs(), archs)
def test_matches_reference(g, h, arch):
    got = pair_kernel(g, h, arch)
    want = reference_kernel(g, h, arch)
    # arccos has unbounded slope at 1: summation-order rounding near lam = 1 grows to ~sqrt(eps)
    assert got == pytest.approx(want, rel=1e-6, abs=1e-9)


@given(graphs(), graphs(), archs)
def test_symmetry_is_exact(g, h, arch):
    assert pair_kernel(g, h, arch) == pair_kernel(h, g, arch)


@given(graphs(), graphs(), archs, st.randoms(use_true_random=False))
def test_permutation_invariance(g, h, arch, rnd):
    perm = list(range(g.node_count))
    rnd.shuffle(perm)
    a, b = pair_kernel(g, h, arch), pair_kernel(g.permuted(perm), h, arch)
    assert abs(a - b) <= 1e-9 * max(abs(a), 1e-12)


@given(graphs(), graphs(), st.integers(1, 4), st.integers(1, 3),
       st.sampled_from(["sum", "average", "norm"]))
def test_jk_additivity(g, h, L, R, scaling):
    plain, layers = pair_kernel(g, h, ArchConfig(L, R, scaling, False), return_layers=True)
    jk = pair_kernel(g, h, ArchConfig(L, R, scaling, True))
    assert plain == layers[-1]
    assert jk == math.fsum(layers)
    for l in range(1, L + 1):
        assert layers[l] == pair_kernel(g, h, ArchConfig(l, R, scaling, False))


@given(graphs(), graphs(), st.integers(1, 3), st.integers(1, 2),
       st.floats(1e-3, 1e3))
def test_norm_scaling_scale_invariance(g, h, L, R, c):
    arch = ArchConfig(L, R, "norm", False)
    a = pair_kernel(g, h, arch)
    b = pair_kernel(g.with_features(c * g.features), h.with_features(c * h.features), arch)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        pair_kernel(Graph.from_edges(1, []), Graph.from_edges(1, [], np.ones((1, 2))),
                    ArchConfig())


# -- Gram matrices -----------------------------------------------------------------

def test_single_graph_gram():
    ds = LabeledDataset([Graph.from_edges(2, [(0, 1)])], [0], 1)
    gm = gram_matrix(ds, ArchConfig())
    assert gm.values.shape == (1, 1) and gm.values[0, 0] > 0


@given(st.integers(0, 2**31), archs, st.integers(2, 30))
def test_gram_psd_and_symmetric(seed, arch, n):
    ds = random_dataset(np.random.default_rng(seed), n, positive=arch.scaling == "norm")
    k = gram_matrix(ds, arch).values
    assert np.array_equal(k, k.T)
    eig = np.linalg.eigvalsh(k)
    assert eig[0] >= -1e-8 * eig[-1]


def test_gram_psd_size_50():
    ds = random_dataset(np.random.default_rng(11), 50, max_nodes=8)
    eig = np.linalg.eigvalsh(gram_matrix(ds, ArchConfig(3, 2, "average", True)).values)
    assert eig[0] >= -1e-8 * eig[-1]


def test_gram_independent_of_workers():
    ds = random_dataset(np.random.default_rng(5), 12)
    arch = ArchConfig(2, 2, "sum")
    a = gram_matrix(ds, arch, workers=1).values
    b = gram_matrix(ds, arch, workers=3).values
    assert a.tobytes() == b.tobytes()
    assert a[3, 7] == pair_kernel(ds.graphs[3], ds.graphs[7], arch)


def test_gram_rejects_unfeaturized():
    from gntk.data import parse_text
    with pytest.raises(ValueError):
        gram_matrix(parse_text("1\n1 0\n0 0\n"), ArchConfig())


def test_normalize_examples():
    gm = GramMatrix(np.array([[4.0, 2.0], [2.0, 1.0]]), ArchConfig())
    np.testing.assert_array_equal(normalize_gram(gm).values, np.ones((2, 2)))
    ds = random_dataset(np.random.default_rng(1), 8)
    n1 = normalize_gram(gram_matrix(ds, ArchConfig()))
    assert n1.normalized
    np.testing.assert_array_equal(np.diag(n1.values), 1.0)
    np.testing.assert_allclose(normalize_gram(n1).values, n1.values, rtol=1e-15)
    with pytest.raises(ValueError):
        normalize_gram(GramMatrix(np.array([[0.0]]), ArchConfig()))


def test_arch_config():
    assert ArchConfig(scaling="avg").scaling == "average"
    for bad in (dict(num_blocks=0), dict(mlp_layers=0), dict(c_sigma=0.0), dict(scaling="max")):
        with pytest.raises(ValueError):
            ArchConfig(**bad)
    assert ArchConfig().fingerprint() != ArchConfig(c_sigma=2.0000001).fingerprint()
    assert ArchConfig(scaling="avg").fingerprint() == ArchConfig(scaling="average").fingerprint()


# -- cache -----------------------------------------------------------------------

def test_cache_round_trip_bit_identical(tmp_path):
    ds = random_dataset(np.random.default_rng(2), 9)
    arch = ArchConfig(2, 1, "average", True)
    gm = gram_matrix(ds, arch)
    path = cache.cache_path(tmp_path, ds.content_hash(), arch)
    cache.save_gram(path, gm)
    back = cache.load_gram(path, arch)
    assert back.values.tobytes() == gm.values.tobytes()
    raw = path.read_bytes()
    assert raw[:8] == b"GNTKGRAM" and int.from_bytes(raw[16:24], "little") == 9
    assert len(raw) == 16 + 8 + 32 + 8 * 81


def test_cache_rejects_mismatch(tmp_path):
    gm = GramMatrix(np.eye(2), ArchConfig())
    path = tmp_path / "k.gram"
    cache.save_gram(path, gm)
    with pytest.raises(cache.CacheMismatch):
        cache.load_gram(path, ArchConfig(num_blocks=3))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(cache.CacheMismatch):
        cache.load_gram(path, ArchConfig())
    path.write_bytes(b"nonsense")
    with pytest.raises(cache.CacheMismatch):
        cache.load_gram(path, ArchConfig())

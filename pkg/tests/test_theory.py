"""Generalisation-bound quantities under the single-block norm-scaled kernel."""
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import LinAlgError

from conftest import random_dataset
from gntk.data import Graph, LabeledDataset
from gntk.kernel import pair_kernel, self_diagonals
from gntk.theory import (THEORY_ARCH, SyntheticLabelSpec, aggregated_unit_features,
                         arcsin_series_part, arcsin_series_tail_bound, bound_report,
                         check_theorem2, check_theorem3, quad_form, synth_labels, theorem1_bound,
                         theory_kernel)


def single(vec):
    return Graph.from_edges(1, [], np.atleast_2d(np.asarray(vec, dtype=float)))


def unit_pair(lam):
    return single([1.0, 0.0]), single([lam, math.sqrt(1 - lam * lam)])


def test_aggregated_features_are_unit_norm():
    g = Graph.random(1, 5, 3)
    np.testing.assert_allclose(np.linalg.norm(aggregated_unit_features(g), axis=1), 1.0)
    np.testing.assert_allclose(self_diagonals(g, THEORY_ARCH)[0][0], 1.0, rtol=1e-14)


@pytest.mark.parametrize("lam", [-0.9, -0.3, 0.0, 0.4, 0.8, 1.0])
def test_single_node_kernel(lam):
    g, h = unit_pair(lam)
    angle = math.pi - math.acos(lam)
    # theta = lam * sigma_dot + sigma_new with the c_sigma = 1 closed forms
    expected = lam * angle / (2 * math.pi) + (lam * angle + math.sqrt(1 - lam * lam)) / (2 * math.pi)
    assert pair_kernel(g, h, THEORY_ARCH) == pytest.approx(expected, abs=1e-14)


def test_single_node_perfect_correlation_is_one():
    g, h = unit_pair(1.0)
    assert pair_kernel(g, h, THEORY_ARCH) == pytest.approx(1.0, abs=1e-15)
    ds = LabeledDataset([g], [0], 1)
    trace, bound, holds = check_theorem3(theory_kernel(ds), ds)
    assert trace == pytest.approx(1.0) and bound == 2.0 and holds


def test_zero_aggregated_feature_rejected():
    ds = LabeledDataset([Graph.from_edges(2, [], np.array([[1.0, 0.0], [0.0, 0.0]]))], [0], 1)
    with pytest.raises(ValueError, match="norm"):
        theory_kernel(ds)


def test_quad_form_examples():
    y = np.array([1.0, -2.0, 0.5])
    assert quad_form(np.eye(3), y) == pytest.approx(float(y @ y))
    assert quad_form(2 * np.eye(3), np.ones(3)) == pytest.approx(1.5)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 7))
    k = x @ x.T
    y = rng.standard_normal(5)
    assert quad_form(k, y) == pytest.approx(float(y @ np.linalg.inv(k) @ y), rel=1e-10)
    with pytest.raises(LinAlgError, match="ridge"):
        quad_form(np.ones((2, 2)), np.ones(2))
    assert quad_form(np.ones((2, 2)), np.ones(2), ridge=1.0) == pytest.approx(2 / 3)


@given(st.integers(0, 2**31), st.integers(2, 8))
def test_quad_form_is_min_norm_interpolant(seed, n):
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((n, n + 3))  # full row rank feature map
    y = rng.standard_normal(n)
    w, *_ = np.linalg.lstsq(phi, y, rcond=None)
    np.testing.assert_allclose(phi @ w, y, atol=1e-9)
    assert quad_form(phi @ phi.T, y) == pytest.approx(float(w @ w), rel=1e-7)


def test_synth_label_examples():
    g = Graph.from_edges(3, [(0, 1)], np.abs(np.random.default_rng(4).standard_normal((3, 2))) + 0.1)
    ds = LabeledDataset([g, single([0.3, 0.7])], [0, 0], 1)
    e1 = np.array([1.0, 0.0])
    lin = synth_labels(ds, SyntheticLabelSpec(1.0, e1))
    assert lin[0] == pytest.approx(aggregated_unit_features(g)[:, 0].sum())
    zero = synth_labels(ds, SyntheticLabelSpec(0.0, e1, [(0.0, e1), (0.0, e1)]))
    np.testing.assert_array_equal(zero, 0.0)
    s = single([0.6, 0.8])
    quartic = synth_labels(LabeledDataset([s], [0], 1),
                           SyntheticLabelSpec(0.0, e1, [(1.0, aggregated_unit_features(s)[0])]))
    assert quartic[0] == pytest.approx(1.0)


def test_label_bound():
    assert SyntheticLabelSpec(1.0, np.array([0.6, 0.8])).bound() == pytest.approx(2.0)
    spec = SyntheticLabelSpec(-0.5, np.array([2.0, 0.0]),
                              [(1.0, np.array([0.0, 1.0])), (2.0, np.array([1.0, 1.0]))])
    expected = 2 * 0.5 * 2 + math.sqrt(2 * math.pi) * (1 * 1 + 3 * 2 * 2.0 ** 2)
    assert spec.bound() == pytest.approx(expected)


def test_theorem2_linear_labels_hold():
    ds = random_dataset(np.random.default_rng(3), 8, positive=True)
    lhs, rhs, holds = check_theorem2(ds, SyntheticLabelSpec(1.0, np.array([0.0, 0.6, 0.8])))
    assert holds and rhs == pytest.approx(2.0) and lhs > 0


@st.composite
def label_specs(draw, d):
    def vec():
        return np.array(draw(st.lists(st.floats(-2, 2), min_size=d, max_size=d)))
    l_max = draw(st.integers(0, 3))
    pairs = [(draw(st.floats(-3, 3)), vec()) for _ in range(l_max)]
    return SyntheticLabelSpec(draw(st.floats(-3, 3)), vec(), pairs)


@given(st.integers(0, 2**31), st.integers(3, 8), st.integers(2, 4), st.data())
@settings(max_examples=60)
def test_theorem2_holds_on_synthetic_labels(seed, n, d, data):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, n, max_nodes=5, feature_dim=d)
    spec = data.draw(label_specs(d))
    lhs, rhs, holds = check_theorem2(ds, spec)
    assert holds, (lhs, rhs)


@given(st.integers(0, 2**31), st.integers(1, 20), st.integers(1, 5))
def test_theorem3_trace_bound(seed, n, max_nodes):
    ds = random_dataset(np.random.default_rng(seed), n, max_nodes=max_nodes)
    trace, bound, holds = check_theorem3(theory_kernel(ds), ds)
    assert bound == 2 * n * ds.max_nodes ** 2
    assert holds and trace > 0


def test_theorem3_bound_value_for_five_node_graphs():
    ds = LabeledDataset([Graph.random(i, 5, 2) for i in range(4)], [0] * 4, 1)
    assert check_theorem3(np.eye(4), ds)[1] == 200


def test_theorem3_on_mutag(mutag):
    trace, bound, holds = check_theorem3(theory_kernel(mutag), mutag)
    assert holds and bound == 2 * 188 * 28 ** 2


def test_theorem1_bound_values():
    assert theorem1_bound(np.eye(100), np.zeros(100), 0.5) == pytest.approx(0.2497, abs=1e-4)
    assert theorem1_bound(np.eye(10), np.zeros(10), 0.1) == pytest.approx(
        3 * math.sqrt(math.log(20) / 20))
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            theorem1_bound(np.eye(2), np.ones(2), bad)
    # with quad_form * trace growing like n the data term shrinks like 1/sqrt(n)
    values = [theorem1_bound(np.eye(n), np.ones(n) / math.sqrt(n), 0.05) for n in (10, 100, 1000)]
    assert values[0] > values[1] > values[2]


def test_bound_report_serialisation():
    ds = random_dataset(np.random.default_rng(9), 6, positive=True)
    spec = SyntheticLabelSpec(1.0, np.array([1.0, 0.0, 0.0]))
    rep = bound_report(ds, spec=spec, delta=0.1)
    d = json.loads(rep.to_json())
    assert d["n"] == 6 and d["theorem2_rhs"] == pytest.approx(2.0)
    assert rep.quad_form >= 0 and rep.trace > 0
    assert "population loss bound" in rep.table()


@pytest.mark.parametrize("lam", np.linspace(-0.75, 0.75, 13))
def test_arcsin_series_matches_closed_form(lam):
    closed = lam * (math.pi - math.acos(lam)) / (2 * math.pi)
    assert abs(arcsin_series_part(lam) - closed) <= 1e-10


@given(st.floats(-0.999, 0.999))
def test_arcsin_series_within_tail_bound(lam):
    closed = lam * (math.pi - math.acos(lam)) / (2 * math.pi)
    err = abs(float(arcsin_series_part(lam)) - closed)
    assert err <= float(arcsin_series_tail_bound(lam)) + 1e-14


def test_single_node_theta_split_into_series_part():
    for lam in (-0.5, 0.2, 0.7):
        g, h = unit_pair(lam)
        sigma_new = (lam * (math.pi - math.acos(lam)) + math.sqrt(1 - lam * lam)) / (2 * math.pi)
        first = pair_kernel(g, h, THEORY_ARCH) - sigma_new  # Sigma0 * sigma_dot
        assert first == pytest.approx(float(arcsin_series_part(lam)), abs=1e-10)

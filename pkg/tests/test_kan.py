import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from molkan import autodiff as ad
from molkan.autodiff import DimensionError, Tape
from molkan.kan import (FAMILIES, BSplineKanLayer, FastKanLayer, KanNetwork, SkanLayer, bspline_basis,
                        bspline_bases, make_layer, parameter_count, rbf_centers, uniform_knots)


def cox_de_boor(i, d, x, t):
    """Textbook recursion, one basis at a time; 0/0 terms are dropped."""
    if d == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    out = 0.0
    if t[i + d] != t[i]:
        out += (x - t[i]) / (t[i + d] - t[i]) * cox_de_boor(i, d - 1, x, t)
    if t[i + d + 1] != t[i + 1]:
        out += (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * cox_de_boor(i + 1, d - 1, x, t)
    return out


def test_knot_vector_shape_and_spacing():
    t = uniform_knots(8, 3)
    assert t.size == 8 + 2 * 3 + 1
    np.testing.assert_allclose(np.diff(t), 0.5)
    assert t[3] == -2.0 and t[-4] == 2.0


def test_degree_zero_is_an_indicator():
    t = uniform_knots(4, 0)
    b = bspline_basis(-0.3, t, 0)
    assert b.tolist() == [0.0, 1.0, 0.0, 0.0]


def test_cardinal_cubic_values():
    t = uniform_knots(8, 3)
    h = t[1] - t[0]
    # the cubic spanning t[j]..t[j+4] peaks at its centre knot t[j+2]
    j = 4
    centre = t[j + 2]
    assert bspline_basis(centre, t, 3)[j] == pytest.approx(2 / 3, abs=1e-15)
    assert bspline_basis(centre + h, t, 3)[j] == pytest.approx(1 / 6, abs=1e-15)
    assert bspline_basis(centre - h, t, 3)[j] == pytest.approx(1 / 6, abs=1e-15)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("grid", [3, 5, 8])
def test_basis_matches_recursive_and_scipy_oracles(k, grid):
    t = uniform_knots(grid, k)
    for x in np.linspace(-1.999, 1.999, 37):
        ours = bspline_basis(x, t, k)
        rec = [cox_de_boor(i, k, x, t) for i in range(len(t) - k - 1)]
        ref = [BSpline.basis_element(t[i:i + k + 2], extrapolate=False)(x) for i in range(len(t) - k - 1)]
        np.testing.assert_allclose(ours, rec, atol=1e-13)
        np.testing.assert_allclose(ours, np.nan_to_num(ref), atol=1e-13)


@given(st.floats(-2.0, 2.0), st.integers(1, 5), st.integers(1, 12))
def test_partition_of_unity(x, k, grid):
    assert abs(bspline_basis(x, uniform_knots(grid, k), k).sum() - 1.0) <= 1e-12


def test_out_of_range_inputs_are_clamped():
    t = uniform_knots(5, 3)
    np.testing.assert_array_equal(bspline_basis(7.0, t, 3), bspline_basis(2.0, t, 3))
    np.testing.assert_array_equal(bspline_basis(-9.0, t, 3), bspline_basis(-2.0, t, 3))


def test_tensor_bases_match_scalar_bases():
    t = uniform_knots(6, 3)
    x = np.random.default_rng(0).uniform(-3, 3, (5, 2))
    out = bspline_bases(ad.constant(x), t, 3).data
    for idx in np.ndindex(5, 2):
        np.testing.assert_allclose(out[idx], bspline_basis(x[idx], t, 3), atol=1e-14)


def test_rbf_term_closed_forms():
    layer = SkanLayer(1, 1, n_rbf=1)
    layer.base_weight.value[:] = 0.0
    layer.rbf_weight.value[:] = 2.0
    layer.log_bandwidths.value[:] = 0.0
    assert layer(Tape(), np.zeros((1, 1))).item() == 2.0
    layer.rbf_weight.value[:] = 1.0
    assert layer(Tape(), np.ones((1, 1))).item() == pytest.approx(math.exp(-0.5), abs=1e-15)


def test_zero_rbf_weights_leave_the_silu_branch():
    layer = SkanLayer(3, 3, n_rbf=4)
    layer.rbf_weight.value[:] = 0.0
    layer.base_weight.value[:] = np.eye(3)
    x = np.random.default_rng(1).normal(size=(4, 3))
    np.testing.assert_allclose(layer(Tape(), x).data, x / (1 + np.exp(-x)), atol=1e-15)


def test_skan_with_frozen_basis_equals_fastkan():
    fast = FastKanLayer(4, 3, n_rbf=6, seed=2)
    skan = SkanLayer(4, 3, n_rbf=6, seed=9)
    skan.base_weight.value = fast.base_weight.value.copy()
    skan.rbf_weight.value = fast.rbf_weight.value.copy()
    skan.centers.value = fast.centers.copy()
    skan.log_bandwidths.value = np.log(np.full(6, fast.bandwidth))
    x = np.random.default_rng(0).uniform(-3, 3, (10, 4))
    np.testing.assert_allclose(skan(Tape(), x).data, fast(Tape(), x).data, atol=1e-12, rtol=0)


@pytest.mark.parametrize("family,expected", [("skan", 38), ("bspline_kan", 60), ("fastkan", 30)])
def test_parameter_count_examples(family, expected):
    layer = make_layer(family, 2, 3, n_rbf=4, grid_size=5, spline_order=3)
    enumerated = sum(p.value.size for _, p in layer.named_parameters())
    assert parameter_count(layer) == enumerated == expected


@given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 10), st.integers(1, 5))
def test_parameter_count_closed_forms(n_in, n_out, m, k):
    assert parameter_count(SkanLayer(n_in, n_out, n_rbf=m)) == n_in * n_out * m + n_in * n_out + 2 * m
    assert parameter_count(FastKanLayer(n_in, n_out, n_rbf=m)) == n_in * n_out * m + n_in * n_out
    assert (parameter_count(BSplineKanLayer(n_in, n_out, grid_size=m, spline_order=k))
            == n_in * n_out * (m + k) + 2 * n_in * n_out)


@given(st.integers(1, 40), st.integers(1, 40))
def test_skan_smaller_than_bspline_at_defaults(n_in, n_out):
    # 8 RBFs vs 11 spline coefficients per edge; the 16 shared scalars only win for tiny layers
    smaller = parameter_count(SkanLayer(n_in, n_out, n_rbf=8)) < parameter_count(BSplineKanLayer(n_in, n_out, 8, 3))
    assert smaller == (n_in * n_out > 4)


def test_network_count_is_sum_of_layers():
    net = KanNetwork([3, 5, 2], "skan", n_rbf=4)
    assert parameter_count(net) == (3 * 5 * 4 + 15 + 8) + (5 * 2 * 4 + 10 + 8)


def test_init_is_deterministic_and_bounded():
    for family in FAMILIES:
        a, b = make_layer(family, 5, 7, seed=3), make_layer(family, 5, 7, seed=3)
        bound = math.sqrt(6 / 12)
        for (name, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
            assert np.array_equal(p.value, q.value)
            if name in ("base_weight", "rbf_weight", "spline_coeffs"):
                assert np.abs(p.value).max() <= bound


def test_skan_initial_centers_and_widths():
    layer = SkanLayer(2, 2, n_rbf=5)
    np.testing.assert_allclose(layer.centers.value, [-2, -1, 0, 1, 2])
    np.testing.assert_allclose(layer.bandwidths, 1.0)
    np.testing.assert_allclose(rbf_centers(8), np.linspace(-2, 2, 8))


def test_bandwidths_stay_positive_under_any_update():
    layer = SkanLayer(2, 2, n_rbf=3)
    layer.log_bandwidths.value[:] = [-50.0, 0.0, 50.0]
    assert (layer.bandwidths > 0).all()


@pytest.mark.parametrize("family", FAMILIES)
def test_layer_gradients(family):
    layer = make_layer(family, 4, 4, n_rbf=6, grid_size=5, seed=1)
    x = np.random.default_rng(5).uniform(-2, 2, (7, 4))
    rep = ad.grad_check(lambda t: ad.mean(layer(t, x)), layer.parameters())
    assert rep.max_rel_error <= 1e-4
    if family == "skan":
        assert set(rep.per_parameter) >= {"centers", "log_bandwidths"}


@pytest.mark.parametrize("family", FAMILIES)
def test_input_gradient(family):
    layer = make_layer(family, 3, 2, seed=0)
    x = ad.Parameter(np.random.default_rng(1).uniform(-1.9, 1.9, (4, 3)), "x")
    rep = ad.grad_check(lambda t: ad.sum_(layer(t, t.param(x))), [x])
    assert rep.max_rel_error <= 1e-4


def test_families_share_shape_contract():
    x = np.random.default_rng(0).normal(size=(9, 4))
    shapes = {f: KanNetwork([4, 6, 3], f)(Tape(), x).shape for f in FAMILIES}
    assert set(shapes.values()) == {(9, 3)}


def test_dimension_errors():
    with pytest.raises(DimensionError):
        SkanLayer(3, 2)(Tape(), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        SkanLayer(0, 2)
    with pytest.raises(ValueError):
        make_layer("mystery", 2, 2)
    with pytest.raises(ValueError):
        KanNetwork([3])

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from svlm.errors import DegenerateNormalizer, HorizonOverflow
from svlm.grid import reference_grid
from svlm.kernel import (
    coeff,
    normalizer_z,
    plan_for_grid,
    plan_from_horizon,
    split_time,
    tail_bound,
    truncation_horizon,
    weight_a,
    weights_vector,
)
from svlm.theory import exact_polygonal_cov

from conftest import single_site


def test_coeff_examples():
    assert coeff(0, 0.9) == 1.0
    assert coeff(-3, 0.75) == 0.0
    assert coeff(1, 0.75) == pytest.approx(0.5946035575, rel=1e-10)


@given(st.integers(0, 10**6), st.floats(0.51, 3.0), st.floats(0.51, 3.0))
def test_coeff_monotone(j, d1, d2):
    assert coeff(j + 1, d1) <= coeff(j, d1)
    lo, hi = sorted((d1, d2))
    if j >= 1:
        assert coeff(j, hi) <= coeff(j, lo)


def test_weight_examples():
    assert weight_a(4, 1, 1.0, 0.5) == pytest.approx(1.5)
    assert weight_a(4, 1, 1.0, 0.625) == pytest.approx(5 / 3)
    assert weight_a(4, 7, 0.75, 0.5) == 0.0


def test_split_time_snaps_lattice():
    assert split_time(10, 0.3) == (3, 0.0)
    K, f = split_time(4, 0.625)
    assert K == 2 and f == pytest.approx(0.5)


@given(st.integers(1, 64), st.integers(-40, 70), st.floats(0.55, 2.0), st.floats(0, 1), st.floats(0, 1))
def test_weight_monotone_in_t(n, j, d, t1, t2):
    lo, hi = sorted((t1, t2))
    assert weight_a(n, j, d, lo) <= weight_a(n, j, d, hi) + 1e-12


@given(st.integers(1, 64), st.integers(-40, 70), st.floats(0.55, 2.0), st.integers(1, 63))
def test_weight_continuous_at_lattice(n, j, d, k):
    k = k % n + 1 if k > n else k
    t = k / n
    eps = 1e-9
    assert abs(weight_a(n, j, d, t) - weight_a(n, j, d, min(t + eps, 1.0))) < 1e-6
    assert abs(weight_a(n, j, d, t) - weight_a(n, j, d, t - eps)) < 1e-6


@given(st.integers(1, 50), st.floats(0.55, 2.0), st.floats(0, 1))
def test_weight_sup_at_one(n, d, t):
    K, frac = split_time(n, t)
    js = range(-3 * n, K + 3)
    vals = [weight_a(n, j, d, t) for j in js]
    expected = sum(k ** -d for k in range(1, K + 1)) + frac * (K + 1) ** -d
    assert max(vals) == pytest.approx(weight_a(n, 1, d, t), rel=1e-12, abs=1e-15)
    assert weight_a(n, 1, d, t) == pytest.approx(expected, rel=1e-12, abs=1e-15)


@given(st.integers(1, 40), st.floats(0.55, 2.0), st.floats(0, 1))
def test_weights_vector_matches_scalar(n, d, t):
    js, a = weights_vector(n, d, t, -2 * n)
    ref = np.array([weight_a(n, int(j), d, t) for j in js])
    np.testing.assert_allclose(a, ref, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("d", [0.6, 0.75, 1.0, 1.5])
@pytest.mark.parametrize("n, t", [(16, 1.0), (32, 0.37), (100, 0.5)])
def test_sum_of_squared_weights_matches_exact_variance(d, n, t):
    # truncated at J, the weights run over j = 1 - J .. floor(nt) + 1
    J = 4096
    g = single_site(d)
    js, a = weights_vector(n, d, t, -J - n)
    K, frac = split_time(n, t)
    # drop innovations older than the horizon: recompute with coefficients cut at J
    js_all = np.arange(-J - n, K + 2)
    cut = np.zeros(len(js_all))
    for idx, j in enumerate(js_all):
        ks = np.arange(1, K + 1)
        lag = ks - j
        v = np.where((lag >= 0) & (lag <= J), (np.maximum(lag, 0) + 1.0) ** -d, 0.0)
        lag1 = K + 1 - j
        extra = frac * (lag1 + 1.0) ** -d if 0 <= lag1 <= J else 0.0
        cut[idx] = v.sum() + extra
    exact = exact_polygonal_cov(g, 0, 0, n, t, t, horizon=J)
    assert np.sum(cut**2) == pytest.approx(exact, rel=1e-10)


@pytest.mark.parametrize("d", [0.75, 1.0, 1.5])
def test_sum_of_squared_weights_untruncated(d):
    # the full sum converges to the exact variance as the lower limit recedes
    n, t = 24, 0.8
    exact = exact_polygonal_cov(single_site(d), 0, 0, n, t, t)
    js, a = weights_vector(n, d, t, -(2**21))
    tail = np.sum(a**2)
    # missing mass beyond j_min is bounded by n^2 * sum_{j > 2^21} j^(-2d)
    slack = n**2 * (2**21) ** (1 - 2 * d) / (2 * d - 1)
    assert tail <= exact * (1 + 1e-12)
    assert exact - tail <= slack


def test_truncation_examples():
    assert truncation_horizon(1.0, 1.0, 1e-3).horizon == 1000
    assert truncation_horizon(0.75, 1.0, 1e-3).horizon == 4_000_000
    with pytest.raises(HorizonOverflow):
        truncation_horizon(0.51, 1.0, 1e-3, j_max=10**9)


@given(st.floats(0.55, 3.0), st.floats(0.1, 10.0), st.floats(1e-6, 1e-1))
def test_truncation_plan_invariants(d, s2, tol):
    try:
        plan = truncation_horizon(d, s2, tol)
    except HorizonOverflow:
        return
    assert plan.abs_tail_bound <= tol
    assert plan.abs_tail_bound == pytest.approx(tail_bound(plan.horizon, d, s2))
    if plan.horizon > 1:
        assert tail_bound(plan.horizon - 1, d, s2) > tol


def test_plan_for_grid_overflows_on_reference():
    # d = 0.6 at the default relative tolerance needs J far beyond J_max
    with pytest.raises(HorizonOverflow):
        plan_for_grid(reference_grid())


def test_plan_from_horizon_reports_worst_site(ref_grid):
    plan = plan_from_horizon(ref_grid, 65536)
    assert plan.horizon == 65536
    assert plan.abs_tail_bound == pytest.approx(65536 ** (1 - 1.2) / 0.2)


def test_normalizer_examples():
    assert normalizer_z(100, 0.75) == pytest.approx(31.6227766, rel=1e-9)
    assert normalizer_z(100, 1.0) == pytest.approx(46.0517019, rel=1e-9)
    assert normalizer_z(100, 1.5) == pytest.approx(10.0)
    with pytest.raises(DegenerateNormalizer):
        normalizer_z(1, 1.0)
    assert normalizer_z(100, 0.7) / normalizer_z(100, 0.9) == pytest.approx(100**0.2)
    assert math.isfinite(normalizer_z(2, 1.0))

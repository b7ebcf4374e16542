import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from svlm.errors import (
    AsymmetricCovariance,
    ConfigError,
    ExponentOutOfRange,
    MixedRegime,
    NonPositiveWeight,
    NotPSD,
)
from svlm.grid import (
    EPS_PSD,
    RegimeKind,
    build_grid,
    check_integrability,
    classify_regime,
    grid_from_spec,
)

from conftest import single_site


def test_single_point_grid():
    g = single_site(0.75)
    assert g.m == 1
    assert g.innov_var[0] == 1.0


def test_cauchy_schwarz_violation_rejected():
    with pytest.raises(NotPSD):
        build_grid([0, 1], [0.5, 0.5], [0.7, 0.7], [[1, 1.2], [1.2, 1]])


def test_reference_grid_is_valid(ref_grid):
    assert ref_grid.m == 3
    lam = np.linalg.eigvalsh(ref_grid.innov_cov)
    assert lam[0] >= -EPS_PSD * lam.sum()
    np.testing.assert_allclose(ref_grid.innov_cov[0, 2], np.exp(-1.0))


@pytest.mark.parametrize(
    "kwargs, err",
    [
        (dict(weights=[0.5, 0.0]), NonPositiveWeight),
        (dict(d=[0.5, 0.7]), ExponentOutOfRange),
        (dict(cov=[[1, 0.3], [0.2, 1]]), AsymmetricCovariance),
        (dict(weights=[1.0]), ConfigError),
    ],
)
def test_validation_errors(kwargs, err):
    args = dict(points=[0, 1], weights=[0.5, 0.5], d=[0.7, 0.8], cov=[[1, 0.1], [0.1, 1]])
    args.update(kwargs)
    with pytest.raises(err):
        build_grid(args["points"], args["weights"], args["d"], args["cov"])


def test_not_psd_rejected():
    c = np.array([[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1]])
    with pytest.raises(NotPSD):
        build_grid([0, 1, 2], [1, 1, 1], [0.7] * 3, c)


def test_arrays_are_read_only(ref_grid):
    with pytest.raises(ValueError):
        ref_grid.d_values[0] = 0.8


@pytest.mark.parametrize(
    "d, kind",
    [((0.6, 0.75, 0.9), RegimeKind.LONG), ((1, 1, 1), RegimeKind.BOUNDARY), ((1.5, 2.0), RegimeKind.SHORT)],
)
def test_classify_regime(d, kind):
    m = len(d)
    g = build_grid(np.arange(m), np.ones(m), d, np.eye(m))
    r = classify_regime(g)
    assert r.kind is kind
    assert r.d_max == max(d)


def test_mixed_regime():
    with pytest.raises(MixedRegime):
        classify_regime(build_grid([0, 1], [1, 1], [0.8, 1.2], np.eye(2)))


def test_integrability_single_site():
    rep = check_integrability(single_site(0.75))
    assert rep.var_integral == pytest.approx(2.0)
    assert rep.long_sq == pytest.approx(16.0)
    assert rep.long_mixed == pytest.approx(8.0)
    assert not rep.division_blowup


def test_integrability_blowup_near_half():
    rep = check_integrability(single_site(0.5 + 1e-9))
    assert rep.division_blowup
    assert rep.blowup_sites == (0,)


def test_integrability_reference_finite(ref_grid):
    rep = check_integrability(ref_grid, p=4)
    vals = [rep.energy, rep.var_integral, rep.long_sq, rep.long_mixed]
    assert all(np.isfinite(v) for v in vals)
    w = 1 / 3
    assert rep.var_integral == pytest.approx(w * (1 / 0.2 + 1 / 0.5 + 1 / 0.8))


def test_integrability_short_regime_has_no_long_integrals():
    rep = check_integrability(build_grid([0], [1], [1.5], [[1.0]]))
    assert rep.long_sq is None and rep.long_mixed is None


def test_grid_from_spec_forms():
    g = grid_from_spec({"points": [0, 0.5, 1], "weights": "uniform", "d": {"ramp": [0.6, 0.9]},
                        "cov": {"kernel": "exp", "variance": 2.0, "scale": 0.5}})
    np.testing.assert_allclose(g.d_values, [0.6, 0.75, 0.9])
    np.testing.assert_allclose(g.innov_cov[0, 1], 2 * np.exp(-1.0))
    g = grid_from_spec({"points": [0, 1], "d": 0.7})
    np.testing.assert_array_equal(g.innov_cov, np.eye(2))
    with pytest.raises(ConfigError):
        grid_from_spec({"d": 0.7})


def test_to_dict_round_trip(ref_grid):
    g = grid_from_spec(ref_grid.to_dict())
    np.testing.assert_array_equal(g.innov_cov, ref_grid.innov_cov)


@st.composite
def long_grids(draw, min_m=1, max_m=5):
    m = draw(st.integers(min_m, max_m))
    d = draw(st.lists(st.floats(0.55, 0.95), min_size=m, max_size=m))
    w = draw(st.lists(st.floats(0.1, 2.0), min_size=m, max_size=m))
    A = np.array(draw(st.lists(st.floats(-1, 1), min_size=m * m, max_size=m * m))).reshape(m, m)
    return build_grid(np.arange(m) / max(m - 1, 1), w, d, A @ A.T + 0.1 * np.eye(m))


@given(long_grids(min_m=2), st.randoms())
def test_regime_permutation_invariant(g, rnd):
    perm = list(range(g.m))
    rnd.shuffle(perm)
    assert classify_regime(g.permuted(perm)) == classify_regime(g)


@given(long_grids(), st.integers(0, 4), st.one_of(st.just(0.0), st.floats(1e-6, 0.99)))
def test_integrability_monotone_in_variance(g, k, shrink):
    i = k % g.m
    f = np.ones(g.m)
    f[i] = np.sqrt(shrink)
    smaller = build_grid(g.points, g.quad_weights, g.d_values, g.innov_cov * np.outer(f, f))
    a, b = check_integrability(g), check_integrability(smaller)
    for name in ("energy", "var_integral", "long_sq", "long_mixed"):
        assert getattr(b, name) <= getattr(a, name) * (1 + 1e-12)


@given(long_grids())
def test_valid_grids_are_psd(g):
    lam = np.linalg.eigvalsh(g.innov_cov)
    assert lam[0] >= -EPS_PSD * np.trace(g.innov_cov)

import numpy as np
import pytest

from svlm.errors import DomainError, UnderpoweredRun
from svlm.grid import build_grid
from svlm.limit import build_sampler, sample_limit
from svlm.theory import KernelKind
from svlm.verify import (
    VerificationReport,
    check_fclt,
    check_gamma_asymptotics,
    check_moment_bounds,
    check_partial_sum_convergence,
    check_polygonal_equivalence,
    check_selfsimilarity,
    compare_cov,
    empirical_cov,
    increment_moments,
    ks_critical,
    ks_statistic,
    variance_bound_g,
)

from conftest import single_site, two_sites


def test_report_pass_logic():
    rep = VerificationReport("x", {})
    rep.add("a", 1.0, 1.0, 0.1, True)
    rep.add("info", 5.0, 1.0, None, False, graded=False)
    assert rep.passed and rep.mc_stderr is None
    rep.add("b", 2.0, 1.0, 0.1, False)
    assert not rep.passed and [e["label"] for e in rep.failures] == ["b"]
    assert "FAIL" in rep.table()
    assert "runtime" not in rep.to_dict()


def test_gamma_check_informational_small_h(ref_grid):
    rep = check_gamma_asymptotics(ref_grid, h_list=[1, 10])
    assert rep.passed
    assert not any(e["graded"] for e in rep.entries)


def test_gamma_check_pair_with_small_exponent_passes():
    g = two_sites(0.6, 0.6, rho=0.5)
    assert check_gamma_asymptotics(g, h_list=[10**5]).passed


def test_gamma_check_boundary():
    rep = check_gamma_asymptotics(single_site(1.0), h_list=[10**6])
    assert rep.passed
    assert abs(rep.entries[0]["observed"] - 1) <= 0.15


def test_gamma_check_rejects_short():
    with pytest.raises(DomainError):
        check_gamma_asymptotics(single_site(1.5))


def test_partial_sum_boundary_value():
    rep = check_partial_sum_convergence(single_site(1.0), 1.0, 1.0, [2**14])
    final = [e for e in rep.entries if e["label"].endswith("n=16384")][0]
    assert abs(final["observed"] - 1) <= 0.20


def test_partial_sum_zero_time_excluded(ref_grid):
    rep = check_partial_sum_convergence(ref_grid, 0.0, 0.0, [64, 128, 256])
    assert rep.entries == [] and rep.passed


def test_partial_sum_gap_rate():
    # the relative gap falls like n^(d - 1) for a single long-memory site
    g = single_site(0.8)
    rep = check_partial_sum_convergence(g, 1.0, 0.5, [2**10, 2**12, 2**14])
    gaps = [abs(e["observed"] - 1) for e in rep.entries if "n=" in e["label"]]
    assert gaps[2] / gaps[1] == pytest.approx(4**-0.2, rel=0.05)


def test_polygonal_equivalence(ref_grid):
    rep = check_polygonal_equivalence(ref_grid, 16, 0.25, 0.75)
    assert all(e["observed"] == pytest.approx(1.0, abs=1e-15) for e in rep.entries)
    assert not any(e["graded"] for e in rep.entries)
    assert check_polygonal_equivalence(ref_grid, 2**12, 0.51, 0.99).passed


def test_empirical_cov_stderr():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4000, 2))
    cov, se = empirical_cov(x)
    np.testing.assert_allclose(cov, np.cov(x, rowvar=False), atol=1e-14)
    # Var(x^2) = 2 for standard normals
    assert se[0, 0] == pytest.approx(np.sqrt(2 / 4000), rel=0.1)
    assert se[0, 1] == pytest.approx(np.sqrt(1 / 4000), rel=0.1)


def test_ks_statistic():
    rng = np.random.default_rng(1)
    x = 2.0 * rng.standard_normal(3000)
    from scipy import stats

    assert ks_statistic(x, 2.0) == pytest.approx(stats.kstest(x / 2.0, "norm").statistic, abs=1e-15)
    assert ks_critical(3000) == pytest.approx(1.6276 / np.sqrt(3000), rel=1e-3)


def test_calibration_on_limit_draws(ref_grid):
    # entries drawn straight from the limit sampler: 3-sigma coverage near nominal
    s = build_sampler(KernelKind.V_LONG, ref_grid, [0.5, 1.0])
    labels = [str(k) for k in range(6)]
    covered = []
    for seed in range(40):
        rep = VerificationReport("cal", {})
        d = sample_limit(s, 1000, seed)
        cov, se = empirical_cov(d.flat())
        compare_cov(rep, cov, se, s.gram.values, labels, 0.0)
        covered += [e["passed"] for e in rep.entries]
    assert np.mean(covered) >= 0.98


def test_fclt_underpowered(ref_grid):
    with pytest.raises(UnderpoweredRun):
        check_fclt(ref_grid, 64, 999, horizon=64)


def test_fclt_zero_sigma_trivially_passes():
    g = build_grid([0, 1], [0.5, 0.5], [0.7, 0.8], np.zeros((2, 2)))
    rep = check_fclt(g, 32, 1000, horizon=32, seed=1, time_grid=[0.5, 1.0])
    assert rep.passed and rep.stochastic
    assert all(e["observed"] == 0 for e in rep.entries)


def test_fclt_small_long_run():
    g = two_sites(0.7, 0.85, rho=0.5)
    rep = check_fclt(g, 128, 1500, horizon=1024, seed=3, time_grid=[0.5, 1.0])
    assert rep.passed
    assert all("mc_stderr" in e for e in rep.entries if "|" in e["label"])


def test_fclt_short_candidates():
    g = two_sites(1.5, 2.0, rho=0.5)
    rep = check_fclt(g, 512, 2000, seed=5, time_grid=[0.5, 1.0])
    assert rep.summary["winner"] == "longrun"
    assert rep.summary["candidates_matched"] == {"wiener": False, "longrun": True}


def test_selfsim(ref_grid):
    rep = check_selfsimilarity(ref_grid, a_list=[1.0, 2.7], mc_a=None)
    assert rep.entries[0]["observed"] == 0.0
    assert rep.passed and not rep.stochastic
    with pytest.raises(DomainError):
        check_selfsimilarity(single_site(1.0))


def test_variance_bound_value():
    assert variance_bound_g(single_site(0.75), 0) == pytest.approx(54.0)


def test_increment_moments_vanish_on_diagonal(ref_grid):
    t = np.linspace(0, 1, 9)
    D2 = increment_moments(ref_grid, 64, t)
    assert np.all(np.diag(D2) == 0)
    assert np.all(D2 >= -1e-12)


def test_moment_bounds_at_small_n(ref_grid):
    rep = check_moment_bounds(ref_grid, [2**8, 2**10], dyadic_depth=4)
    assert all(e["passed"] for e in rep.entries if e["label"].startswith("var bound"))
    bounded = [e for e in rep.entries if e["label"] == "increment ratio bounded"][0]
    assert bounded["passed"]

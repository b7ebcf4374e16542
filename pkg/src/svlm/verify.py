"""Deterministic oracle checks and Monte Carlo comparisons against the limit kernels."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, UnderpoweredRun
from .grid import RegimeKind, SpatialGrid, classify_regime
from .kernel import normalizer_z, plan_for_grid, plan_from_horizon, split_time
from .limit import apply_scaling, build_sampler, sample_limit
from .simulate import Dist, normalize_ensemble, simulate_paths
from .theory import (
    GammaTable,
    KernelKind,
    asymptotic_prediction,
    exact_partial_sum_cov,
    exact_polygonal_cov,
    gamma_asymptotic,
    gamma_h,
    kernel_matrix,
    limit_kernel_V,
)

GAMMA_TOL = {RegimeKind.LONG: (1e5, 0.02), RegimeKind.BOUNDARY: (1e6, 0.15)}
PARTIAL_SUM_TOL = {RegimeKind.LONG: 0.02, RegimeKind.BOUNDARY: 0.20}
FCLT_REL_TOL = {RegimeKind.LONG: 0.10, RegimeKind.BOUNDARY: 0.20, RegimeKind.SHORT: 0.10}
SELFSIM_TOL = 1e-12
MC_SIGMAS = 3.0
KS_LEVEL = 0.01
MIN_REPLICATIONS = 1000


@dataclass
class VerificationReport:
    """Outcome of one check.

    Each entry is a dict with ``label``, ``observed``, ``reference``,
    ``tolerance``, ``passed`` and ``graded``; stochastic checks add
    ``mc_stderr``.  Ungraded entries are informational.
    """

    check_name: str
    config: dict
    entries: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    stochastic: bool = False
    runtime: float = 0.0

    def add(self, label, observed, reference, tolerance, passed, graded=True, **extra):
        e = {
            "label": label,
            "observed": observed,
            "reference": reference,
            "tolerance": tolerance,
            "passed": bool(passed),
            "graded": bool(graded),
        }
        e.update(extra)
        self.entries.append(e)
        return e

    @property
    def passed(self) -> bool:
        return all(e["passed"] for e in self.entries if e["graded"])

    @property
    def failures(self) -> list[dict]:
        return [e for e in self.entries if e["graded"] and not e["passed"]]

    @property
    def observed(self):
        return [e["observed"] for e in self.entries]

    @property
    def reference(self):
        return [e["reference"] for e in self.entries]

    @property
    def tolerance(self):
        return [e["tolerance"] for e in self.entries]

    @property
    def mc_stderr(self):
        if not self.stochastic:
            return None
        return [e.get("mc_stderr") for e in self.entries]

    def to_dict(self) -> dict:
        """Deterministic content only; ``runtime`` is reported separately."""
        return {
            "check_name": self.check_name,
            "config": self.config,
            "pass": self.passed,
            "stochastic": self.stochastic,
            "summary": self.summary,
            "entries": self.entries,
        }

    def table(self, max_rows: int = 40) -> str:
        lines = [f"== {self.check_name}: {'PASS' if self.passed else 'FAIL'}"]
        for k, v in self.summary.items():
            lines.append(f"   {k}: {v}")
        rows = [e for e in self.entries if e["graded"]] or self.entries
        w = max([len(str(e["label"])) for e in rows] + [5])
        lines.append(f"   {'label':<{w}}  {'observed':>14}  {'reference':>14}  {'tol':>10}  ok")
        for e in rows[:max_rows]:
            lines.append(
                f"   {str(e['label']):<{w}}  {_cell(e['observed']):>14}  {_cell(e['reference']):>14}"
                f"  {_cell(e['tolerance']):>10}  {'y' if e['passed'] else 'N'}"
            )
        if len(rows) > max_rows:
            lines.append(f"   ... {len(rows) - max_rows} more entries")
        return "\n".join(lines)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, float, np.floating)):
        return f"{float(x):.6g}"
    if x is None:
        return "-"
    return str(x)[:14]


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.runtime = time.perf_counter() - t0
        return rep

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _pairs(grid: SpatialGrid):
    return [(i, j) for i in range(grid.m) for j in range(grid.m)]


@_timed
def check_gamma_asymptotics(grid: SpatialGrid, h_list=(10, 1000, 10**5, 10**6)) -> VerificationReport:
    regime = classify_regime(grid)
    if regime.kind not in GAMMA_TOL:
        raise DomainError(f"gamma asymptotics are not covered in the {regime.kind.value} regime")
    h_min, tol = GAMMA_TOL[regime.kind]
    rep = VerificationReport("gamma_asymptotics", {"h_list": [int(h) for h in h_list],
                                                   "regime": regime.kind.value})
    for i, j in _pairs(grid):
        if grid.innov_cov[i, j] == 0:
            continue
        for h in h_list:
            h = int(h)
            if h < 2:
                rep.add(f"({i},{j}) h={h}", float(gamma_h(grid, i, j, h)), None, None, True, graded=False)
                continue
            ratio = float(gamma_h(grid, i, j, h) / gamma_asymptotic(grid, i, j, h))
            graded = h >= h_min
            rep.add(f"({i},{j}) h={h}", ratio, 1.0, tol if graded else None,
                    abs(ratio - 1) <= tol if graded else True, graded=graded)
    return rep


@_timed
def check_partial_sum_convergence(grid: SpatialGrid, t: float = 1.0, u: float = 0.5,
                                  n_list=tuple(2**e for e in range(8, 15)),
                                  monotone_over: int = 3) -> VerificationReport:
    """Exact E[S_[nt] S_[nu]] against its leading-order prediction as n grows."""
    regime = classify_regime(grid)
    if regime.kind not in PARTIAL_SUM_TOL:
        raise DomainError(f"covariance asymptotics are not covered in the {regime.kind.value} regime")
    tol = PARTIAL_SUM_TOL[regime.kind]
    n_list = sorted(int(n) for n in n_list)
    rep = VerificationReport("partial_sum_convergence",
                             {"t": t, "u": u, "n_list": n_list, "regime": regime.kind.value})
    nmax = n_list[-1]
    for i, j in _pairs(grid):
        if grid.innov_cov[i, j] == 0:
            continue
        G = GammaTable(grid, i, j, nmax)
        gaps = []
        for n in n_list:
            K, _ = split_time(n, t)
            L, _ = split_time(n, u)
            ex = exact_partial_sum_cov(grid, i, j, K, L, table=G)
            pr = asymptotic_prediction(grid, i, j, n, t, u)
            if pr == 0 and ex == 0:
                gaps.append(None)
                continue
            ratio = ex / pr
            gaps.append(abs(ratio - 1))
            last = n == nmax
            rep.add(f"({i},{j}) n={n}", ratio, 1.0, tol if last else None,
                    abs(ratio - 1) <= tol if last else True, graded=last)
        tail = gaps[-monotone_over:]
        if all(g is not None for g in tail):
            mono = all(b < a for a, b in zip(tail, tail[1:]))
            rep.add(f"({i},{j}) gap decreasing", [round(g, 6) for g in tail], "decreasing", None, mono)
    return rep


@_timed
def check_polygonal_equivalence(grid: SpatialGrid, n: int = 4096, t: float = 0.51, u: float = 0.99,
                                min_graded_n: int = 64) -> VerificationReport:
    """E[zeta_n zeta_n] / E[S S]: the fractional-part terms grow at most linearly in n."""
    if n < 4:
        raise ValueError("n must be at least 4")
    rep = VerificationReport("polygonal_equivalence", {"n": n, "t": t, "u": u})
    K, _ = split_time(n, t)
    L, _ = split_time(n, u)
    graded = n >= min_graded_n
    for i, j in _pairs(grid):
        if grid.innov_cov[i, j] == 0:
            continue
        G = GammaTable(grid, i, j, n + 1)
        poly = exact_polygonal_cov(grid, i, j, n, t, u, table=G)
        ss = exact_partial_sum_cov(grid, i, j, K, L, table=G)
        if ss == 0:
            rep.add(f"({i},{j})", poly, ss, None, poly == 0, graded=False)
            continue
        tol = 10 * abs(G.pos[0]) * n / abs(ss)
        ratio = poly / ss
        rep.add(f"({i},{j})", ratio, 1.0, tol, abs(ratio - 1) <= tol if graded else True, graded=graded)
    return rep


def empirical_cov(flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance and the Monte Carlo standard error of each entry."""
    R = flat.shape[0]
    c = flat - flat.mean(axis=0)
    cov = c.T @ c / (R - 1)
    second = (c**2).T @ (c**2) / R
    var_prod = np.maximum(second - (c.T @ c / R) ** 2, 0.0)
    return cov, np.sqrt(var_prod / R)


def compare_cov(rep, cov, se, ref, labels, rel_tol, prefix="", graded=True):
    ok = True
    P = len(labels)
    for p in range(P):
        for q in range(p, P):
            tol = max(MC_SIGMAS * se[p, q], rel_tol * abs(ref[p, q]))
            good = abs(cov[p, q] - ref[p, q]) <= tol
            ok &= good
            rep.add(f"{prefix}{labels[p]}|{labels[q]}", float(cov[p, q]), float(ref[p, q]), float(tol),
                    good, graded=graded, mc_stderr=float(se[p, q]))
    return ok


def ks_statistic(x: np.ndarray, sd: float) -> float:
    """Sup distance between the empirical CDF of ``x`` and N(0, sd^2)."""
    z = np.sort(np.asarray(x, float)) / sd
    F = stats.norm.cdf(z)
    R = len(z)
    i = np.arange(1, R + 1)
    return float(max(np.max(i / R - F), np.max(F - (i - 1) / R)))


def ks_critical(R: int, level: float = KS_LEVEL) -> float:
    return float(stats.kstwobign.isf(level) / np.sqrt(R))


@_timed
def check_fclt(grid: SpatialGrid, n: int = 4096, R: int = 4000, dist=Dist.GAUSSIAN,
               time_grid=(0.2, 0.4, 0.6, 0.8, 1.0), seed: int = 0, horizon: int | None = None,
               test_fn=None, workers: int | None = None, rel_tol: float | None = None) -> VerificationReport:
    """Monte Carlo covariance and Gaussianity of the normalized polygonal process.

    Long memory is compared with the exact covariance of the simulated
    (truncated) process, with the distance to V reported alongside; the
    boundary regime with sigma(r,s) min(t,u); short memory with both the
    Wiener and the long-run-covariance candidates.
    """
    if R < MIN_REPLICATIONS:
        raise UnderpoweredRun(f"R={R} is below the minimum of {MIN_REPLICATIONS} replications")
    regime = classify_regime(grid)
    dist = Dist(dist)
    trunc = plan_from_horizon(grid, horizon) if horizon is not None else plan_for_grid(grid)
    times = np.asarray(time_grid, float)
    rel_tol = FCLT_REL_TOL[regime.kind] if rel_tol is None else rel_tol
    cfg = {"n": n, "R": R, "dist": dist.value, "time_grid": times.tolist(), "seed": seed,
           "horizon": trunc.horizon, "regime": regime.kind.value, "rel_tol": rel_tol}
    rep = VerificationReport("fclt", cfg, stochastic=True)
    ens = normalize_ensemble(simulate_paths(grid, n, R, dist, seed, trunc, times, workers))
    flat = ens.flat()
    cov, se = empirical_cov(flat)
    labels = [f"{s}:{t:g}" for s in range(grid.m) for t in times]
    J = trunc.horizon

    if regime.kind is RegimeKind.LONG:
        ref = kernel_matrix(grid, times, KernelKind.EXACT_N, n=n, horizon=J).values
        compare_cov(rep, cov, se, ref, labels, rel_tol)
        V = kernel_matrix(grid, times, KernelKind.V_LONG).values
        nz = np.abs(V) > 0
        rep.summary["max_rel_gap_truncated_vs_V"] = float(np.max(np.abs(ref - V)[nz] / np.abs(V[nz]))) if nz.any() else 0.0
        rep.summary["max_rel_gap_empirical_vs_V"] = float(np.max(np.abs(cov - V)[nz] / np.abs(V[nz]))) if nz.any() else 0.0
    elif regime.kind is RegimeKind.BOUNDARY:
        ref = kernel_matrix(grid, times, KernelKind.WIENER).values
        compare_cov(rep, cov, se, ref, labels, rel_tol)
    else:
        cands = {
            "wiener": kernel_matrix(grid, times, KernelKind.WIENER).values,
            "longrun": kernel_matrix(grid, times, KernelKind.LONGRUN, horizon=J).values,
        }
        matched = {}
        for name, K in cands.items():
            sub = VerificationReport(name, {})
            compare_cov(sub, cov, se, K, labels, rel_tol)
            matched[name] = sub.passed
            for e in sub.entries:
                e["graded"] = False
                e["label"] = f"{name} {e['label']}"
            rep.entries.extend(sub.entries)
        winners = [k for k, v in matched.items() if v]
        rep.summary["candidates_matched"] = matched
        rep.summary["winner"] = winners[0] if len(winners) == 1 else (winners or None)
        ref = cands[winners[0]] if winners else cands["longrun"]
        rep.add("some candidate kernel matches", winners, "wiener or longrun", None, bool(winners))

    # Gaussianity of <zeta_n(., 1), f>
    q = int(np.argmin(np.abs(times - 1.0)))
    f = np.ones(grid.m) if test_fn is None else np.asarray(test_fn, float)
    coef = grid.quad_weights * f
    y = ens.values[:, :, q] @ coef
    T = len(times)
    idx = [a * T + q for a in range(grid.m)]
    var = float(coef @ ref[np.ix_(idx, idx)] @ coef)
    crit = ks_critical(R)
    if var > 0:
        D = ks_statistic(y, np.sqrt(var))
        rep.add(f"KS <zeta(.,{times[q]:g}),f>", D, 0.0, crit, D <= crit)
    else:
        rep.add(f"KS <zeta(.,{times[q]:g}),f>", float(np.max(np.abs(y))), 0.0, 0.0,
                bool(np.all(y == 0)))
    rep.summary["ks_level"] = KS_LEVEL
    rep.summary["functional_variance"] = var
    return rep


@_timed
def check_selfsimilarity(grid: SpatialGrid, a_list=(0.5, 2.0, 2.7, 10.0),
                         time_grid=(0.2, 0.4, 0.6, 0.8, 1.0), mc_a: float | None = 4.0,
                         R: int = 10**4, seed: int = 0, mc_times=(0.5, 1.0)) -> VerificationReport:
    """V((r,at),(s,au)) = a^(3-d(r,s)) V((r,t),(s,u)) exactly, plus a sampled check."""
    if classify_regime(grid).kind is not RegimeKind.LONG:
        raise DomainError("self-similarity applies to the long-memory regime")
    times = np.asarray(time_grid, float)
    rep = VerificationReport("selfsim", {"a_list": list(a_list), "time_grid": times.tolist(),
                                         "mc_a": mc_a, "R": R, "seed": seed,
                                         "mc_times": list(mc_times)})
    tt, uu = np.meshgrid(times, times, indexing="ij")
    for a in a_list:
        worst = 0.0
        for i, j in _pairs(grid):
            D = grid.d_values[i] + grid.d_values[j]
            lhs = limit_kernel_V(grid, i, a * tt, j, a * uu)
            rhs = a ** (3 - D) * limit_kernel_V(grid, i, tt, j, uu)
            diff = np.abs(lhs - rhs)
            scale = np.abs(rhs)
            rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), np.where(diff > 0, np.inf, 0.0))
            worst = max(worst, float(np.max(rel)))
        rep.add(f"a={a:g} max rel deviation", worst, 0.0, SELFSIM_TOL, worst <= SELFSIM_TOL)
    if mc_a is not None:
        rep.stochastic = True
        mt = np.asarray(mc_times, float)
        draws = apply_scaling(sample_limit(build_sampler(KernelKind.V_LONG, grid, mt), R, seed), grid, mc_a)
        ref = kernel_matrix(grid, mc_a * mt, KernelKind.V_LONG).values
        cov, se = empirical_cov(draws.flat())
        labels = [f"{s}:{t:g}" for s in range(grid.m) for t in mt]
        compare_cov(rep, cov, se, ref, labels, 0.0, prefix=f"MC a={mc_a:g} ")
    return rep


def variance_bound_g(grid: SpatialGrid, i: int) -> float:
    """2 [g1 + g2 + g3] bounding E[n^(d - 3/2) zeta_n(s, t)]^2 for 1/2 < d < 1."""
    d, s2 = float(grid.d_values[i]), float(grid.innov_var[i])
    g1 = s2 * (1 + 1 / (2 * d - 1))
    g2 = s2 / (1 - d) ** 2
    g3 = s2 / ((1 - d) * (2 * d - 1))
    return 2 * (g1 + g2 + g3)


def polygonal_cov_matrix(grid, i, n, times, horizon=None) -> np.ndarray:
    G = GammaTable(grid, i, i, n + 1, horizon)
    T = len(times)
    C = np.empty((T, T))
    for a in range(T):
        for b in range(a, T):
            C[a, b] = C[b, a] = exact_polygonal_cov(grid, i, i, n, times[a], times[b], table=G)
    return C


def increment_moments(grid: SpatialGrid, n: int, times) -> np.ndarray:
    """Delta_n^2(t, u) = E||z_n^{-1} [zeta_n(t) - zeta_n(u)]||^2 over all time pairs.

    Equal to sum_i w_i sigma^2(s_i) z_n^{-2}(s_i) sum_j [a_nj(s_i,t) - a_nj(s_i,u)]^2.
    """
    T = len(times)
    out = np.zeros((T, T))
    for i in range(grid.m):
        C = polygonal_cov_matrix(grid, i, n, times)
        dv = np.diag(C)
        inc = dv[:, None] + dv[None, :] - 2 * C
        out += grid.quad_weights[i] * inc / normalizer_z(n, grid.d_values[i]) ** 2
    return out


@_timed
def check_moment_bounds(grid: SpatialGrid, n_list=tuple(2**e for e in range(6, 15, 2)),
                        dyadic_depth: int = 4, n_ref: int = 2**8) -> VerificationReport:
    """Variance bound g(s) and the increment-moment ratio over dyadic time pairs."""
    regime = classify_regime(grid)
    if regime.kind not in (RegimeKind.LONG, RegimeKind.BOUNDARY):
        raise DomainError("moment bounds are stated for the long-memory and boundary regimes")
    n_list = sorted(int(n) for n in n_list)
    times = np.arange(2**dyadic_depth + 1) / 2**dyadic_depth
    rep = VerificationReport("moment_bounds", {"n_list": n_list, "dyadic_depth": dyadic_depth,
                                               "n_ref": n_ref, "regime": regime.kind.value})
    long = regime.kind is RegimeKind.LONG
    alpha = 3 - 2 * regime.d_max if long else 1.0
    dt = np.abs(times[:, None] - times[None, :])
    off = dt > 0
    ratio_max = {}
    for n in n_list:
        for i in range(grid.m):
            if grid.innov_var[i] == 0:
                continue
            C = polygonal_cov_matrix(grid, i, n, times)
            v = float(np.max(np.diag(C))) / normalizer_z(n, grid.d_values[i]) ** 2
            if long:
                g = variance_bound_g(grid, i)
                rep.add(f"var bound site {i} n={n}", v, g, g, v <= g)
            else:
                rep.add(f"var/sigma^2 site {i} n={n}", v / grid.innov_var[i], None, None,
                        bool(np.isfinite(v)), graded=False)
        D2 = increment_moments(grid, n, times)
        ratio_max[n] = float(np.max(D2[off] / dt[off] ** alpha))
        rep.add(f"increment ratio n={n}", ratio_max[n], None, None, True, graded=False)
    tail = [n for n in n_list if n >= n_ref]
    if tail:
        base = ratio_max[tail[0]]
        seq = [ratio_max[n] for n in tail]
        mono = all(b <= a * (1 + 1e-12) for a, b in zip(seq, seq[1:]))
        rep.add("increment ratio nonincreasing", [round(x, 9) for x in seq], "nonincreasing", None, mono)
        rep.add("increment ratio bounded", max(seq), 10 * base, 10 * base, max(seq) <= 10 * base)
    rep.summary["exponent"] = alpha
    return rep


CHECKS = {
    "gamma": check_gamma_asymptotics,
    "partial_sums": check_partial_sum_convergence,
    "polygonal": check_polygonal_equivalence,
    "fclt": check_fclt,
    "selfsim": check_selfsimilarity,
    "moments": check_moment_bounds,
}

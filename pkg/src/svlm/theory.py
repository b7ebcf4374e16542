"""Closed forms and exact finite-n covariances.

Every cross-covariance here reduces to the positive series

    S(a, b; h) = sum_{k >= 1} k^(-a) (k + h)^(-b),

so that gamma_h(r, s) = sigma(r, s) S(d(r), d(s); h).  It is summed directly
up to a crossover index and the remainder is taken from the Euler-Maclaurin
formula, whose error is bounded because the summand is completely monotone.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DomainError
from .grid import BOUNDARY_ATOL, EPS_PSD, SpatialGrid
from .kernel import normalizer_z, split_time

EPS_SERIES = 1e-12

_CROSSOVER = 32
_EM_ORDER = 6
_BERNOULLI = special.bernoulli(2 * _EM_ORDER)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_GL_PANELS = 16
_FAR_TERMS = 48
_CHUNK = 8192


def _rising(a: float, i: int) -> float:
    return float(special.poch(a, i))


def _derivative(a: float, b: float, x: np.ndarray, h: np.ndarray, m: int) -> np.ndarray:
    """m-th derivative of x^(-a) (x + h)^(-b)."""
    out = np.zeros(np.broadcast(x, h).shape)
    for i in range(m + 1):
        if b == 0 and i != m:
            continue
        term = math.comb(m, i) * _rising(a, i) * _rising(b, m - i)
        out += term * x ** (-a - i) * (x + h) ** (-b - (m - i))
    return (-1) ** m * out


def _tail_integral(a: float, b: float, x0: np.ndarray, h: np.ndarray) -> np.ndarray:
    """int_{x0}^inf x^(-a) (x + h)^(-b) dx, vectorized over x0 and h."""
    x0, h = np.broadcast_arrays(np.asarray(x0, float), np.asarray(h, float))
    shape = x0.shape
    x0, h = x0.reshape(-1), h.reshape(-1)
    c = a + b - 1
    if b == 0:
        return (x0 ** (-c) / c).reshape(shape)
    X = np.maximum(x0, 8.0 * h)
    # far piece: binomial expansion of (1 + h/x)^(-b), |h/x| <= 1/8
    ratio = h / X
    coef = np.ones_like(ratio)
    far = np.zeros_like(ratio)
    for m in range(_FAR_TERMS):
        far += coef / (c + m)
        coef = coef * (-(b + m) / (m + 1)) * ratio
    total = X ** (-c) * far
    panel = np.arange(_GL_PANELS)[:, None] + 0.5 * (_GL_NODES[None, :] + 1.0)
    idx = np.flatnonzero(X > x0)
    for start in range(0, len(idx), _CHUNK):
        sel = idx[start:start + _CHUNK]
        # near piece in w = log x: the integrand is analytic within pi of the real axis
        lo, hi = np.log(x0[sel]), np.log(X[sel])
        width = (hi - lo) / _GL_PANELS
        x = np.exp(lo[:, None, None] + width[:, None, None] * panel[None])
        f = x ** (1 - a) * (x + h[sel][:, None, None]) ** (-b)
        total[sel] += 0.5 * width * np.einsum("kpq,q->k", f, _GL_WEIGHTS)
    return total.reshape(shape)


def series(a: float, b: float, h, start=1, with_error: bool = False):
    """sum_{k >= start} k^(-a) (k + h)^(-b) for integer h >= 0 (vectorized).

    With ``with_error`` also returns the Euler-Maclaurin remainder bound.
    """
    if a <= 0 or b < 0 or a + b <= 1:
        raise DomainError(f"series diverges for exponents a={a}, b={b}")
    h, start = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(start, dtype=float))
    if np.any(h < 0) or np.any(start < 1):
        raise DomainError("need h >= 0 and start >= 1")
    N = np.maximum(start, _CROSSOVER)
    # direct part: k = start .. N-1 (at most _CROSSOVER - 1 terms)
    k = np.arange(1, _CROSSOVER, dtype=float).reshape((-1,) + (1,) * h.ndim)
    mask = (k >= start) & (k < N)
    direct = np.where(mask, k ** (-a) * (k + h) ** (-b), 0.0).sum(axis=0)
    em = _tail_integral(a, b, N, h) + 0.5 * N ** (-a) * (N + h) ** (-b)
    for p in range(1, _EM_ORDER + 1):
        em -= _BERNOULLI[2 * p] / math.factorial(2 * p) * _derivative(a, b, N, h, 2 * p - 1)
    total = direct + em
    if with_error:
        bound = (
            2 * special.zeta(2 * _EM_ORDER) / (2 * np.pi) ** (2 * _EM_ORDER)
            * np.abs(_derivative(a, b, N, h, 2 * _EM_ORDER - 1))
        )
        return total, bound
    return total


def truncated_series(a: float, b: float, h, horizon: int):
    """sum_{j=0}^{J-h} (j+1)^(-a) (j+h+1)^(-b): lag-h correlation of coefficients cut at J."""
    h = np.asarray(h, dtype=float)
    count = horizon - h + 1  # number of terms, k = 1..count
    out = np.zeros(h.shape)
    small = (count > 0) & (count <= 4 * _CROSSOVER)
    if np.any(small):
        k = np.arange(1, 4 * _CROSSOVER + 1, dtype=float).reshape((-1,) + (1,) * h.ndim)
        hs = np.where(small, h, 0.0)
        terms = np.where(k <= count, k ** (-a) * (k + hs) ** (-b), 0.0)
        out = np.where(small, terms.sum(axis=0), out)
    big = count > 4 * _CROSSOVER
    if np.any(big):
        hb = h[big]
        out[big] = series(a, b, hb) - series(a, b, hb, start=count[big] + 1)
    return out if out.ndim else float(out)


@lru_cache(maxsize=256)
def c_const(d_r: float, d_s: float) -> float:
    """B(1 - d_r, d_r + d_s - 1), the integral of x^(-d_r) (x + 1)^(-d_s) over (0, inf)."""
    if not 0.5 < d_r < 1 or d_r + d_s <= 1:
        raise DomainError(f"c(r, s) undefined for d_r={d_r}, d_s={d_s}")
    return math.exp(special.betaln(1.0 - d_r, d_r + d_s - 1.0))


def _is_one(d: float) -> bool:
    return abs(d - 1.0) <= BOUNDARY_ATOL


def gamma_h(grid: SpatialGrid, i: int, j: int, h, horizon: int | None = None):
    """Cross-covariance E[X_0(s_i) X_h(s_j)]; negative h uses gamma_{-h}(s_j, s_i).

    With ``horizon`` the coefficients are cut at J, matching the simulator.
    """
    h = np.asarray(h)
    sig = float(grid.innov_cov[i, j])
    dr, ds = float(grid.d_values[i]), float(grid.d_values[j])
    if dr + ds <= 1:
        raise DomainError("series diverges: d(r) + d(s) <= 1")
    pos = h >= 0
    habs = np.abs(h)
    out = np.empty(h.shape)
    for flag, (x, y) in ((True, (dr, ds)), (False, (ds, dr))):
        sel = pos == flag
        if not np.any(sel):
            continue
        if horizon is None:
            out[sel] = series(x, y, habs[sel])
        else:
            out[sel] = truncated_series(x, y, habs[sel], horizon)
    out = sig * out
    return out if out.ndim else float(out)


def gamma_asymptotic(grid: SpatialGrid, i: int, j: int, h):
    """Leading-order gamma_h: c(r,s) sigma h^(1-d(r,s)), or sigma log(h)/h when d = 1."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 2):
        raise DomainError("asymptotic form needs h >= 2")
    sig = float(grid.innov_cov[i, j])
    dr, ds = float(grid.d_values[i]), float(grid.d_values[j])
    if _is_one(dr) and _is_one(ds):
        out = sig * np.log(h) / h
    elif 0.5 < dr < 1 and ds > 0.5:
        out = c_const(dr, ds) * sig * h ** (1 - dr - ds)
    else:
        raise DomainError(f"no asymptotic form for d(r)={dr}, d(s)={ds}")
    return out if out.ndim else float(out)


def _pair_long(grid: SpatialGrid, i: int, j: int) -> tuple[float, float, float]:
    dr, ds = float(grid.d_values[i]), float(grid.d_values[j])
    if not (0.5 < dr < 1 and 0.5 < ds < 1):
        raise DomainError(f"limit kernel V needs 1/2 < d < 1 at both sites, got {dr}, {ds}")
    return dr, ds, dr + ds


def limit_kernel_V(grid: SpatialGrid, i: int, t, j: int, u):
    """Covariance of the operator self-similar limit at (s_i, t), (s_j, u)."""
    dr, ds, D = _pair_long(grid, i, j)
    t, u = np.broadcast_arrays(np.asarray(t, float), np.asarray(u, float))
    if np.any(t < 0) or np.any(u < 0):
        raise DomainError("times must be nonnegative")
    k = 3.0 - D
    c_rs, c_sr = c_const(dr, ds), c_const(ds, dr)
    # C(r,s;t-u) = c(r,s) if t < u, c(s,r) if t > u; the term vanishes at t = u
    C = np.where(t < u, c_rs, c_sr)
    val = c_sr * t**k + c_rs * u**k - C * np.abs(t - u) ** k
    out = float(grid.innov_cov[i, j]) / ((2.0 - D) * (3.0 - D)) * val
    return out if out.ndim else float(out)


def fbm_constant(grid: SpatialGrid, i: int) -> float:
    """c(s) sigma^2(s) / ((1 - d)(3 - 2d)), the variance of the limit at t = 1."""
    d = float(grid.d_values[i])
    return c_const(d, d) * grid.innov_var[i] / ((1 - d) * (3 - 2 * d))


def wiener_kernel(grid: SpatialGrid, i: int, t, j: int, u):
    out = float(grid.innov_cov[i, j]) * np.minimum(t, u)
    return out if np.ndim(out) else float(out)


def fbm_kernel(H: float, t, u):
    if not 0 < H < 1:
        raise DomainError(f"Hurst index must lie in (0, 1), got {H}")
    t, u = np.asarray(t, float), np.asarray(u, float)
    out = 0.5 * (t ** (2 * H) + u ** (2 * H) - np.abs(t - u) ** (2 * H))
    return out if out.ndim else float(out)


def zeta_sum(d: float, horizon: int | None = None) -> float:
    """sum_{j>=0} (j+1)^(-d), optionally cut at j = horizon."""
    if horizon is not None:
        return float(np.sum(np.arange(1, horizon + 2, dtype=float) ** (-d)))
    if d <= 1:
        raise DomainError(f"coefficients are not summable for d={d}")
    return float(series(d, 0.0, 0))


def longrun_cov(grid: SpatialGrid, i: int, j: int, horizon: int | None = None) -> float:
    """Two-sided sum of gamma_h(r, s) = sigma(r,s) zeta(d(r)) zeta(d(s))."""
    dr, ds = float(grid.d_values[i]), float(grid.d_values[j])
    if dr <= 1 or ds <= 1:
        raise DomainError("long-run covariance needs d > 1 at both sites")
    return float(grid.innov_cov[i, j]) * zeta_sum(dr, horizon) * zeta_sum(ds, horizon)


class GammaTable:
    """G(h) = E[X_a(s_i) X_{a+h}(s_j)] for |h| <= hmax, cached as two arrays."""

    def __init__(self, grid: SpatialGrid, i: int, j: int, hmax: int, horizon: int | None = None):
        hs = np.arange(hmax + 1)
        self.hmax = hmax
        self.pos = np.atleast_1d(gamma_h(grid, i, j, hs, horizon))
        self.neg = np.atleast_1d(gamma_h(grid, j, i, hs, horizon))

    def __call__(self, h):
        h = np.asarray(h)
        if np.any(np.abs(h) > self.hmax):
            raise IndexError("lag outside the cached table")
        return np.where(h >= 0, self.pos[np.abs(h)], self.neg[np.abs(h)])


def _pair_count_sum(G: GammaTable, m: int, l: int) -> float:
    """sum_{a=1}^m sum_{b=1}^l G(b - a), grouped by the lag b - a."""
    if m <= 0 or l <= 0:
        return 0.0
    h = np.arange(-(m - 1), l)
    count = np.minimum(m, l - h) - np.maximum(1, 1 - h) + 1
    return float(np.dot(np.maximum(count, 0), G(h)))


def exact_partial_sum_cov(grid, i, j, m: int, l: int, horizon=None, table=None) -> float:
    """E[S_m(s_i) S_l(s_j)] as an exact lag-grouped double sum of gamma values."""
    if m < 0 or l < 0:
        raise ValueError("partial-sum lengths must be nonnegative")
    if m == 0 or l == 0:
        return 0.0
    G = table or GammaTable(grid, i, j, max(m, l), horizon)
    return _pair_count_sum(G, m, l)


def exact_polygonal_cov(grid, i, j, n: int, t: float, u: float, horizon=None, table=None) -> float:
    """E[zeta_n(s_i, t) zeta_n(s_j, u)] including the three fractional-part terms."""
    if n < 1:
        raise ValueError("n must be positive")
    if not (0 <= t <= 1 and 0 <= u <= 1):
        raise DomainError("times must lie in [0, 1]")
    K, ft = split_time(n, t)
    L, fu = split_time(n, u)
    G = table or GammaTable(grid, i, j, n + 1, horizon)
    total = _pair_count_sum(G, K, L)
    if fu and K:
        total += fu * float(np.sum(G(L + 1 - np.arange(1, K + 1))))
    if ft and L:
        total += ft * float(np.sum(G(np.arange(1, L + 1) - K - 1)))
    if ft and fu:
        total += ft * fu * float(G(L - K))
    return total


def asymptotic_prediction(grid, i, j, n: int, t: float, u: float, regime=None) -> float:
    """Leading-order E[S_[nt](s_i) S_[nu](s_j)]."""
    dr, ds = float(grid.d_values[i]), float(grid.d_values[j])
    if _is_one(dr) and _is_one(ds):
        kind = "boundary"
    elif 0.5 < dr < 1 and 0.5 < ds < 1:
        kind = "long"
    else:
        raise DomainError(f"no covariance asymptotics for d(r)={dr}, d(s)={ds}")
    if regime is not None and getattr(regime, "value", regime) != kind:
        raise DomainError(f"regime {regime} does not match site pair ({kind})")
    if kind == "long":
        return limit_kernel_V(grid, i, t, j, u) * float(n) ** (3 - dr - ds)
    return float(grid.innov_cov[i, j]) * min(t, u) * n * math.log(n) ** 2


class KernelKind(str, enum.Enum):
    V_LONG = "V_LONG"
    WIENER = "WIENER"
    LONGRUN = "LONGRUN"
    FBM = "FBM"
    EXACT_N = "EXACT_N"


@dataclass(eq=False)
class KernelMatrix:
    """Gram matrix over (site, time) pairs, site-major ordering."""

    index: list[tuple[int, float]]
    values: np.ndarray
    kernel_kind: KernelKind
    meta: dict = field(default_factory=dict)

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])

    def is_psd(self, eps: float = EPS_PSD) -> bool:
        tr = float(np.trace(self.values))
        return self.min_eigenvalue >= -eps * max(tr, 0.0)

    def labels(self) -> list[str]:
        return [f"{s}:{t!r}" for s, t in self.index]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["site:time"] + self.labels())
        for lab, row in zip(self.labels(), self.values):
            w.writerow([lab] + [format(float(x), ".17g") for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "kernel_kind": self.kernel_kind.value,
                "index": [[s, t] for s, t in self.index],
                "values": [[float(x) for x in row] for row in self.values],
                "meta": self.meta,
            },
            sort_keys=True,
        )


def kernel_matrix(grid: SpatialGrid, times, kind=KernelKind.V_LONG, sites=None,
                  n: int | None = None, horizon: int | None = None,
                  normalized: bool = True) -> KernelMatrix:
    """Assemble a :class:`KernelMatrix` for one of the supported kernels.

    ``EXACT_N`` is the exact covariance of zeta_n (cut at ``horizon`` when
    given), divided by z_n(r) z_n(s) unless ``normalized`` is False.
    ``LONGRUN`` is sigma(r,s) zeta(d(r)) zeta(d(s)) min(t, u); ``FBM`` treats
    the sites as independent fractional Brownian motions with H = 3/2 - d.
    """
    kind = KernelKind(kind)
    times = np.asarray(times, dtype=float)
    sites = list(range(grid.m)) if sites is None else list(sites)
    index = [(s, float(t)) for s in sites for t in times]
    T = len(times)
    P = len(index)
    vals = np.zeros((P, P))
    tt, uu = np.meshgrid(times, times, indexing="ij")
    for a, i in enumerate(sites):
        for b, j in enumerate(sites):
            if b < a:
                continue
            if kind is KernelKind.V_LONG:
                block = limit_kernel_V(grid, i, tt, j, uu)
            elif kind is KernelKind.WIENER:
                block = wiener_kernel(grid, i, tt, j, uu)
            elif kind is KernelKind.LONGRUN:
                block = longrun_cov(grid, i, j, horizon) * np.minimum(tt, uu)
            elif kind is KernelKind.FBM:
                if i != j:
                    block = np.zeros((T, T))
                else:
                    block = fbm_kernel(1.5 - float(grid.d_values[i]), tt, uu)
            else:
                if n is None:
                    raise ValueError("EXACT_N kernel needs n")
                G = GammaTable(grid, i, j, n + 1, horizon)
                block = np.array(
                    [[exact_polygonal_cov(grid, i, j, n, t, u, table=G) for u in times] for t in times]
                )
                if normalized:
                    block = block / (normalizer_z(n, grid.d_values[i]) * normalizer_z(n, grid.d_values[j]))
            vals[a * T:(a + 1) * T, b * T:(b + 1) * T] = block
            vals[b * T:(b + 1) * T, a * T:(a + 1) * T] = np.asarray(block).T
    meta = {"n": n, "horizon": horizon, "normalized": normalized} if kind is KernelKind.EXACT_N else {}
    return KernelMatrix(index, vals, kind, meta)

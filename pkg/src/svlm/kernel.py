"""Moving-average coefficients, polygonal weights, truncation and normalizers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormalizer, DomainError, HorizonOverflow
from .grid import BOUNDARY_ATOL

J_MAX = 10**8
DEFAULT_REL_TOL = 1e-4


def coeff(j, d):
    """Coefficient (j + 1)^(-d) for j >= 0 and 0 for j < 0 (vectorized in j)."""
    if d <= 0.5:
        raise DomainError(f"d must exceed 1/2, got {d}")
    j = np.asarray(j)
    out = np.where(j >= 0, (np.maximum(j, 0) + 1.0) ** (-float(d)), 0.0)
    return out if out.ndim else float(out)


def split_time(n: int, t: float) -> tuple[int, float]:
    """Return (floor(n t), {n t}) with lattice points snapped exactly."""
    x = n * float(t)
    k = round(x)
    if abs(x - k) <= 1e-9 * max(1.0, abs(x)):
        return int(k), 0.0
    k = math.floor(x)
    return int(k), x - k


def weight_a(n: int, j: int, d: float, t: float) -> float:
    """Polygonal weight: sum_{k=1}^{floor(nt)} v_{k-j} + {nt} v_{floor(nt)+1-j}."""
    if n < 1:
        raise DomainError("n must be positive")
    K, frac = split_time(n, t)
    if j > K + 1:
        return 0.0
    ks = np.arange(1, K + 1)
    total = float(np.sum(coeff(ks - j, d))) if K else 0.0
    return total + frac * coeff(K + 1 - j, d)


def weights_vector(n: int, d: float, t: float, j_min: int) -> tuple[np.ndarray, np.ndarray]:
    """All nonzero-range weights a_{nj}(t) for j = j_min .. floor(nt) + 1.

    Uses prefix sums of k^(-d), so the cost is linear in the number of j.
    """
    K, frac = split_time(n, t)
    js = np.arange(j_min, K + 2)
    # sum_{k=1}^{K} v_{k-j} = P(K + 1 - j) - P(max(0, 1 - j)),  P(N) = sum_{i<=N} i^(-d)
    top = np.maximum(K + 1 - js, 0)
    lo = np.minimum(np.maximum(1 - js, 0), top)
    size = int(top.max(initial=0)) + 1
    prefix = np.concatenate(([0.0], np.cumsum(np.arange(1, size + 1, dtype=float) ** (-d))))
    a = prefix[top] - prefix[lo]
    if frac:
        a = a + frac * (top + 1.0) ** (-d)
    return js, a


@dataclass(frozen=True)
class TruncationPlan:
    """Finite-past realization of the moving average.

    ``abs_tail_bound`` is the analytic bound sigma^2 J^(1-2d) / (2d - 1) on
    the variance of the discarded tail (maximized over sites).
    """

    horizon: int
    abs_tail_bound: float
    tol: float

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "abs_tail_bound": self.abs_tail_bound, "tol": self.tol}


def tail_bound(J: int, d: float, sigma2: float) -> float:
    if J <= 0:
        return math.inf if sigma2 > 0 else 0.0
    return sigma2 * J ** (1 - 2 * d) / (2 * d - 1)


def truncation_horizon(d: float, sigma2: float, tol: float, j_max: int = J_MAX) -> TruncationPlan:
    if d <= 0.5:
        raise DomainError(f"d must exceed 1/2, got {d}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if sigma2 <= 0:
        return TruncationPlan(1, 0.0, tol)
    e = 2 * d - 1
    log_j = (math.log(sigma2) - math.log(e * tol)) / e
    if log_j > math.log(j_max):
        raise HorizonOverflow(
            f"truncation horizon exp({log_j:.1f}) exceeds J_max={j_max} for d={d}; "
            "memory exponents this close to 1/2 cannot be simulated at this tolerance"
        )
    J = max(1, math.ceil(math.exp(log_j) * (1 - 1e-12)))
    while tail_bound(J, d, sigma2) > tol:
        J += 1
    return TruncationPlan(J, tail_bound(J, d, sigma2), tol)


def plan_for_grid(grid, rel_tol: float = DEFAULT_REL_TOL, j_max: int = J_MAX) -> TruncationPlan:
    """Per-site horizons with tol = rel_tol * gamma_0(s); the largest J wins."""
    from .theory import gamma_h

    J, tols = 0, []
    for i in range(grid.m):
        s2 = grid.innov_var[i]
        tol = rel_tol * gamma_h(grid, i, i, 0) if s2 > 0 else rel_tol
        tols.append(tol)
        J = max(J, truncation_horizon(grid.d_values[i], s2, tol, j_max).horizon)
    return plan_from_horizon(grid, J, tol=max(tols))


def plan_from_horizon(grid, J: int, tol: float | None = None) -> TruncationPlan:
    if J < 0:
        raise ValueError("horizon must be nonnegative")
    bound = max(tail_bound(J, d, s2) for d, s2 in zip(grid.d_values, grid.innov_var))
    return TruncationPlan(int(J), bound, bound if tol is None else tol)


def normalizer_z(n: int, d: float) -> float:
    """n^(3/2 - d) for 1/2 < d < 1, sqrt(n) log n for d = 1, sqrt(n) for d > 1."""
    if d <= 0.5:
        raise DomainError(f"d must exceed 1/2, got {d}")
    if n < 1:
        raise DegenerateNormalizer("n must be positive")
    if abs(d - 1.0) <= BOUNDARY_ATOL:
        if n < 2:
            raise DegenerateNormalizer("sqrt(n) log(n) vanishes at n = 1")
        return math.sqrt(n) * math.log(n)
    if d < 1:
        return float(n) ** (1.5 - d)
    return math.sqrt(n)

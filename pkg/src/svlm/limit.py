"""Gaussian limit processes sampled on finite (site x time) grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FactorizationFailure
from .grid import RegimeKind, SpatialGrid, classify_regime
from .streams import replication_rng
from .theory import KernelKind, KernelMatrix, kernel_matrix

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


def factorize(matrix: np.ndarray, ladder=JITTER_LADDER):
    """Lower-triangular factor of a PSD matrix with an escalating diagonal jitter.

    Coordinates with zero variance are pinned: their rows and columns of
    the factor are exactly zero.  Returns ``(factor, jitter_used, pinned)``.
    """
    A = np.asarray(matrix, dtype=float)
    P = A.shape[0]
    pinned = np.diag(A) <= 0
    keep = np.flatnonzero(~pinned)
    L = np.zeros((P, P))
    if keep.size == 0:
        return L, 0.0, pinned
    sub = A[np.ix_(keep, keep)]
    tr = float(np.trace(sub))
    for rel in ladder:
        jitter = rel * tr
        try:
            Lsub = np.linalg.cholesky(sub + jitter * np.eye(len(keep)))
        except np.linalg.LinAlgError:
            continue
        L[np.ix_(keep, keep)] = Lsub
        return L, jitter, pinned
    raise FactorizationFailure(
        f"matrix of size {P} not factorable with jitter up to {ladder[-1]:g} * trace"
    )


@dataclass(eq=False)
class GaussianSampler:
    gram: KernelMatrix
    factor: np.ndarray
    jitter_used: float
    pinned: np.ndarray
    sites: list[int]
    times: np.ndarray

    def reconstruction_error(self) -> float:
        return float(np.max(np.abs(self.factor @ self.factor.T - self.gram.values)))


@dataclass(eq=False)
class LimitDraws:
    """Draws of shape (R, sites, times) from a limit Gaussian process."""

    values: np.ndarray
    sites: list[int]
    times: np.ndarray
    kernel_kind: KernelKind
    seed: int
    scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def flat(self) -> np.ndarray:
        return self.values.reshape(self.values.shape[0], -1)

    def metadata(self) -> dict:
        return {
            "kind": "limit",
            "kernel_kind": self.kernel_kind.value,
            "seed": self.seed,
            "R": int(self.values.shape[0]),
            "sites": list(self.sites),
            "times": [float(t) for t in self.times],
            "scale": self.scale,
            **self.meta,
        }


def build_sampler(kernel_kind, grid: SpatialGrid, time_grid, sites=None, **kernel_kw) -> GaussianSampler:
    kind = KernelKind(kernel_kind)
    if kind is KernelKind.V_LONG and classify_regime(grid).kind is not RegimeKind.LONG:
        raise DomainError("the V kernel needs the long-memory regime")
    times = np.asarray(time_grid, dtype=float)
    gram = kernel_matrix(grid, times, kind, sites=sites, **kernel_kw)
    L, jitter, pinned = factorize(gram.values)
    sites = list(range(grid.m)) if sites is None else list(sites)
    return GaussianSampler(gram, L, jitter, pinned, sites, times)


def sample_limit(sampler: GaussianSampler, R: int, seed: int) -> LimitDraws:
    """R independent draws; draw r uses the substream keyed by (seed, r)."""
    P = sampler.factor.shape[0]
    z = np.empty((R, P))
    for r in range(R):
        z[r] = replication_rng(seed, r).standard_normal(P)
    x = z @ sampler.factor.T
    x[:, sampler.pinned] = 0.0
    vals = x.reshape(R, len(sampler.sites), len(sampler.times))
    return LimitDraws(vals, sampler.sites, sampler.times, sampler.gram.kernel_kind, seed)


def scaling_factors(grid: SpatialGrid, a: float, sites=None) -> np.ndarray:
    """Per-site multipliers a^(3/2 - d(s)) of the operator scaling family."""
    if a <= 0:
        raise DomainError(f"scaling parameter must be positive, got {a}")
    if classify_regime(grid).kind is not RegimeKind.LONG:
        raise DomainError("operator scaling is defined for the long-memory regime")
    d = grid.d_values if sites is None else grid.d_values[list(sites)]
    return float(a) ** (1.5 - d)


def apply_scaling(draws: LimitDraws, grid: SpatialGrid, a: float) -> LimitDraws:
    f = scaling_factors(grid, a, draws.sites)
    return LimitDraws(
        draws.values * f[None, :, None],
        draws.sites,
        draws.times,
        draws.kernel_kind,
        draws.seed,
        draws.scale * a,
        dict(draws.meta),
    )

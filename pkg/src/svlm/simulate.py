"""Linear-process paths and polygonal partial-sum ensembles."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from .errors import AlreadyNormalized, TimeOutOfRange
from .grid import Regime, SpatialGrid, classify_regime
from .kernel import TruncationPlan, normalizer_z, plan_for_grid, split_time
from .limit import factorize
from .streams import default_workers, replication_rng

DEFAULT_TIME_GRID = tuple(k / 16 for k in range(17))
_BLOCK = 8


class Dist(str, enum.Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


def innovation_factor(grid: SpatialGrid) -> np.ndarray:
    return factorize(grid.innov_cov)[0]


def _unit_noise(rng: np.random.Generator, shape, dist: Dist) -> np.ndarray:
    if Dist(dist) is Dist.GAUSSIAN:
        return rng.standard_normal(shape)
    # centered uniform with unit variance
    return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), shape)


def sample_innovations(grid: SpatialGrid, count: int, dist=Dist.GAUSSIAN, rng=None, factor=None):
    """``count`` i.i.d. rows with zero mean and covariance ``grid.innov_cov``."""
    if rng is None:
        raise ValueError("an explicit random stream is required")
    L = innovation_factor(grid) if factor is None else factor
    return _unit_noise(rng, (count, grid.m), dist) @ L.T


def coefficient_vector(d: float, horizon: int) -> np.ndarray:
    return np.arange(1, horizon + 2, dtype=float) ** (-float(d))


def _fft_valid(eps: np.ndarray, coef: np.ndarray, n: int, coef_hat=None, size=None) -> np.ndarray:
    """Valid part of the convolution along the last axis.

    ``eps`` has length n + J (times 1-J .. n); a cyclic convolution of
    length >= n + J leaves outputs J .. n+J-1 free of wraparound.
    """
    J = len(coef) - 1
    size = size or sfft.next_fast_len(n + J, real=True)
    if coef_hat is None:
        coef_hat = sfft.rfft(coef, size)
    out = sfft.irfft(sfft.rfft(eps, size, axis=-1) * coef_hat, size, axis=-1)
    return out[..., J:J + n]


def generate_linear_process(grid: SpatialGrid, n: int, trunc: TruncationPlan, dist=Dist.GAUSSIAN,
                            rng=None, innovations=None) -> np.ndarray:
    """X_k(s_i) for k = 1..n, shape (n, m), from n + J innovations by FFT convolution."""
    J = trunc.horizon
    if innovations is None:
        innovations = sample_innovations(grid, n + J, dist, rng)
    innovations = np.asarray(innovations, dtype=float)
    if innovations.shape != (n + J, grid.m):
        raise ValueError(f"need innovations of shape {(n + J, grid.m)}, got {innovations.shape}")
    X = np.empty((n, grid.m))
    for i, d in enumerate(grid.d_values):
        X[:, i] = _fft_valid(innovations[:, i], coefficient_vector(d, J), n)
    return X


def direct_linear_process(innovations: np.ndarray, d_values, n: int, horizon: int) -> np.ndarray:
    """O(n J) reference: X_k = sum_{j=0}^J (j+1)^(-d) eps_{k-j}."""
    X = np.zeros((n, len(d_values)))
    for i, d in enumerate(d_values):
        c = coefficient_vector(d, horizon)
        for k in range(n):
            e = k + horizon  # row of eps_{k+1}
            X[k, i] = np.dot(c, innovations[e - np.arange(horizon + 1), i])
    return X


def polygonal_path(X: np.ndarray, n: int, time_grid) -> np.ndarray:
    """zeta_n(t) = S_[nt] + {nt} X_[nt]+1 along axis 0 of ``X``; returns shape (T, ...)."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < n:
        raise ValueError(f"need at least n={n} observations, got {X.shape[0]}")
    S = np.concatenate([np.zeros((1,) + X.shape[1:]), np.cumsum(X[:n], axis=0)])
    out = np.empty((len(time_grid),) + X.shape[1:])
    for q, t in enumerate(time_grid):
        if not 0.0 <= t <= 1.0:
            raise TimeOutOfRange(f"time {t} outside [0, 1]")
        K, frac = split_time(n, t)
        out[q] = S[K] + frac * X[K] if frac else S[K]
    return out


@dataclass(eq=False)
class PathEnsemble:
    """zeta_n on a time grid, values indexed (replication, site, time)."""

    values: np.ndarray
    n: int
    trunc: TruncationPlan
    regime: Regime
    seed: int
    normalized: bool
    time_grid: np.ndarray
    dist: Dist
    d_values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def R(self) -> int:
        return self.values.shape[0]

    def flat(self) -> np.ndarray:
        return self.values.reshape(self.R, -1)

    def metadata(self) -> dict:
        return {
            "kind": "paths",
            "n": self.n,
            "R": self.R,
            "seed": self.seed,
            "dist": Dist(self.dist).value,
            "normalized": self.normalized,
            "regime": self.regime.kind.value,
            "truncation": self.trunc.to_dict(),
            "times": [float(t) for t in self.time_grid],
            **self.meta,
        }


def _simulate_block(grid, n, J, dist, seed, reps, times, factor, coef_hats, size):
    B = len(reps)
    eps = np.empty((B, grid.m, n + J))
    for b, r in enumerate(reps):
        eps[b] = (_unit_noise(replication_rng(seed, r), (n + J, grid.m), dist) @ factor.T).T
    X = np.empty((n, B, grid.m))
    for i in range(grid.m):
        coef = coefficient_vector(grid.d_values[i], J)
        X[:, :, i] = _fft_valid(eps[:, i, :], coef, n, coef_hats[i], size).T
    return polygonal_path(X, n, times).transpose(1, 2, 0)  # (B, m, T)


def simulate_paths(grid: SpatialGrid, n: int, R: int, dist=Dist.GAUSSIAN, seed: int = 0,
                   trunc: TruncationPlan | None = None, time_grid=DEFAULT_TIME_GRID,
                   workers: int | None = None) -> PathEnsemble:
    """Simulate R replications of zeta_n; the result does not depend on ``workers``."""
    if n < 1 or R < 1:
        raise ValueError("n and R must be positive")
    regime = classify_regime(grid)
    trunc = trunc or plan_for_grid(grid)
    J = trunc.horizon
    times = np.asarray(time_grid, dtype=float)
    if np.any((times < 0) | (times > 1)):
        raise TimeOutOfRange("time grid must lie in [0, 1]")
    factor = innovation_factor(grid)
    size = sfft.next_fast_len(n + J, real=True)
    coef_hats = [sfft.rfft(coefficient_vector(d, J), size) for d in grid.d_values]
    blocks = [range(r, min(r + _BLOCK, R)) for r in range(0, R, _BLOCK)]
    values = np.empty((R, grid.m, len(times)))
    workers = workers or default_workers()

    def run(block):
        values[block.start:block.stop] = _simulate_block(
            grid, n, J, Dist(dist), seed, block, times, factor, coef_hats, size
        )

    if workers == 1:
        for blk in blocks:
            run(blk)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, blocks))
    return PathEnsemble(values, n, trunc, regime, int(seed), False, times, Dist(dist),
                        grid.d_values.copy())


def normalize_ensemble(ensemble: PathEnsemble) -> PathEnsemble:
    """Divide site s by z_n(s): n^(3/2-d), sqrt(n) log n or sqrt(n) by regime."""
    if ensemble.normalized:
        raise AlreadyNormalized("ensemble is already normalized")
    z = np.array([normalizer_z(ensemble.n, d) for d in ensemble.d_values])
    return replace(ensemble, values=ensemble.values / z[None, :, None], normalized=True)

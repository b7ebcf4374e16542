"""Discretized measure space, memory field and innovation covariance."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    AsymmetricCovariance,
    CauchySchwarzViolation,
    ConfigError,
    ExponentOutOfRange,
    MixedRegime,
    NonPositiveWeight,
    NotPSD,
)

EPS_PSD = 1e-10
DELTA_SING = 1e-3
# d values this close to 1 are treated as exactly 1
BOUNDARY_ATOL = 1e-12


class RegimeKind(str, enum.Enum):
    LONG = "long"
    BOUNDARY = "boundary"
    SHORT = "short"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    d_min: float
    d_max: float


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Finite quadrature approximation of the site space.

    Attributes
    ----------
    points : ndarray, shape (m,)
        Site coordinates.
    quad_weights : ndarray, shape (m,)
        Positive quadrature weights standing in for the measure.
    d_values : ndarray, shape (m,)
        Memory exponent at each site.
    innov_cov : ndarray, shape (m, m)
        Innovation cross-covariance sigma(r, s).
    """

    points: np.ndarray
    quad_weights: np.ndarray
    d_values: np.ndarray
    innov_cov: np.ndarray
    innov_var: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "innov_var", np.diag(self.innov_cov).copy())
        for name in ("points", "quad_weights", "d_values", "innov_cov", "innov_var"):
            getattr(self, name).setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.points)

    def subgrid(self, idx: Sequence[int]) -> "SpatialGrid":
        idx = np.asarray(idx, dtype=int)
        return build_grid(
            self.points[idx],
            self.quad_weights[idx],
            self.d_values[idx],
            self.innov_cov[np.ix_(idx, idx)],
        )

    def permuted(self, perm: Sequence[int]) -> "SpatialGrid":
        return self.subgrid(perm)

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "weights": self.quad_weights.tolist(),
            "d": self.d_values.tolist(),
            "cov": self.innov_cov.tolist(),
        }


def build_grid(points, weights, d_values, innov_cov) -> SpatialGrid:
    """Validate the inputs and return an immutable :class:`SpatialGrid`."""
    points = np.array(points, dtype=float).reshape(-1)
    weights = np.array(weights, dtype=float).reshape(-1)
    d_values = np.array(d_values, dtype=float).reshape(-1)
    cov = np.array(innov_cov, dtype=float)
    m = len(points)
    if m == 0:
        raise ConfigError("grid must contain at least one point")
    if weights.shape != (m,) or d_values.shape != (m,) or cov.shape != (m, m):
        raise ConfigError(
            f"inconsistent grid dimensions: {m} points, {weights.shape[0]} weights, "
            f"{d_values.shape[0]} exponents, covariance {cov.shape}"
        )
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        raise NonPositiveWeight(f"quadrature weights must be positive, got {weights}")
    if not np.all(np.isfinite(d_values)) or np.any(d_values <= 0.5):
        raise ExponentOutOfRange(f"memory exponents must exceed 1/2, got {d_values}")
    if not np.all(np.isfinite(cov)):
        raise AsymmetricCovariance("innovation covariance has non-finite entries")
    scale = max(np.max(np.abs(cov)), np.finfo(float).tiny)
    if np.max(np.abs(cov - cov.T)) > 1e-14 * scale:
        raise AsymmetricCovariance("innovation covariance is not symmetric")
    cov = 0.5 * (cov + cov.T)
    var = np.diag(cov)
    if np.any(var < 0):
        raise NotPSD("innovation variances must be nonnegative")
    sd = np.sqrt(var)
    bound = np.outer(sd, sd)
    if np.any(np.abs(cov) > bound * (1 + 1e-12) + 1e-300):
        raise CauchySchwarzViolation("|sigma(r,s)| > sigma(r) sigma(s) for some pair")
    trace = float(np.trace(cov))
    if m > 1 and trace > 0:
        lam = np.linalg.eigvalsh(cov)[0]
        if lam < -EPS_PSD * trace:
            raise NotPSD(f"min eigenvalue {lam:.3e} below -{EPS_PSD:g} * trace")
    return SpatialGrid(points, weights, d_values, cov)


def _named_cov(points: np.ndarray, spec: Any) -> np.ndarray:
    if isinstance(spec, str):
        spec = {"kernel": spec}
    if not isinstance(spec, Mapping):
        return np.asarray(spec, dtype=float)
    kernel = spec.get("kernel")
    variance = float(spec.get("variance", 1.0))
    if kernel == "identity":
        return variance * np.eye(len(points))
    if kernel == "exp":
        scale = float(spec.get("scale", 1.0))
        return variance * np.exp(-np.abs(points[:, None] - points[None, :]) / scale)
    raise ConfigError(f"unknown covariance kernel {kernel!r}")


def grid_from_spec(spec: Mapping[str, Any]) -> SpatialGrid:
    """Build a grid from a JSON-style mapping.

    Keys: ``points``; ``weights`` (list, or ``"uniform"`` for 1/m each);
    ``d`` (list, or ``{"ramp": [d0, d1]}`` giving d(s) = d0 + (d1 - d0) s);
    ``cov`` (matrix, ``"identity"``, ``"exp"`` or a mapping with ``kernel``,
    ``variance`` and ``scale``).
    """
    if "points" not in spec:
        raise ConfigError("grid spec is missing field 'points'")
    points = np.asarray(spec["points"], dtype=float).reshape(-1)
    m = len(points)
    weights = spec.get("weights", "uniform")
    if isinstance(weights, str):
        if weights != "uniform":
            raise ConfigError(f"unknown weights spec {weights!r}")
        weights = np.full(m, 1.0 / m)
    if "d" not in spec:
        raise ConfigError("grid spec is missing field 'd'")
    d = spec["d"]
    if isinstance(d, Mapping):
        if "ramp" not in d:
            raise ConfigError("parametric d must be given as {'ramp': [d0, d1]}")
        d0, d1 = map(float, d["ramp"])
        d = d0 + (d1 - d0) * points
    elif np.isscalar(d):
        d = np.full(m, float(d))
    cov = _named_cov(points, spec.get("cov", "identity"))
    return build_grid(points, weights, d, cov)


def classify_regime(grid: SpatialGrid) -> Regime:
    d = grid.d_values
    lo, hi = float(d.min()), float(d.max())
    if np.all(np.abs(d - 1.0) <= BOUNDARY_ATOL):
        return Regime(RegimeKind.BOUNDARY, 1.0, 1.0)
    if hi < 1.0:
        return Regime(RegimeKind.LONG, lo, hi)
    if lo > 1.0:
        return Regime(RegimeKind.SHORT, lo, hi)
    raise MixedRegime(
        f"memory field spans [{lo}, {hi}] across regime boundaries; "
        "only fields entirely in (1/2, 1), equal to 1, or above 1 are supported"
    )


@dataclass(frozen=True)
class IntegrabilityReport:
    """Quadrature values of the integrals the limit theorems require finite.

    ``long_sq`` and ``long_mixed`` are ``None`` unless every site has d < 1.
    """

    p: float
    energy: float  # E||eps_0||^2
    var_integral: float  # int sigma^2 / (2d - 1)
    long_sq: float | None  # int sigma^2 / (1 - d)^2
    long_mixed: float | None  # int sigma^2 / ((1 - d)(2d - 1))
    moment_finite: bool
    division_blowup: bool
    blowup_sites: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "energy": self.energy,
            "var_integral": self.var_integral,
            "long_sq": self.long_sq,
            "long_mixed": self.long_mixed,
            "moment_finite": self.moment_finite,
            "division_blowup": self.division_blowup,
            "blowup_sites": list(self.blowup_sites),
        }


def check_integrability(grid: SpatialGrid, p: float = 2.0, delta_sing: float = DELTA_SING):
    if p < 2:
        raise ValueError("moment order p must be at least 2")
    w, d, s2 = grid.quad_weights, grid.d_values, grid.innov_var
    inv_var = 1.0 / (2 * d - 1)
    blow = inv_var > 1.0 / delta_sing
    long_sq = long_mixed = None
    if np.all(d < 1):
        inv_long = 1.0 / (1 - d)
        blow |= inv_long > 1.0 / delta_sing
        long_sq = float(np.sum(w * s2 * inv_long**2))
        long_mixed = float(np.sum(w * s2 * inv_long * inv_var))
    # Gaussian and scaled-uniform innovations on a finite grid have all moments
    return IntegrabilityReport(
        p=float(p),
        energy=float(np.sum(w * s2)),
        var_integral=float(np.sum(w * s2 * inv_var)),
        long_sq=long_sq,
        long_mixed=long_mixed,
        moment_finite=True,
        division_blowup=bool(np.any(blow)),
        blowup_sites=tuple(int(i) for i in np.flatnonzero(blow)),
    )


def reference_grid() -> SpatialGrid:
    """Three sites at 0, 0.5, 1 with d = (0.6, 0.75, 0.9) and exp(-|r-s|) covariance."""
    pts = np.array([0.0, 0.5, 1.0])
    return build_grid(
        pts,
        np.full(3, 1.0 / 3.0),
        [0.6, 0.75, 0.9],
        np.exp(-np.abs(pts[:, None] - pts[None, :])),
    )

"""Grid-based checks of the Fisher information inequality.

1-D: for ``r = p1 * p2`` (convolution), ``1/J_r >= 1/J_p1 + 1/J_p2``.
2-D: the same inequality for a joint density ``p1(x1 - τ, x3)`` convolved with
noise along ``x1`` only, where ``x3`` may depend on ``x1``.

Derivatives are 5-point central differences; integrals are trapezoid sums,
which converge spectrally for smooth densities that vanish at the grid edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dist import DistributionSpec, Gaussian

MIN_POINTS = 64
MIN_POINTS_2D = 256


class GridError(ValueError):
    pass


class GridMismatch(GridError):
    pass


class NotNormalized(GridError):
    pass


class NonPositiveDensity(GridError):
    pass


class NonPositiveDefinite(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise GridError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.points < MIN_POINTS:
            raise GridError(f"need at least {MIN_POINTS} points, got {self.points}")

    @classmethod
    def symmetric(cls, half_width: float, points: int) -> "Grid1D":
        """Grid on ``[-half_width, half_width]``; odd ``points`` puts 0 on a node."""
        return cls(-half_width, half_width, points)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.points - 1)

    def refined(self) -> "Grid1D":
        return Grid1D(self.lo, self.hi, 2 * self.points - 1)


def trapezoid(y: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    return np.trapezoid(y, dx=h, axis=axis)


def central_diff(y: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order central difference, second order at the two edge rows."""
    y = np.moveaxis(np.asarray(y, dtype=float), axis, 0)
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[1] = (y[2] - y[0]) / (2 * h)
    d[-2] = (y[-1] - y[-3]) / (2 * h)
    d[0] = (y[1] - y[0]) / h
    d[-1] = (y[-1] - y[-2]) / h
    return np.moveaxis(d, 0, axis)


def _check_density(p: np.ndarray, mass: float, tol: float) -> None:
    if np.any(~(p >= 0)):
        raise NonPositiveDensity("density must be non-negative on the grid")
    if abs(mass - 1.0) > tol:
        raise NotNormalized(f"density integrates to {mass:.12g}")


def _score_sq_density(dp: np.ndarray, p: np.ndarray) -> np.ndarray:
    # cells where the density underflowed to exactly 0 contribute nothing
    return np.divide(dp * dp, p, out=np.zeros_like(p), where=p > 0)


def fi_location_1d(p: np.ndarray, grid: Grid1D, norm_tol: float = 1e-6) -> float:
    """Location Fisher information ``∫ p'² / p`` of a density sampled on ``grid``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (grid.points,):
        raise GridMismatch(f"{p.shape[0]} samples for a {grid.points}-point grid")
    _check_density(p, float(trapezoid(p, grid.h)), norm_tol)
    dp = central_diff(p, grid.h)
    return float(trapezoid(_score_sq_density(dp, p), grid.h))


def _zero_index(grid: Grid1D) -> int:
    k = -grid.lo / grid.h
    if abs(k - round(k)) > 1e-9 or not 0 <= round(k) < grid.points:
        raise GridMismatch("grid must have a node at 0 to convolve onto itself")
    return int(round(k))


def convolve_1d(p1: np.ndarray, p2: np.ndarray, grid: Grid1D) -> np.ndarray:
    """``r(z) = ∫ p1(z - t) p2(t) dt`` sampled on the same grid.

    Uses direct summation so small tail values keep full relative precision.
    """
    p1, p2 = np.asarray(p1, dtype=float), np.asarray(p2, dtype=float)
    if p1.shape != (grid.points,) or p2.shape != (grid.points,):
        raise GridMismatch("both densities must be sampled on the grid")
    k0 = _zero_index(grid)
    full = np.convolve(p1, p2) * grid.h
    # full[k] sits at 2*lo + k*h; grid node m sits at lo + m*h
    return full[k0 : k0 + grid.points]


@dataclass(frozen=True)
class FIIResult:
    j_p1: float
    j_p2: float
    j_r: float

    @property
    def slack(self) -> float:
        """``1/J_r - 1/J_p1 - 1/J_p2``; non-negative when the inequality holds."""
        return 1.0 / self.j_r - 1.0 / self.j_p1 - 1.0 / self.j_p2


def default_grid(*specs: DistributionSpec, points: int = 8001) -> Grid1D:
    """Symmetric grid covering ±10 standard deviations of the widest convolution."""
    sd = math.sqrt(sum(s.variance() for s in specs))
    return Grid1D.symmetric(10.0 * sd, points)


def check_fii_1d(p1: DistributionSpec, p2: DistributionSpec, grid: Grid1D | None = None) -> FIIResult:
    grid = grid or default_grid(p1, p2)
    x = grid.x
    a, b = p1.pdf(x), p2.pdf(x)
    r = convolve_1d(a, b, grid)
    return FIIResult(fi_location_1d(a, grid), fi_location_1d(b, grid), fi_location_1d(r, grid, norm_tol=1e-5))


@dataclass(frozen=True)
class BivariateGaussianSpec:
    """Zero-mean pair ``(x1, x3)`` with variances ``sigma1_sq``, ``sigma3_sq`` and correlation ``rho``."""

    sigma1_sq: float
    sigma3_sq: float
    rho: float

    def __post_init__(self):
        if not (self.sigma1_sq > 0 and self.sigma3_sq > 0 and -1.0 < self.rho < 1.0):
            raise NonPositiveDefinite(f"covariance not positive definite: {self}")

    @property
    def cov(self) -> np.ndarray:
        c = self.rho * math.sqrt(self.sigma1_sq * self.sigma3_sq)
        return np.array([[self.sigma1_sq, c], [c, self.sigma3_sq]])

    def pdf(self, x1: np.ndarray, x3: np.ndarray) -> np.ndarray:
        s1, s3 = math.sqrt(self.sigma1_sq), math.sqrt(self.sigma3_sq)
        u, v = x1 / s1, x3 / s3
        q = (u * u - 2 * self.rho * u * v + v * v) / (1 - self.rho**2)
        return np.exp(-0.5 * q) / (2 * math.pi * s1 * s3 * math.sqrt(1 - self.rho**2))

    def location_fi(self) -> float:
        """Closed form: the (1,1) entry of the inverse covariance."""
        return float(np.linalg.inv(self.cov)[0, 0])


def fi_location_2d(p: np.ndarray, g1: Grid1D, g3: Grid1D, norm_tol: float = 1e-6) -> float:
    """Fisher information w.r.t. a shift of the first axis, ``∫∫ (∂₁p)² / p``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (g1.points, g3.points):
        raise GridMismatch(f"density shape {p.shape} vs grid {(g1.points, g3.points)}")
    _check_density(p, float(trapezoid(trapezoid(p, g1.h, 0), g3.h)), norm_tol)
    dp = central_diff(p, g1.h, axis=0)
    return float(trapezoid(trapezoid(_score_sq_density(dp, p), g1.h, 0), g3.h))


def convolve_axis0(p: np.ndarray, kernel: DistributionSpec, g1: Grid1D) -> np.ndarray:
    """``r(z, x3) = ∫ p(t, x3) k(z - t) dt`` with the kernel evaluated analytically."""
    x = g1.x
    K = kernel.pdf(x[:, None] - x[None, :]) * g1.h
    K[:, 0] *= 0.5
    K[:, -1] *= 0.5
    return K @ p


@dataclass(frozen=True)
class FII2DResult(FIIResult):
    j_p1_closed: float = math.nan
    j_r_closed: float = math.nan


def default_grids_2d(p1: BivariateGaussianSpec, noise: DistributionSpec, points: int = 1025) -> tuple[Grid1D, Grid1D]:
    reach1 = 10.0 * math.sqrt(p1.sigma1_sq + noise.variance())
    return Grid1D.symmetric(reach1, points), Grid1D.symmetric(10.0 * math.sqrt(p1.sigma3_sq), points // 2 + 1)


def check_fii_2d_joint(
    joint_pdf: Callable[[np.ndarray, np.ndarray], np.ndarray],
    noise: DistributionSpec,
    g1: Grid1D,
    g3: Grid1D,
) -> FIIResult:
    """Inequality slack for an arbitrary joint density of ``(x1, x3)``."""
    if g1.points < MIN_POINTS_2D or g3.points < MIN_POINTS_2D:
        raise GridError(f"2-D check needs at least {MIN_POINTS_2D} points per axis")
    x1, x3 = np.meshgrid(g1.x, g3.x, indexing="ij")
    p = joint_pdf(x1, x3)
    r = convolve_axis0(p, noise, g1)
    j_p1 = fi_location_2d(p, g1, g3)
    j_r = fi_location_2d(r, g1, g3, norm_tol=1e-5)
    j_n = fi_location_1d(noise.pdf(g1.x), g1)
    return FIIResult(j_p1, j_n, j_r)


def check_fii_2d_dependent(
    p1: BivariateGaussianSpec,
    noise: DistributionSpec,
    g1: Grid1D | None = None,
    g3: Grid1D | None = None,
) -> FII2DResult:
    """Dependent bivariate Gaussian convolved with noise along ``x1``.

    For Gaussian noise the inequality is an equality and both informations have
    closed forms, ``1/(σ1²(1-ρ²))`` and ``1/(σ1²(1-ρ²) + σN²)``.
    """
    if g1 is None or g3 is None:
        d1, d3 = default_grids_2d(p1, noise)
        g1, g3 = g1 or d1, g3 or d3
    res = check_fii_2d_joint(p1.pdf, noise, g1, g3)
    j_closed = p1.location_fi()
    j_r_closed = math.nan
    if isinstance(noise, Gaussian):
        j_r_closed = 1.0 / (1.0 / j_closed + noise.variance())
    return FII2DResult(res.j_p1, res.j_p2, res.j_r, j_closed, j_r_closed)

"""Symmetry-reduced metrics on a 1-D grid and their curvature.

Three metric families are supported:

* ``WarpedMetric3``: g = phi(x)^2 dx^2 + psi(x)^2 g_S2 on S^3, x in [0, 1],
  with poles at both ends of the grid.
* ``RotSphere``: g = phi(x)^2 dx^2 + psi(x)^2 dtheta^2 on S^2.
* ``ConformalTorus``: g = exp(2u)(dx^2 + dy^2) on the unit flat torus.

Spatial derivatives use fourth-order central differences in x.  Ghost values
across a pole come from the parity of the profiles (psi odd, phi even), and
pole curvatures are taken as the smooth limit of the interior formulas.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidMetric, PoleSingular

TOL_POLE = 1e-3
MIN_NODES = 16


@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing nodes x_0 = 0 < ... < x_N = 1.

    ``n`` is the number of intervals, so there are ``n + 1`` nodes.
    """

    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", x)
        if x.ndim != 1 or len(x) - 1 < MIN_NODES:
            raise InvalidMetric(f"grid needs at least {MIN_NODES} intervals")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise InvalidMetric("grid endpoints must be exactly 0 and 1")
        if np.any(np.diff(x) <= 0):
            raise InvalidMetric("grid nodes must be strictly increasing")
        n = len(x) - 1
        uniform = bool(np.allclose(np.diff(x), 1.0 / n, rtol=1e-9, atol=0))
        object.__setattr__(self, "_uniform", uniform)
        object.__setattr__(self, "_weights", None)

    @classmethod
    def uniform(cls, n: int) -> "Grid1D":
        x = np.linspace(0.0, 1.0, n + 1)
        x[0], x[-1] = 0.0, 1.0
        return cls(x)

    @property
    def n(self) -> int:
        return len(self.nodes) - 1

    @property
    def dx(self) -> float:
        """Spacing of a uniform grid (derivative stencils assume uniformity)."""
        if not self._uniform:
            raise InvalidMetric("finite-difference stencils need a uniform grid")
        return 1.0 / self.n

    @property
    def is_uniform(self) -> bool:
        return self._uniform

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights (cached; treat as read-only)."""
        if self._weights is None:
            object.__setattr__(self, "_weights", quad_weights(self.nodes))
        return self._weights


@dataclass(frozen=True)
class WarpedMetric3:
    grid: Grid1D
    phi: np.ndarray
    psi: np.ndarray

    @classmethod
    def trusted(cls, grid, phi, psi):
        """Build without validation; for callers that already checked the data."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "phi", phi)
        object.__setattr__(obj, "psi", psi)
        return obj

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)
        _check_profiles(self.grid, phi, psi)

    @property
    def dim(self) -> int:
        return 3

    def pole_slopes(self) -> np.ndarray:
        return _pole_slopes(self.grid, self.phi, self.psi)


@dataclass(frozen=True)
class RotSphere:
    grid: Grid1D
    phi: np.ndarray
    psi: np.ndarray

    @classmethod
    def trusted(cls, grid, phi, psi):
        """Build without validation; for callers that already checked the data."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "phi", phi)
        object.__setattr__(obj, "psi", psi)
        return obj

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)
        _check_profiles(self.grid, phi, psi)

    @property
    def dim(self) -> int:
        return 2

    def pole_slopes(self) -> np.ndarray:
        return _pole_slopes(self.grid, self.phi, self.psi)


@dataclass(frozen=True)
class ConformalTorus:
    """exp(2u)(dx^2 + dy^2) on [0,1)^2 with periodic M x M sampling."""

    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "u", u)
        if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] < 4:
            raise InvalidMetric("torus conformal factor must be a square M x M array")
        if not np.all(np.isfinite(u)):
            raise InvalidMetric("non-finite conformal factor")

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def dim(self) -> int:
        return 2


SurfaceMetric = Union[RotSphere, ConformalTorus]
Metric = Union[WarpedMetric3, RotSphere, ConformalTorus]


@dataclass(frozen=True)
class CurvatureField:
    """Curvature sampled at every grid node (poles by their smooth limit).

    For 3-D metrics ``K_mix`` is the sectional curvature of planes containing
    the radial direction and ``K_sph`` that of the orbit-sphere plane.  For
    surfaces ``K_mix`` holds the Gauss curvature and ``K_sph`` is None.
    Curvature-operator eigenvalues follow the factor-two convention
    (eigenvalue = 2 x sectional curvature), so R is their sum.
    """

    K_mix: np.ndarray
    K_sph: Optional[np.ndarray]
    ricci_eigs: np.ndarray
    R: np.ndarray
    op_eigs: np.ndarray
    psi_s: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def nu(self) -> np.ndarray:
        return self.op_eigs[..., -1]

    @property
    def max_abs_op(self) -> float:
        return float(np.max(np.abs(self.op_eigs)))


# ---------------------------------------------------------------------------
# validation


def _check_profiles(grid, phi, psi):
    n = len(grid.nodes)
    if phi.shape != (n,) or psi.shape != (n,):
        raise InvalidMetric("profile arrays must match the grid")
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
        raise InvalidMetric("non-finite profile values")
    if np.any(phi <= 0):
        raise InvalidMetric("phi must be positive")
    if psi[0] != 0.0 or psi[-1] != 0.0:
        raise InvalidMetric("psi must vanish exactly at both poles")
    if np.any(psi[1:-1] <= 0):
        raise InvalidMetric("psi must be positive at interior nodes")


def _pole_slopes(grid, phi, psi):
    """|dpsi/ds| at the two poles from the odd extension of psi."""
    h = grid.dx
    left = (8.0 * psi[1] - psi[2]) / (6.0 * h) / phi[0]
    right = (8.0 * psi[-2] - psi[-3]) / (6.0 * h) / phi[-1]
    return np.array([left, right])


def check_poles(m, tol: float = TOL_POLE):
    slopes = m.pole_slopes()
    bad = np.abs(slopes - 1.0)
    if np.any(bad > tol):
        raise PoleSingular(f"pole slope |psi_s| = {slopes} deviates from 1 by more than {tol}")


# ---------------------------------------------------------------------------
# finite differences


_GHOST = 3


def _pad(f, parity):
    """Extend f by three ghost nodes at each end using the given parity."""
    k = _GHOST
    left = parity * f[1:k + 1][::-1]
    right = parity * f[-k - 1:-1][::-1]
    return np.concatenate([left, f, right])


def _d1(g, h):
    k = _GHOST
    n = len(g) - 2 * k
    return (g[k - 2:k - 2 + n] - 8.0 * g[k - 1:k - 1 + n]
            + 8.0 * g[k + 1:k + 1 + n] - g[k + 2:k + 2 + n]) / (12.0 * h)


def _d2(g, h):
    k = _GHOST
    n = len(g) - 2 * k
    return (-g[k - 2:k - 2 + n] + 16.0 * g[k - 1:k - 1 + n] - 30.0 * g[k:k + n]
            + 16.0 * g[k + 1:k + 1 + n] - g[k + 2:k + 2 + n]) / (12.0 * h * h)


def _d3_at(g, i, h):
    """Fourth-order third derivative at padded index i."""
    return (g[i - 3] - 8.0 * g[i - 2] + 13.0 * g[i - 1] - 13.0 * g[i + 1]
            + 8.0 * g[i + 2] - g[i + 3]) / (8.0 * h ** 3)


def profile_derivatives(grid: Grid1D, phi, psi):
    """Return (psi_s, psi_ss, pole_K) for a pole-to-pole profile.

    ``pole_K`` is the curvature limit -psi_sss/psi_s at the two poles.
    """
    h = grid.dx
    gp = _pad(psi, -1.0)
    gf = _pad(phi, 1.0)
    psi_x = _d1(gp, h)
    psi_xx = _d2(gp, h)
    phi_x = _d1(gf, h)
    psi_s = psi_x / phi
    psi_ss = (psi_xx - psi_s * phi_x) / phi ** 2
    phi_xx = _d2(gf, h)
    k = _GHOST
    pole_K = np.empty(2)
    for j, (gi, ni, sgn) in enumerate(((k, 0, 1.0), (len(gp) - k - 1, -1, -1.0))):
        p3 = _d3_at(gp, gi, h) * sgn ** 3
        px = psi_x[ni] * sgn
        pole_K[j] = -(p3 * phi[ni] - px * phi_xx[ni]) / (phi[ni] ** 3 * px)
    return psi_s, psi_ss, pole_K


# ---------------------------------------------------------------------------
# curvature


def curvature(m: WarpedMetric3, check: bool = True) -> CurvatureField:
    """Sectional, Ricci, scalar and curvature-operator data of a warped 3-metric.

    K_mix = -psi_ss/psi, K_sph = (1 - psi_s^2)/psi^2, R = 4 K_mix + 2 K_sph.
    """
    if not isinstance(m, WarpedMetric3):
        raise TypeError("curvature() expects a WarpedMetric3; use curvature2d for surfaces")
    if check:
        check_poles(m)
    psi_s, psi_ss, pole_K = profile_derivatives(m.grid, m.phi, m.psi)
    psi = m.psi
    K_mix = np.empty_like(psi)
    K_sph = np.empty_like(psi)
    inner = slice(1, -1)
    K_mix[inner] = -psi_ss[inner] / psi[inner]
    K_sph[inner] = (1.0 - psi_s[inner] ** 2) / psi[inner] ** 2
    K_mix[[0, -1]] = pole_K
    K_sph[[0, -1]] = pole_K
    return _field3(K_mix, K_sph, psi_s)


def _field3(K_mix, K_sph, psi_s=None):
    ric_sph = K_mix + K_sph
    ricci = np.stack([2.0 * K_mix, ric_sph, ric_sph], axis=-1)
    R = 4.0 * K_mix + 2.0 * K_sph
    a, b = 2.0 * K_mix, 2.0 * K_sph
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    op = np.stack([hi, a, lo], axis=-1)  # a sits between hi and lo
    return CurvatureField(K_mix, K_sph, ricci, R, op, psi_s)


def curvature2d(m: SurfaceMetric, check: bool = True) -> CurvatureField:
    """Gauss/scalar curvature of a surface metric (R = 2K)."""
    if isinstance(m, RotSphere):
        if check:
            check_poles(m)
        psi_s, psi_ss, pole_K = profile_derivatives(m.grid, m.phi, m.psi)
        K = np.empty_like(m.psi)
        K[1:-1] = -psi_ss[1:-1] / m.psi[1:-1]
        K[[0, -1]] = pole_K
    elif isinstance(m, ConformalTorus):
        K = -np.exp(-2.0 * m.u) * flat_laplacian(m.u, m.h)
        psi_s = None
    else:
        raise TypeError(f"not a surface metric: {type(m).__name__}")
    R = 2.0 * K
    ricci = np.stack([K, K], axis=-1)
    return CurvatureField(K, None, ricci, R, R[..., None], psi_s)


def flat_laplacian(u, h):
    """Second-order five-point periodic Laplacian."""
    return (np.roll(u, 1, 0) + np.roll(u, -1, 0) + np.roll(u, 1, 1)
            + np.roll(u, -1, 1) - 4.0 * u) / (h * h)


def curvature_any(m: Metric, check: bool = True) -> CurvatureField:
    if isinstance(m, WarpedMetric3):
        return curvature(m, check)
    return curvature2d(m, check)


# ---------------------------------------------------------------------------
# lengths and volumes


def arclength(m) -> np.ndarray:
    """Cumulative meridian arclength s(x_i).

    On a uniform grid each cell uses the trapezoid rule with an endpoint
    slope correction (fourth order, phi extended evenly across the poles);
    otherwise the plain trapezoid rule.
    """
    phi = np.asarray(m.phi, dtype=float)
    if np.any(phi <= 0):
        raise InvalidMetric("phi must be positive")
    x = m.grid.nodes
    seg = 0.5 * (phi[1:] + phi[:-1]) * np.diff(x)
    try:
        h = m.grid.dx
    except InvalidMetric:
        h = None
    if h is not None:
        dphi = _d1(_pad(phi, 1.0), h)
        seg = seg - h * h / 12.0 * np.diff(dphi)
    return np.concatenate([[0.0], np.cumsum(seg)])


def volume_density(m) -> np.ndarray:
    """Volume per unit x (3-D, RotSphere) or per unit area (torus)."""
    if isinstance(m, WarpedMetric3):
        return 4.0 * np.pi * m.psi ** 2 * m.phi
    if isinstance(m, RotSphere):
        return 2.0 * np.pi * m.psi * m.phi
    if isinstance(m, ConformalTorus):
        return np.exp(2.0 * m.u)
    raise TypeError(f"unknown metric {type(m).__name__}")


def trapezoid_weights(x) -> np.ndarray:
    w = np.zeros_like(x)
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


_GREGORY = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])


def quad_weights(x) -> np.ndarray:
    """Quadrature weights on the nodes x.

    Uniform grids get the trapezoid rule with fourth-order Gregory end
    corrections; anything else falls back to the plain trapezoid rule.
    """
    x = np.asarray(x, dtype=float)
    n = len(x) - 1
    h = (x[-1] - x[0]) / n
    if n < 8 or not np.allclose(np.diff(x), h, rtol=1e-9, atol=0):
        return trapezoid_weights(x)
    w = np.full(n + 1, h)
    w[:3] = h * _GREGORY
    w[-3:] = h * _GREGORY[::-1]
    return w


def integrate(m, f) -> float:
    """Integral of the nodal field f against the Riemannian volume."""
    if isinstance(m, ConformalTorus):
        return float(np.sum(f * np.exp(2.0 * m.u)) * m.h ** 2)
    return float(np.dot(m.grid.weights, f * volume_density(m)))


def volume(m) -> float:
    if isinstance(m, ConformalTorus):
        return float(np.sum(np.exp(2.0 * m.u)) * m.h ** 2)
    return integrate(m, np.ones_like(m.psi))


def mean_scalar(m, R=None) -> float:
    """Average scalar curvature r = int R dV / int dV."""
    if R is None:
        R = curvature_any(m, check=False).R
    return integrate(m, R) / volume(m)


def ball_volume(m: WarpedMetric3, center: int, r: float, refine: int = 4001) -> float:
    """Volume of the metric ball of radius r about a point on the orbit over ``center``.

    Distances between orbit points at meridian positions s, s' and angle theta
    use d^2 = (s - s')^2 + 4 psi psi' sin^2(theta/2), exact when the center is a
    pole or the metric is flat.  Radii beyond the diameter give the total volume.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    s = arclength(m)
    total = volume(m)
    sc = s[center]
    psic = m.psi[center]
    lo, hi = max(0.0, sc - r), min(s[-1], sc + r)
    if hi <= lo:
        return 0.0
    spline = CubicSpline(s, m.psi)
    ss = np.linspace(lo, hi, refine)
    ps = np.clip(spline(ss), 0.0, None)
    gap = np.clip(r * r - (ss - sc) ** 2, 0.0, None)
    full = 4.0 * np.pi * ps ** 2
    if psic > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            part = np.where(ps > 0, np.pi * ps * gap / psic, 0.0)
        dens = np.minimum(full, part)
    else:
        dens = full
    vol = float(np.trapezoid(dens, ss))
    return min(vol, total)


def diameter(m: WarpedMetric3) -> float:
    return float(arclength(m)[-1])


def round_s3(grid: Grid1D, a: float = 1.0) -> WarpedMetric3:
    """Round 3-sphere of radius a: phi = a pi, psi = a sin(pi x)."""
    x = grid.nodes
    psi = a * np.sin(np.pi * x)
    psi[0] = psi[-1] = 0.0
    return WarpedMetric3(grid, np.full_like(x, a * np.pi), psi)


def round_s2(grid: Grid1D, a: float = 1.0) -> RotSphere:
    x = grid.nodes
    psi = a * np.sin(np.pi * x)
    psi[0] = psi[-1] = 0.0
    return RotSphere(grid, np.full_like(x, a * np.pi), psi)


def from_arclength_profile(grid: Grid1D, length: float, psi_of_s, cls=WarpedMetric3):
    """Build a metric with uniform arclength parametrisation s = length * x."""
    x = grid.nodes
    psi = np.asarray(psi_of_s(length * x), dtype=float)
    psi[0] = psi[-1] = 0.0
    return cls(grid, np.full_like(x, length), psi)

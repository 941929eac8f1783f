"""Closed-form Ricci flow solutions used as baselines.

Einstein metrics scale homothetically: with Ric = lambda g at t = 0 the flow is
g(t) = rho^2(t) g(0), rho^2 = 1 - 2 lambda t (shrinking) or 1 + 2 lambda t when
Ric = -lambda g (expanding).  The cigar is the steady soliton
(dx^2 + dy^2)/(1 + x^2 + y^2); in arclength from its tip, psi(s) = tanh(s) and
R = 4 sech^2(s), and it moves only by diffeomorphisms fixing the tip.

Noncompact solutions are returned as ``MeridianWindow`` snapshots: a meridian
profile on [0, s_max] that may or may not close at s = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, PastExtinction
from .geom import (ConformalTorus, Grid1D, RotSphere, WarpedMetric3, _d1, _d2, _pad,
                   curvature, curvature2d, flat_laplacian)

KINDS = ("einstein_shrink", "einstein_expand", "cigar", "cylinder", "round_s3", "round_s2")

# the cigar window is cut where R = 4 sech^2 s drops below this
CIGAR_EDGE_CURVATURE = 1e-4


@dataclass(frozen=True)
class MeridianWindow:
    """Rotationally symmetric metric ds^2 + psi(s)^2 g_S^{dim-1} on s in [0, length].

    ``closed`` means psi(0) = 0 is a smooth pole; otherwise the window is a
    piece of a cylinder-like end with psi > 0 everywhere.  Nodes are uniform in s.
    """

    grid: Grid1D
    length: float
    psi: np.ndarray
    dim: int
    closed: bool

    @property
    def s(self) -> np.ndarray:
        return self.length * self.grid.nodes

    @property
    def ds(self) -> float:
        return self.length / self.grid.n

    def derivatives(self):
        """psi_s and psi_ss: fourth order inside, odd reflection at a pole,
        second-order one-sided at open ends."""
        h = self.ds
        psi = self.psi
        if self.closed:
            p = _pad(psi, -1.0)
            d1, d2 = _d1(p, h), _d2(p, h)
            edge = slice(-2, None)
        else:
            d1 = np.empty_like(psi)
            d2 = np.empty_like(psi)
            d1[2:-2] = (psi[:-4] - 8 * psi[1:-3] + 8 * psi[3:-1] - psi[4:]) / (12 * h)
            d2[2:-2] = (-psi[:-4] + 16 * psi[1:-3] - 30 * psi[2:-2] + 16 * psi[3:-1]
                        - psi[4:]) / (12 * h * h)
            edge = np.r_[0, 1, -2, -1]
        g1 = np.gradient(psi, h, edge_order=2)
        g2 = np.gradient(g1, h, edge_order=2)
        d1[edge] = g1[edge]
        d2[edge] = g2[edge]
        return d1, d2

    def gauss_curvature(self) -> np.ndarray:
        """K = -psi_ss / psi (the mixed sectional curvature in dimension 3)."""
        d1, d2 = self.derivatives()
        with np.errstate(divide="ignore", invalid="ignore"):
            K = -d2 / self.psi
        if self.closed:
            # pole value from the smooth limit -psi_sss / psi_s
            p = _pad(self.psi, -1.0)
            h = self.ds
            k = 3
            p3 = (p[k - 3] - 8 * p[k - 2] + 13 * p[k - 1] - 13 * p[k + 1] + 8 * p[k + 2]
                  - p[k + 3]) / (8 * h ** 3)
            K[0] = -p3 / d1[0]
        return K

    def scalar_curvature(self) -> np.ndarray:
        K = self.gauss_curvature()
        if self.dim == 2:
            return 2.0 * K
        d1, _ = self.derivatives()
        with np.errstate(divide="ignore", invalid="ignore"):
            Ks = (1.0 - d1 ** 2) / self.psi ** 2
        if self.closed:
            Ks[0] = K[0]
        return 4.0 * K + 2.0 * Ks


Snapshot = Union[WarpedMetric3, RotSphere, MeridianWindow]


@dataclass(frozen=True)
class ExactSolution:
    """An exact solution and its maximal time interval.

    ``param`` is lambda for the Einstein kinds, the radius for cylinder and the
    round spheres; the cigar takes none.  ``dim`` selects S^2 or S^3 for the
    Einstein kinds.  ``window`` is the arclength extent of noncompact snapshots.
    """

    kind: str
    param: float = 0.5
    dim: int = 3
    window: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown exact solution {self.kind!r}; expected one of {KINDS}")
        if self.kind != "cigar" and not self.param > 0:
            raise ConfigError("solution parameter must be positive")
        if self.dim not in (2, 3):
            raise ConfigError("dim must be 2 or 3")

    @property
    def extinction_time(self) -> float:
        """End of the maximal interval (inf for immortal solutions)."""
        k, p = self.kind, self.param
        if k == "einstein_shrink":
            return 1.0 / (2.0 * p)
        if k == "round_s3":
            return p * p / 4.0
        if k == "round_s2":
            return p * p / 2.0
        if k == "cylinder":
            return p * p / (2.0 * (self.dim - 2)) if self.dim == 3 else math.inf
        return math.inf

    def scale2(self, t: float) -> float:
        """rho^2(t) relative to t = 0."""
        k, p = self.kind, self.param
        if k == "einstein_shrink":
            return 1.0 - 2.0 * p * t
        if k == "einstein_expand":
            return 1.0 + 2.0 * p * t
        if k == "round_s3":
            return 1.0 - 4.0 * t / (p * p)
        if k == "round_s2":
            return 1.0 - 2.0 * t / (p * p)
        if k == "cylinder":
            return 1.0 - 2.0 * t / (p * p) if self.dim == 3 else 1.0
        return 1.0

    def base_radius(self) -> float:
        """Curvature radius of the t = 0 metric."""
        k, p, n = self.kind, self.param, self.dim
        if k in ("einstein_shrink", "einstein_expand"):
            return math.sqrt((n - 1) / p)
        if k in ("round_s3", "round_s2", "cylinder"):
            return p
        return 1.0


def evaluate(sol: ExactSolution, t: float, grid: Grid1D) -> Snapshot:
    """Exact metric at time t sampled on ``grid``."""
    if t < 0 and sol.kind not in ("einstein_expand",):
        raise ConfigError("exact solutions are sampled for t >= 0")
    if t >= sol.extinction_time:
        raise PastExtinction(f"{sol.kind} is extinct at t = {sol.extinction_time:.6g}")
    rho2 = sol.scale2(t)
    if rho2 <= 0:
        raise PastExtinction(f"{sol.kind} has no metric at t = {t}")
    a = sol.base_radius() * math.sqrt(rho2)
    x = grid.nodes
    k = sol.kind
    if k in ("einstein_shrink", "round_s3", "round_s2"):
        dim = 2 if k == "round_s2" else (sol.dim if k == "einstein_shrink" else 3)
        psi = a * np.sin(np.pi * x)
        psi[0] = psi[-1] = 0.0
        cls = WarpedMetric3 if dim == 3 else RotSphere
        return cls(grid, np.full_like(x, a * np.pi), psi)
    if k == "einstein_expand":
        # hyperbolic ball of curvature radius a, window measured in units of a
        span = (sol.window or 3.0) * a
        s = span * x
        return MeridianWindow(grid, span, a * np.sinh(s / a), sol.dim, True)
    if k == "cylinder":
        span = (sol.window or 10.0) * sol.param
        return MeridianWindow(grid, span, np.full_like(x, a), sol.dim, False)
    # cigar: static in arclength from the tip
    span = sol.window or cigar_window()
    return MeridianWindow(grid, span, np.tanh(span * x), 2, True)


def cigar_window(edge_curvature: float = CIGAR_EDGE_CURVATURE) -> float:
    """Arclength from the tip at which R = 4 sech^2 s equals ``edge_curvature``."""
    return float(np.arccosh(math.sqrt(4.0 / edge_curvature)))


def cigar_conformal_factor(r) -> np.ndarray:
    """e^{2u} = 1/(1 + r^2) at Euclidean radius r."""
    r = np.asarray(r, dtype=float)
    return 1.0 / (1.0 + r * r)


def cigar_scalar_curvature(r) -> np.ndarray:
    """R = 4/(1 + r^2)."""
    r = np.asarray(r, dtype=float)
    return 4.0 / (1.0 + r * r)


def cigar_field(s) -> np.ndarray:
    """Radial component (along d/ds) of the soliton field V = -2 (x d/dx + y d/dy)."""
    return -2.0 * np.tanh(np.asarray(s, dtype=float))


def cigar_on_torus(m: int, half_width: float) -> ConformalTorus:
    """Cigar restricted to the square [-w, w]^2, mapped onto the unit torus grid.

    Only the interior away from the seam is meaningful.
    """
    xs = (np.arange(m) / m - 0.5) * 2.0 * half_width
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    u = math.log(2.0 * half_width) - 0.5 * np.log1p(X * X + Y * Y)
    return ConformalTorus(u)


# ---------------------------------------------------------------------------
# soliton residuals


def soliton_residual(m, kind: str = "steady", V=None, lam: float = 0.0,
                     margin: float = 0.1) -> float:
    """Max norm of 2 Ric + L_V g - 2 lam g in an orthonormal frame.

    ``kind`` is "steady" (lam = 0), "shrinking" or "expanding" (lam given with
    its sign convention: positive for shrinking).  For meridian metrics V holds
    the component along d/ds at the nodes; for the torus V is a pair of arrays
    (V^x, V^y).  Windows drop a fraction ``margin`` of nodes at open ends.
    """
    if kind == "steady":
        lam = 0.0
    elif kind not in ("shrinking", "expanding"):
        raise ConfigError(f"unknown soliton kind {kind!r}")
    if isinstance(m, ConformalTorus):
        return _torus_residual(m, V, lam)
    if isinstance(m, MeridianWindow):
        if m.dim != 2:
            raise ConfigError("soliton residual is implemented for surfaces")
        d1, d2 = m.derivatives()
        K = m.gauss_curvature()
        h = m.ds
        psi = m.psi
        n = len(psi)
        keep = np.ones(n, dtype=bool)
        cut = int(math.ceil(margin * n))
        if cut:
            keep[-cut:] = False
            if not m.closed:
                keep[:cut] = False
    elif isinstance(m, RotSphere):
        c = curvature2d(m, check=False)
        K = 0.5 * c.R
        d1 = c.psi_s
        h = float(m.phi[0]) * m.grid.dx
        psi = m.psi
        keep = np.ones(len(psi), dtype=bool)
    else:
        raise TypeError("soliton_residual expects a surface metric")
    v = np.zeros_like(psi) if V is None else np.asarray(V, dtype=float)
    if v.shape != psi.shape:
        raise ConfigError("vector field samples must match the grid")
    # V is odd across a pole (radial field); fourth-order derivative with that parity
    closed = not isinstance(m, MeridianWindow) or m.closed
    if closed:
        vp = _pad(v, -1.0)
        if isinstance(m, RotSphere):
            vp = np.concatenate([vp[:-3], -v[-2:-5:-1]])
        v_s = _d1(vp, h)
    else:
        v_s = np.gradient(v, h, edge_order=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        hoop = np.where(psi > 0, v * d1 / np.where(psi > 0, psi, 1.0), v_s)
    rr = 2.0 * K + 2.0 * v_s - 2.0 * lam
    tt = 2.0 * K + 2.0 * hoop - 2.0 * lam
    res = np.maximum(np.abs(rr), np.abs(tt))[keep]
    return float(np.max(res))


def _torus_residual(m: ConformalTorus, V, lam):
    h = m.h
    u = m.u
    R = -2.0 * np.exp(-2.0 * u) * flat_laplacian(u, h)
    if V is None:
        vx = vy = np.zeros_like(u)
    else:
        vx, vy = (np.asarray(a, dtype=float) for a in V)

    def dx(f):
        return (np.roll(f, -1, 0) - np.roll(f, 1, 0)) / (2 * h)

    def dy(f):
        return (np.roll(f, -1, 1) - np.roll(f, 1, 1)) / (2 * h)

    # (L_V g)/e^{2u} = 2 (V . grad u) I + (dV + dV^T)
    vu = vx * dx(u) + vy * dy(u)
    xx = R + 2 * vu + 2 * dx(vx) - 2 * lam
    yy = R + 2 * vu + 2 * dy(vy) - 2 * lam
    xy = dy(vx) + dx(vy)
    return float(np.max(np.maximum(np.maximum(np.abs(xx), np.abs(yy)), np.abs(xy))))

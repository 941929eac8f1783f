"""L-length, L-geodesics, reduced distance and reduced volume on stored 3-D runs.

With tau = t0 - t and sigma = sqrt(tau) the L-length of a path is

    L(gamma) = int_0^sigma_bar [2 sigma^2 R + |d gamma / d sigma|^2 / 2] d sigma,

which removes the sqrt(tau) singularity at the base point.  For rotationally
symmetric metrics, projecting a path onto one meridian keeps R and can only
shorten its speed, so minimizers run along a meridian and the problem is one
dimensional.  Positions are grid fractions x = s / L(t) of the arclength gauge,
unfolded with period 2 so that paths may run through a pole; the speed relative
to the manifold is w = L dx/dsigma + 2 sigma g with g = v - x L'(t) the drift of
material points across the grid.  Geodesics then solve

    dx/dsigma = (w - 2 sigma g) / L
    dw/dsigma = 2 sigma^2 R_s - 2 sigma Ric(e_s, e_s) w

(the last term comes from the metric changing along the path), with
w(0) = 2 v for the initial condition lim sqrt(tau) d gamma/d tau = v.

Stored runs are interpolated linearly in time between states and by four-point
Lagrange interpolation in x.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import Inapplicable, InvalidPath, ShootFailed
from .flow import FlowTrace, _in_gauge, material_drift, to_arclength_gauge
from .geom import Grid1D, WarpedMetric3, _d1, _pad, curvature, integrate
from .oracles import MeridianWindow

log = logging.getLogger(__name__)

MIN_STATES = 32
KNOTS = 64
SHOOT_STEPS = 256
GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)

# field rows: R, dR/ds, Ric(e_s, e_s), g; parity across a pole
_PARITY = np.array([1.0, -1.0, 1.0, -1.0])


# ---------------------------------------------------------------------------
# space-time field of a stored run


class RunField:
    """Curvature data of a stored run as functions of (x, t).

    ``states`` are (t, metric) pairs of one grid size, ``WarpedMetric3`` in
    arclength gauge or a 3-D ``MeridianWindow``.  ``static`` marks a fixed
    test metric: the drift and the metric-change term vanish.
    """

    def __init__(self, states, static: bool = False):
        if isinstance(states, FlowTrace):
            states = states.snapshots
        pairs = sorted(((float(t), m) for t, m in states), key=lambda p: p[0])
        if len(pairs) < 2:
            raise Inapplicable("a run needs at least two states")
        pairs = [(t, to_arclength_gauge(m) if isinstance(m, WarpedMetric3) and not _in_gauge(m) else m)
                 for t, m in pairs]
        sizes = {m.grid.n for _, m in pairs}
        if len(sizes) != 1:
            raise Inapplicable("states must share one grid size")
        self.n = sizes.pop()
        self.static = static
        self.times = np.array([t for t, _ in pairs])
        if np.any(np.diff(self.times) <= 0):
            raise Inapplicable("state times must be distinct")
        self.metrics = [m for _, m in pairs]
        self.closed = all(isinstance(m, WarpedMetric3) or m.closed for m in self.metrics)
        self.two_poles = all(isinstance(m, WarpedMetric3) for m in self.metrics)
        self.lengths = np.array([self._length(m) for m in self.metrics])
        if static or len(pairs) < 3:
            L_t = np.zeros_like(self.lengths) if static else np.gradient(self.lengths, self.times)
        else:
            L_t = np.gradient(self.lengths, self.times, edge_order=2)
        self.rows = np.stack([self._rows(m, lt) for m, lt in zip(self.metrics, L_t)])
        self.psi = np.stack([np.asarray(m.psi, dtype=float) for m in self.metrics])

    @staticmethod
    def _length(m):
        return float(m.phi[0]) if isinstance(m, WarpedMetric3) else float(m.length)

    def _rows(self, m, L_t):
        x = m.grid.nodes
        L = self._length(m)
        if isinstance(m, WarpedMetric3):
            c = curvature(m, check=False)
            R, ric = c.R, c.ricci_eigs[:, 0]
            R_s = _d1(_pad(R, 1.0), m.grid.dx) / L
            g = np.zeros_like(R) if self.static else material_drift(m) - x * L_t
        elif isinstance(m, MeridianWindow) and m.dim == 3:
            R = m.scalar_curvature()
            ric = 2.0 * m.gauss_curvature()
            R_s = np.gradient(R, m.ds, edge_order=2)
            if not self.static:
                raise Inapplicable("windows are supported as static test metrics only")
            g = np.zeros_like(R)
        else:
            raise Inapplicable("reduced geometry needs 3-D meridian states")
        if self.static:
            ric = np.zeros_like(ric)
        return np.stack([R, R_s, ric, g])

    @property
    def t0(self) -> float:
        return float(self.times[-1])

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    def _bracket(self, t):
        ts = self.times
        if t < ts[0] - 1e-12 * max(1.0, abs(ts[0])) or t > ts[-1] + 1e-12 * max(1.0, abs(ts[-1])):
            raise InvalidPath(f"time {t:.6g} outside the stored run [{ts[0]:.6g}, {ts[-1]:.6g}]")
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        a = (t - ts[k]) / (ts[k + 1] - ts[k])
        return k, min(max(a, 0.0), 1.0)

    def blend(self, t):
        """(L, rows, psi) at time t by linear interpolation."""
        k, a = self._bracket(t)
        L = (1 - a) * self.lengths[k] + a * self.lengths[k + 1]
        rows = (1 - a) * self.rows[k] + a * self.rows[k + 1]
        psi = (1 - a) * self.psi[k] + a * self.psi[k + 1]
        return L, rows, psi

    def metric_at(self, t) -> WarpedMetric3:
        L, _, psi = self.blend(t)
        if not self.two_poles:
            raise Inapplicable("volume integrals need closed 3-D states")
        grid = Grid1D.uniform(self.n)
        return WarpedMetric3.trusted(grid, np.full(self.n + 1, L), psi)

    def table(self, sigmas):
        return _Table(self, sigmas)

    def states_in(self, t_lo, t_hi) -> int:
        return int(np.count_nonzero((self.times >= t_lo - 1e-12) & (self.times <= t_hi + 1e-12)))


class _Table:
    """Field rows at a fixed list of sigma values, with vectorized lookup."""

    def __init__(self, field: RunField, sigmas):
        self.field = field
        self.sigmas = np.asarray(sigmas, dtype=float)
        n = field.n
        self.n = n
        L = np.empty(len(self.sigmas))
        pad = np.empty((len(self.sigmas), 4, n + 5))
        for j, s in enumerate(self.sigmas):
            L[j], rows, _ = field.blend(field.t0 - s * s)
            pad[j, :, 2:n + 3] = rows
            par = _PARITY[:, None]
            pad[j, :, 0:2] = rows[:, 2:0:-1] * par
            if field.two_poles:
                pad[j, :, n + 3:] = rows[:, n - 1:n - 3:-1] * par
            else:
                # open far end: quadratic extrapolation, paths may not leave [0, 1]
                pad[j, :, n + 3] = 3 * rows[:, n] - 3 * rows[:, n - 1] + rows[:, n - 2]
                pad[j, :, n + 4] = 3 * pad[j, :, n + 3] - 3 * rows[:, n] + rows[:, n - 1]
        self.L = L
        self.pad = pad

    def unfold(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            y = np.mod(x, 2.0)
        flip = y > 1.0
        return np.where(flip, 2.0 - y, y), np.where(flip, -1.0, 1.0)

    def eval(self, j, x):
        """R, R_s, Ric_ss, g at row(s) j and unfolded positions x (broadcast)."""
        y, sign = self.unfold(x)
        finite = np.isfinite(y)
        y = np.where(finite, y, 0.0)
        n = self.n
        u = y * n
        b = np.clip(np.floor(u), 0, n - 1).astype(int)
        u = u - b
        w = (-u * (u - 1) * (u - 2) / 6.0, (u + 1) * (u - 1) * (u - 2) / 2.0,
             -(u + 1) * u * (u - 2) / 2.0, (u + 1) * u * (u - 1) / 6.0)
        j = np.broadcast_to(np.asarray(j), b.shape)
        out = []
        for r in range(4):
            tab = self.pad[:, r, :]
            val = sum(wk * tab[j, b + 1 + k] for k, wk in enumerate(w))
            if _PARITY[r] < 0:
                val = val * sign
            out.append(val)
        if not np.all(finite):
            out = [np.where(finite, v, np.nan) for v in out]
        if not self.field.two_poles:
            # beyond the open end of a window: infinite action, shots blow up
            gone = (x > 1.0 + 1e-12) | (x < -1.0 - 1e-12)
            if np.any(gone):
                out = [np.where(gone, np.inf, v) for v in out]
        return out


# ---------------------------------------------------------------------------
# paths and L-length


@dataclass(frozen=True)
class SpaceTimePath:
    """Path on one meridian: node coordinates (x N) at backward times tau.

    Node coordinates may leave [0, N] only through a pole (unfolded positions).
    """

    base: float
    tau: np.ndarray
    nodes: np.ndarray
    v: Optional[float] = None
    length: Optional[float] = None

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "nodes", nodes)
        if tau.shape != nodes.shape or tau.ndim != 1 or len(tau) < 2:
            raise InvalidPath("tau and nodes must be 1-D arrays of equal length >= 2")
        if tau[0] != 0.0 or np.any(np.diff(tau) <= 0):
            raise InvalidPath("tau must start at 0 and increase")
        if abs(nodes[0] - self.base) > 1e-9 * max(1.0, abs(self.base)):
            raise InvalidPath("path must start at its base point")

    @property
    def tau_bar(self) -> float:
        return float(self.tau[-1])


def _lagrangian(tab, j, sigma, x, xp):
    R, _, _, g = tab.eval(j, x)
    L = tab.L[j]
    w = L * xp + 2.0 * sigma * g
    return 2.0 * sigma * sigma * R + 0.5 * w * w


def l_length(path: SpaceTimePath, run, static: bool = False) -> float:
    """L-length of a path, linear in sigma = sqrt(tau) between its samples.

    Each segment is integrated with a three-point Simpson rule in sigma.
    """
    field = run if isinstance(run, RunField) else RunField(run, static=static)
    n = field.n
    if not field.two_poles and (np.any(path.nodes < -1e-9) or np.any(path.nodes > n + 1e-9)):
        raise InvalidPath("path exits the grid")
    if path.tau_bar > field.t0 - field.t_start + 1e-12:
        raise InvalidPath("path reaches before the start of the run")
    sig = np.sqrt(path.tau)
    x = path.nodes / n
    mids = 0.5 * (sig[1:] + sig[:-1])
    allsig = np.empty(2 * len(sig) - 1)
    allsig[0::2] = sig
    allsig[1::2] = mids
    tab = field.table(allsig)
    h = np.diff(sig)
    xp = np.diff(x) / h
    xm = 0.5 * (x[1:] + x[:-1])
    j = np.arange(len(sig) - 1)
    a = _lagrangian(tab, 2 * j, sig[:-1], x[:-1], xp)
    m = _lagrangian(tab, 2 * j + 1, mids, xm, xp)
    b = _lagrangian(tab, 2 * j + 2, sig[1:], x[1:], xp)
    return float(np.sum(h / 6.0 * (a + 4.0 * m + b)))


def reduced_distance_of(path: SpaceTimePath, run, static: bool = False) -> float:
    """l = L / (2 sqrt(tau_bar))."""
    return l_length(path, run, static) / (2.0 * math.sqrt(path.tau_bar))


# ---------------------------------------------------------------------------
# shooting


def _shoot(tab, x0, v, sigma_bar, steps, record_every=None):
    """RK4 for (x, w, action) from x0 with w(0) = 2 v; vectorized over v."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    h = sigma_bar / steps
    x = np.full_like(v, x0)
    w = 2.0 * v
    A = np.zeros_like(v)
    rec = [x.copy()] if record_every else None

    def rhs(j, s, x, w):
        R, R_s, ric, g = tab.eval(j, x)
        L = tab.L[j]
        # escaped shots carry inf/nan and are flagged at the end
        with np.errstate(invalid="ignore", over="ignore"):
            return ((w - 2.0 * s * g) / L, 2.0 * s * s * R_s - 2.0 * s * ric * w,
                    2.0 * s * s * R + 0.5 * w * w)

    for k in range(steps):
        s = k * h
        j = 2 * k
        a1 = rhs(j, s, x, w)
        a2 = rhs(j + 1, s + 0.5 * h, x + 0.5 * h * a1[0], w + 0.5 * h * a1[1])
        a3 = rhs(j + 1, s + 0.5 * h, x + 0.5 * h * a2[0], w + 0.5 * h * a2[1])
        a4 = rhs(j + 2, s + h, x + h * a3[0], w + h * a3[1])
        x = x + h / 6.0 * (a1[0] + 2 * a2[0] + 2 * a3[0] + a4[0])
        w = w + h / 6.0 * (a1[1] + 2 * a2[1] + 2 * a3[1] + a4[1])
        A = A + h / 6.0 * (a1[2] + 2 * a2[2] + 2 * a3[2] + a4[2])
        if rec is not None and (k + 1) % record_every == 0:
            rec.append(x.copy())
    bad = ~(np.isfinite(x) & np.isfinite(A))
    return x, w, A, (np.array(rec) if rec is not None else None), bad


def _sigma_table(field, sigma_bar, steps):
    return field.table(np.linspace(0.0, sigma_bar, 2 * steps + 1))


def _check_window(field, tau_bar):
    span = field.t0 - field.t_start
    if not 0 < tau_bar < span + 1e-12:
        raise InvalidPath(f"tau_bar = {tau_bar:.6g} outside (0, {span:.6g}]")
    if not field.static and field.states_in(field.t0 - tau_bar, field.t0) < MIN_STATES:
        raise Inapplicable(f"fewer than {MIN_STATES} stored states over the tau window")


def shoot_l_geodesic(p, v: float, run, tau_bar: float, steps: int = SHOOT_STEPS,
                     static: bool = False) -> SpaceTimePath:
    """L-geodesic from node p with lim sqrt(tau) gamma' = v (along d/ds)."""
    field = run if isinstance(run, RunField) else RunField(run, static=static)
    _check_window(field, tau_bar)
    sb = math.sqrt(tau_bar)
    tab = _sigma_table(field, sb, steps)
    x, _, A, rec, bad = _shoot(tab, p / field.n, [v], sb, steps, record_every=1)
    if bad[0]:
        raise ShootFailed(f"geodesic with v={v:.4g} blew up before tau_bar")
    sig = np.linspace(0.0, sb, steps + 1)
    return SpaceTimePath(float(p), sig ** 2, rec[:, 0] * field.n, v=float(v), length=float(A[0]))


# ---------------------------------------------------------------------------
# direct minimization


_GAUSS = 0.5 / math.sqrt(3.0)


class _Knots:
    """Knot positions in sigma with a lookup table at knots and Gauss points."""

    def __init__(self, field, sigma_bar, K, grade):
        self.K = K
        self.sig = sigma_bar * (np.arange(K + 1) / K) ** grade
        self.h = np.diff(self.sig)
        mid = 0.5 * (self.sig[1:] + self.sig[:-1])
        self.g1 = mid - _GAUSS * self.h
        self.g2 = mid + _GAUSS * self.h
        self.tab = field.table(np.concatenate([self.sig, self.g1, self.g2]))

    def segment(self, k, xa, xb):
        """Two-point Gauss action of segments k (array) from xa to xb."""
        K = self.K
        h = self.h[k]
        xp = (xb - xa) / h
        f1 = _lagrangian(self.tab, K + 1 + k, self.g1[k], xa + (0.5 - _GAUSS) * (xb - xa), xp)
        f2 = _lagrangian(self.tab, 2 * K + 1 + k, self.g2[k], xa + (0.5 + _GAUSS) * (xb - xa), xp)
        return 0.5 * h * (f1 + f2)

    def total(self, x):
        k = np.arange(self.K)
        return self.segment(k, x[:, :-1], x[:, 1:]).sum(axis=1)

    def local(self, x, k, xk):
        """Action of the two segments touching knots k with x[:, k] replaced by xk."""
        return self.segment(k - 1, x[:, k - 1], xk) + self.segment(k, xk, x[:, k + 1])


def minimize_paths(field: RunField, x0: float, ends, tau_bar: float, init=None,
                   knots: int = KNOTS, grade: float = 2.0, golden_iters: int = 30,
                   max_sweeps: int = 80, tol: float = 1e-11):
    """Coordinate descent with golden-section line search on piecewise-linear paths.

    Knots sit at sigma_k = sigma_bar (k/K)^grade (tau-knots crowded towards the
    base time, where paths move fastest); ``ends`` are unfolded target positions.
    Without ``init`` the optimization runs on 4, 8, ..., ``knots`` segments, each
    level started from the previous one.  ``init`` is a callable sigma -> x
    (targets, len(sigma)) used to seed the finest level.  Knots of one parity are
    updated together.  Returns (actions, knot sigmas, paths).
    """
    ends = np.atleast_1d(np.asarray(ends, dtype=float))
    sb = math.sqrt(tau_bar)
    levels = [knots] if init is not None else [k for k in (4, 8, 16, 32, 64, 128, 256) if k < knots] + [knots]
    x = None
    old_sig = None
    for K in levels:
        kn = _Knots(field, sb, K, grade)
        sig = kn.sig
        if x is None:
            if init is not None:
                x = np.array(init(sig), dtype=float)
            else:
                x = x0 + (ends[:, None] - x0) * (sig / sb)[None, :]
        else:
            x = np.stack([np.interp(sig, old_sig, row) for row in x])
        x[:, 0] = x0
        x[:, -1] = ends
        total = kn.total(x)
        for _sweep in range(max_sweeps):
            for parity in (1, 2):
                ks = np.arange(parity, K, 2)
                if ks.size == 0:
                    continue
                half = 0.5 * np.abs(x[:, ks + 1] - x[:, ks - 1]) + 0.25 / K
                a = x[:, ks] - half
                b = x[:, ks] + half
                c = b - GOLDEN * (b - a)
                d = a + GOLDEN * (b - a)
                fc = kn.local(x, ks, c)
                fd = kn.local(x, ks, d)
                for _ in range(golden_iters):
                    left = fc < fd
                    b = np.where(left, d, b)
                    a = np.where(left, a, c)
                    c_new = np.where(left, b - GOLDEN * (b - a), d)
                    d_new = np.where(left, c, a + GOLDEN * (b - a))
                    probe = np.where(left, c_new, d_new)
                    fp = kn.local(x, ks, probe)
                    fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
                    c, d = c_new, d_new
                best = 0.5 * (a + b)
                cur = kn.local(x, ks, x[:, ks])
                new = kn.local(x, ks, best)
                x[:, ks] = np.where(new < cur, best, x[:, ks])
            new_total = kn.total(x)
            change = np.max(np.abs(total - new_total) / (np.abs(new_total) + 1e-12))
            total = new_total
            if change < tol:
                break
        old_sig = sig
    return total, old_sig, x


# ---------------------------------------------------------------------------
# reduced distance and volume


@dataclass(frozen=True)
class ReducedData:
    """Reduced distance at the nodes of the metric at t0 - tau_bar and its volume."""

    tau: float
    nodes: np.ndarray
    l: np.ndarray
    l_shoot: np.ndarray
    l_direct: np.ndarray
    reachable: np.ndarray
    V: float
    unreachable_fraction: float

    @property
    def unreliable(self) -> bool:
        return self.unreachable_fraction > 0.2

    @property
    def min_l(self) -> float:
        return float(np.nanmin(self.l))


def _roots_for_targets(X, targets, periodic):
    """Brackets (fan index, image value, target index) where the endpoint map hits a target."""
    out = []
    for i in range(len(X) - 1):
        a, b = X[i], X[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        lo, hi = min(a, b), max(a, b)
        for sgn in ((1.0, -1.0) if periodic else (1.0,)):
            base = sgn * targets
            if periodic:
                m_lo = np.ceil((lo - base) / 2.0)
                m_hi = np.floor((hi - base) / 2.0)
                for t_idx in np.flatnonzero(m_hi >= m_lo):
                    for mm in range(int(m_lo[t_idx]), int(m_hi[t_idx]) + 1):
                        out.append((i, base[t_idx] + 2.0 * mm, t_idx))
            else:
                for t_idx in np.flatnonzero((base >= lo) & (base <= hi)):
                    out.append((i, base[t_idx], t_idx))
    # drop duplicate images of the pole targets
    return sorted(set(out))


def _solve_brackets(tab, x0, sb, steps, v, X, brackets, iters=60, xtol=1e-12):
    """Illinois false position on each bracket, vectorized."""
    if not brackets:
        return np.empty(0), np.empty(0), np.empty(0)
    idx = np.array([b[0] for b in brackets])
    c = np.array([b[1] for b in brackets])
    va, vb = v[idx].copy(), v[idx + 1].copy()
    fa, fb = X[idx] - c, X[idx + 1] - c
    side = np.zeros(len(c))
    vm = va.copy()
    for _ in range(iters):
        denom = fb - fa
        vm = np.where(denom != 0, (va * fb - vb * fa) / np.where(denom != 0, denom, 1.0), 0.5 * (va + vb))
        vm = np.clip(vm, np.minimum(va, vb), np.maximum(va, vb))
        xm, _, _, _, _ = _shoot(tab, x0, vm, sb, steps)
        fm = xm - c
        if np.max(np.abs(fm)) < xtol:
            break
        same_a = np.sign(fm) == np.sign(fa)
        # Illinois: halve the retained end's value after two moves on one side
        fb = np.where(same_a & (side == 1), 0.5 * fb, fb)
        fa = np.where(~same_a & (side == -1), 0.5 * fa, fa)
        va = np.where(same_a, vm, va)
        fa = np.where(same_a, fm, fa)
        vb = np.where(same_a, vb, vm)
        fb = np.where(same_a, fb, fm)
        side = np.where(same_a, 1, -1)
    _, _, A, _, _ = _shoot(tab, x0, vm, sb, steps)
    return vm, A, c


def reduced_distance_field(run, p, tau_bar: float, fan: int = 257, steps: int = SHOOT_STEPS,
                           direct: bool = True, static: bool = False,
                           knots: int = KNOTS) -> ReducedData:
    """l(q, tau_bar) at every node q of the metric at t0 - tau_bar.

    A fan of geodesics from node p (at t0) maps initial velocities to endpoints;
    every bracket containing an image of a target is refined by false position
    and the least action wins.  With ``direct`` the coordinate-descent path
    optimizer, seeded with the best geodesic (or a straight path), runs for every
    target as well and the smaller of the two actions is kept.
    """
    field = run if isinstance(run, RunField) else RunField(run, static=static)
    _check_window(field, tau_bar)
    n = field.n
    sb = math.sqrt(tau_bar)
    tab = _sigma_table(field, sb, steps)
    x0 = p / n
    targets = np.arange(n + 1) / n
    L_max = float(field.lengths.max())
    periodic = field.two_poles
    best = np.full(n + 1, np.inf)
    best_v = np.full(n + 1, np.nan)
    best_end = np.full(n + 1, np.nan)
    vmax = 1.5 * L_max / sb
    for _attempt in range(3):
        v = np.linspace(-vmax, vmax, fan)
        X, _, _, _, bad = _shoot(tab, x0, v, sb, steps)
        X = np.where(bad, np.nan, X)
        brackets = _roots_for_targets(X, targets, periodic)
        vs, A, c = _solve_brackets(tab, x0, sb, steps, v, X, brackets)
        for (i, img, t_idx), vv, aa, cc in zip(brackets, vs, A, c):
            if np.isfinite(aa) and aa < best[t_idx]:
                best[t_idx], best_v[t_idx], best_end[t_idx] = aa, vv, cc
        if np.all(np.isfinite(best)):
            break
        vmax *= 2.0
    l_shoot = best / (2.0 * sb)
    l_direct = np.full(n + 1, np.inf)
    if direct:
        ends = np.where(np.isfinite(best_end), best_end, targets)
        init = None
        if np.all(np.isfinite(best_v)):
            _, _, _, rec, _ = _shoot(tab, x0, best_v, sb, steps, record_every=1)
            grid = np.linspace(0.0, sb, steps + 1)

            def init(sig, rec=rec, grid=grid):
                return np.stack([np.interp(sig, grid, rec[:, i]) for i in range(rec.shape[1])])
        acts, _, _ = minimize_paths(field, x0, ends, tau_bar, init=init, knots=knots)
        l_direct = acts / (2.0 * sb)
    l = np.fmin(l_shoot, l_direct)
    reach = np.isfinite(l)
    m = field.metric_at(field.t0 - tau_bar) if field.two_poles else None
    if m is not None:
        dens = np.where(reach, (4.0 * math.pi * tau_bar) ** -1.5 * np.exp(-np.where(reach, l, 0.0)), 0.0)
        V = integrate(m, dens)
        miss = integrate(m, (~reach).astype(float)) / integrate(m, np.ones(n + 1))
    else:
        V, miss = float("nan"), float(np.mean(~reach))
    if miss > 0:
        log.warning("%.1f%% of the volume unreachable at tau=%.4g", 100 * miss, tau_bar)
    return ReducedData(float(tau_bar), np.arange(n + 1), np.where(reach, l, np.nan), l_shoot,
                       l_direct, reach, float(V), float(miss))


def reduced_volume(run, p, tau_bar: float, **kw) -> float:
    """int (4 pi tau)^{-3/2} exp(-l(q, tau)) dV_{t0 - tau}(q)."""
    return reduced_distance_field(run, p, tau_bar, **kw).V


def reduced_volume_series(run, p, taus: Sequence[float], **kw):
    field = run if isinstance(run, RunField) else RunField(run)
    return [reduced_distance_field(field, p, t, **kw) for t in taus]


__all__ = ["RunField", "SpaceTimePath", "ReducedData", "l_length", "reduced_distance_of",
           "shoot_l_geodesic", "minimize_paths", "reduced_distance_field", "reduced_volume",
           "reduced_volume_series"]

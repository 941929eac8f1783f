"""Neck detection, cap gluing and the flow-with-surgery driver.

Conventions
-----------
* ``h`` is the waist radius, i.e. the minimum of psi over the interior.
* The neck coordinate z measures arclength in units of h, so the model neck
  is the unit-radius cylinder dz^2 + g_S2 scaled by h^2.
* The whole near-cylindrical window found by ``detect_neck`` is discarded and
  a cap is glued at each of its ends, tip facing the waist.  On the kept side
  the neck coordinate z = 0 lies one cap length before the tip, the conformal
  factor exp(-2 f) acts on z in [0, 3] (with the bump blend to the exact
  cylinder on [2, 3]), and beyond z = 3 the profile closes with a convex,
  exactly round tip.  Cutting closer to the waist leaves a long cylinder of
  radius about h behind the cap, which collapses again within about h^2 / 2.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, least_squares

from .errors import (ConfigError, InvalidMetric, PoleSingular, SingularityUnhandled,
                     SurgeryFailed, SurgeryRefused)
from .flow import (DEFER, FlowConfig, FlowState, FlowTrace, _in_gauge, evaluate, initial_state,
                   is_near_round, run, to_arclength_gauge)
from .geom import Grid1D, WarpedMetric3, arclength, check_poles, curvature, volume

log = logging.getLogger(__name__)

DEFAULT_DELTA = 0.02
DEFAULT_THETA = 0.01
CAP_NODES = 32
# z-range of the conformal part and of the closing cap of the literal profile
BLEND_START, BLEND_END, LOG_START, TIP = 2.0, 3.0, 3.9, 4.0


# ---------------------------------------------------------------------------
# neck detection


@dataclass(frozen=True)
class NeckRegion:
    """Near-cylindrical window around the waist.

    ``interval`` is the maximal arclength run [s_a, s_b] containing the waist on
    which all four closeness tests hold at tolerance ``delta``; ``delta_achieved``
    is the worst normalised deviation over the centred window of half-length h/delta.
    """

    interval: tuple
    h: float
    delta_achieved: float
    delta: float
    waist_index: int
    waist_s: float

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]


def _closeness(m: WarpedMetric3, h: float) -> np.ndarray:
    """Per-node deviation max(|psi/h-1|, |psi_s|, |h^2 K_sph-1|/3, |h^2 K_mix|/3)."""
    c = curvature(m, check=False)
    dev = np.stack([np.abs(m.psi / h - 1.0), np.abs(c.psi_s),
                    np.abs(h * h * c.K_sph - 1.0) / 3.0, np.abs(h * h * c.K_mix) / 3.0])
    return dev.max(axis=0)


def _waist(psi: np.ndarray) -> Optional[int]:
    """Index of the smallest strict interior local minimum of psi."""
    inner = np.arange(2, len(psi) - 2)
    is_min = (psi[inner] <= psi[inner - 1]) & (psi[inner] <= psi[inner + 1])
    cand = inner[is_min]
    if cand.size == 0:
        return None
    # middle of a flat minimum, so exact cylinders are cut at their centre
    low = cand[psi[cand] <= psi[cand].min() * (1.0 + 1e-12)]
    run = np.split(low, np.flatnonzero(np.diff(low) > 1) + 1)[0]
    return int(run[len(run) // 2])


def detect_neck(m: WarpedMetric3, delta: float = DEFAULT_DELTA) -> Optional[NeckRegion]:
    """Find the waist and test the centred window of arclength 2 h/delta."""
    if not (0.0 < delta <= 0.1):
        raise ConfigError("delta must lie in (0, 0.1]")
    if not _in_gauge(m) or not m.grid.is_uniform:
        m = to_arclength_gauge(m)
    i = _waist(m.psi)
    if i is None:
        return None
    h = float(m.psi[i])
    s = arclength(m)
    dev = _closeness(m, h)
    ok = dev <= delta
    if not ok[i]:
        return None
    a = i
    while a > 0 and ok[a - 1]:
        a -= 1
    b = i
    while b < len(s) - 1 and ok[b + 1]:
        b += 1
    half = h / delta
    if s[i] - s[a] < half or s[b] - s[i] < half:
        return None
    window = (s >= s[i] - half) & (s <= s[i] + half)
    return NeckRegion(interval=(float(s[a]), float(s[b])), h=h,
                      delta_achieved=float(dev[window].max()), delta=float(delta),
                      waist_index=i, waist_s=float(s[i]))


def strong_neck_check(history, neck: NeckRegion, t: float, delta: float) -> bool:
    """Backward-in-time test over [t - h^2, t] on the same arclength window.

    An earlier state at t' is compared with the shrinking cylinder of radius
    sqrt(h^2 + 2 (t - t')) at tolerance 2 delta.  States with no overlap in
    time are ignored; an empty history passes.
    """
    h = neck.h
    half = h / delta
    for t_prev, m in history:
        if t_prev < t - h * h or t_prev > t:
            continue
        r = math.sqrt(h * h + 2.0 * (t - t_prev))
        s = arclength(m)
        i = int(np.argmin(np.abs(s - neck.waist_s)))
        window = (s >= s[i] - half) & (s <= s[i] + half)
        if _closeness(m, r)[window].max() > 2.0 * delta:
            return False
    return True


# ---------------------------------------------------------------------------
# cap profile


def _smoothstep5(u):
    """Quintic smoothstep: 0 for u <= 0, 1 for u >= 1, C^2 at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)


def bump(z):
    """1 for z <= 2, 0 for z >= 3."""
    return 1.0 - _smoothstep5(np.asarray(z, dtype=float) - BLEND_START)


@dataclass(frozen=True)
class CapProfile:
    """The convex conformal exponent f(z) for z < 4.

    f = c exp(-P/z) on (0, 3]; f = -1/2 log(16 - z^2) on [3.9, 4); on [3, 3.9]
    f'' = exp(cubic) matches both sides to second order, which keeps f convex.
    """

    c: float
    P: float
    theta: float
    _coef: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if not (self.c > 0 and self.P > 0):
            raise ConfigError("cap constants c and P must be positive")
        if not self._coef:
            object.__setattr__(self, "_coef", _fit_bridge(self.c, self.P))

    # pieces ----------------------------------------------------------------
    def _inner(self, z, k):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        pos = z > 0
        zp = z[pos]
        e = self.c * np.exp(-self.P / zp)
        if k == 0:
            out[pos] = e
        elif k == 1:
            out[pos] = e * self.P / zp ** 2
        else:
            out[pos] = e * (self.P ** 2 / zp ** 4 - 2.0 * self.P / zp ** 3)
        return out

    def _bridge(self, z, k):
        lg0, a1, a2, a3, f3, d3 = self._coef
        width = LOG_START - BLEND_END
        u = (np.asarray(z, dtype=float) - BLEND_END) / width
        if k == 2:
            return np.exp(lg0 + a1 * u + a2 * u ** 2 + a3 * u ** 3)
        uu = np.linspace(0.0, 1.0, 4001)
        g = np.exp(lg0 + a1 * uu + a2 * uu ** 2 + a3 * uu ** 3)
        d = d3 + width * cumulative_trapezoid(g, uu, initial=0.0)
        if k == 1:
            return np.interp(u, uu, d)
        f = f3 + width * cumulative_trapezoid(d, uu, initial=0.0)
        return np.interp(u, uu, f)

    @staticmethod
    def _log(z, k):
        z = np.asarray(z, dtype=float)
        q = 16.0 - z * z
        if k == 0:
            return -0.5 * np.log(q)
        if k == 1:
            return z / q
        return (16.0 + z * z) / q ** 2

    def derivative(self, z, k: int = 0) -> np.ndarray:
        """k-th derivative of f (k = 0, 1, 2) at z < 4."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if np.any(z >= TIP):
            raise ValueError("f is defined for z < 4 only")
        out = self._inner(np.minimum(z, BLEND_END), k)
        mid = (z > BLEND_END) & (z < LOG_START)
        top = z >= LOG_START
        if mid.any():
            out[mid] = self._bridge(z[mid], k)
        if top.any():
            out[top] = self._log(z[top], k)
        return out

    def f(self, z):
        return self.derivative(z, 0)

    def smallness_ratio(self, z) -> np.ndarray:
        """(|e^{2f}-1| + |f'| + |f'|^2) / f'' on (0, 3], free of underflow."""
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0) or np.any(z > BLEND_END):
            raise ValueError("ratio is evaluated on (0, 3]")
        e = self.c * np.exp(-self.P / z)
        q = self.P / z ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            first = np.where(e > 0, np.expm1(2.0 * e) / np.where(e > 0, e, 1.0), 2.0)
        num = first + q + e * q * q
        den = self.P ** 2 / z ** 4 - 2.0 * self.P / z ** 3
        return num / den

    def satisfies_smallness(self, theta: float, samples: int = 10_000) -> bool:
        z = np.linspace(BLEND_END / samples, BLEND_END, samples)
        den = self.P ** 2 / z ** 4 - 2.0 * self.P / z ** 3
        if np.any(den <= 0):
            return False
        return bool(np.all(self.smallness_ratio(z) < theta)
                    and np.all(self.derivative(z, 2) < theta))


def _fit_bridge(c, P):
    """Coefficients of log f'' on [3, 3.9] matching f, f', f'' at both ends."""
    z3 = BLEND_END
    f3 = c * math.exp(-P / z3)
    d3 = f3 * P / z3 ** 2
    lg0 = math.log(c) - P / z3 + math.log(P * P / z3 ** 4 - 2.0 * P / z3 ** 3)
    z1 = LOG_START
    f1 = -0.5 * math.log(16.0 - z1 * z1)
    d1 = z1 / (16.0 - z1 * z1)
    lg1 = math.log((16.0 + z1 * z1) / (16.0 - z1 * z1) ** 2)
    width = z1 - z3
    uu = np.linspace(0.0, 1.0, 4001)
    target0 = d1 - d3
    target1 = f1 - f3 - width * d3
    if target0 <= 0 or target1 <= 0:
        raise ConfigError("cap constants leave no room for a convex bridge")

    def residual(a):
        a2, a3 = a
        a1 = lg1 - lg0 - a2 - a3
        p = lg0 + a1 * uu + a2 * uu ** 2 + a3 * uu ** 3
        top = p.max()
        g = np.exp(p - top)
        m0 = math.log(np.trapezoid(g, uu) * width) + top
        m1 = math.log(np.trapezoid((1.0 - uu) * g, uu) * width * width) + top
        return [m0 - math.log(target0), m1 - math.log(target1)]

    best = None
    for a2 in np.linspace(-1000.0, 4000.0, 11):
        for a3 in np.linspace(-3000.0, 1000.0, 9):
            r = least_squares(residual, [a2, a3], xtol=1e-14, ftol=1e-14)
            if best is None or r.cost < best.cost:
                best = r
            if best.cost < 1e-24:
                break
        if best.cost < 1e-24:
            break
    if best.cost > 1e-16:
        raise ConfigError("no convex bridge found for these cap constants")
    a2, a3 = best.x
    return (lg0, lg1 - lg0 - a2 - a3, a2, a3, f3, d3)


def cap_profile(theta: float = DEFAULT_THETA, c_grid=None, p_grid=None,
                samples: int = 10_000) -> CapProfile:
    """Grid search for (c, P) meeting the smallness conditions with margin theta.

    Returns the largest c and then the smallest P on the grid that pass.
    """
    if not theta > 0:
        raise ConfigError("theta must be positive")
    c_grid = [1.0, 0.5, 0.1, 0.05, 0.01] if c_grid is None else list(c_grid)
    p_grid = np.geomspace(10.0, 1e5, 161) if p_grid is None else np.asarray(p_grid)
    z = np.linspace(BLEND_END / samples, BLEND_END, samples)
    for c in c_grid:
        for P in p_grid:
            den = P * P / z ** 4 - 2.0 * P / z ** 3
            if np.any(den <= 0):
                continue
            probe = CapProfile.__new__(CapProfile)
            object.__setattr__(probe, "c", float(c))
            object.__setattr__(probe, "P", float(P))
            object.__setattr__(probe, "theta", float(theta))
            object.__setattr__(probe, "_coef", (0.0,) * 6)
            ratio_ok = np.all(probe.smallness_ratio(z) < theta)
            f2 = probe._inner(z, 2)
            if ratio_ok and np.all(f2 < theta):
                return CapProfile(float(c), float(P), float(theta))
    raise ConfigError(f"no (c, P) on the search grid meets theta={theta}")


# ---------------------------------------------------------------------------
# cap geometry


def _smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
    b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class _Closing:
    """Convex tip: turning angle alpha with psi_s = -sin(alpha), round past ``width``."""

    psi0: float
    alpha0: float
    kappa0: float
    width: float
    radius: float
    table: tuple

    @property
    def length(self) -> float:
        alpha_w = self.table[2][-1]
        return self.width + self.radius * (0.5 * math.pi - alpha_w)

    def psi(self, sigma) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        ss, ps, al = self.table
        out = np.interp(sigma, ss, ps)
        far = sigma >= self.width
        out[far] = self.radius * np.sin(np.clip(self.length - sigma[far], 0.0, None) / self.radius)
        return out


def _closing_profile(psi0, alpha0, kappa0, width, radius, n=4001):
    ss = np.linspace(0.0, width, n)
    S = _smooth_step(ss / width)
    kappa = kappa0 * (1.0 - S) + S / radius
    al = alpha0 + cumulative_trapezoid(kappa, ss, initial=0.0)
    # Simpson-like refinement is unnecessary: n is large and the integrand smooth
    ps = psi0 - cumulative_trapezoid(np.sin(al), ss, initial=0.0)
    return ss, ps, al


def make_closing(psi0: float, alpha0: float, kappa0: float, width: float) -> _Closing:
    """Solve for the tip radius so the round part closes exactly at alpha = pi/2.

    The smooth step integrates to width/2, so alpha(width) stays below pi/2
    exactly when the radius exceeds ``floor``; the root is searched above it.
    """
    room = 0.5 * math.pi - alpha0 - 0.5 * kappa0 * width
    if room <= 0:
        raise SurgeryFailed("closing cap could not be fitted")
    floor = 0.5 * width / room

    def mismatch(radius):
        _, ps, al = _closing_profile(psi0, alpha0, kappa0, width, radius)
        return ps[-1] - radius * math.cos(al[-1])

    grid = floor * np.geomspace(1.0 + 1e-9, 1e4, 80)
    vals = [mismatch(r) for r in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa * fb < 0:
            radius = brentq(mismatch, a, b, xtol=1e-15 * psi0, rtol=1e-14)
            table = _closing_profile(psi0, alpha0, kappa0, width, radius)
            return _Closing(psi0, alpha0, kappa0, width, radius, table)
    raise SurgeryFailed("closing cap could not be fitted")


@dataclass(frozen=True)
class CapGeometry:
    """Profile of one cap as a function of arclength from the z = 0 sphere."""

    h: float
    conformal_length: float
    closing: _Closing
    z_table: tuple

    @property
    def length(self) -> float:
        return self.conformal_length + self.closing.length

    def psi(self, sigma, neck_psi) -> np.ndarray:
        """Cap profile at arclength ``sigma``; ``neck_psi(z)`` samples the old neck."""
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        out = np.empty_like(sigma)
        inner = sigma <= self.conformal_length
        if inner.any():
            st, zt, ft = self.z_table
            z = np.interp(sigma[inner], st, zt)
            f = np.interp(z, zt, ft)
            beta = bump(z)
            raw = neck_psi(z)
            mixed = np.where(beta >= 1.0, raw,
                             np.sqrt(beta * raw ** 2 + (1.0 - beta) * self.h ** 2))
            out[inner] = np.exp(-f) * mixed
        if (~inner).any():
            out[~inner] = self.closing.psi(sigma[~inner] - self.conformal_length)
        return out


def cap_geometry(cap: CapProfile, h: float, total_length: Optional[float] = None) -> CapGeometry:
    """Cap of waist radius h; optionally tune the closing so the cap has a given length."""
    zt = np.linspace(0.0, BLEND_END, 6001)
    ft = cap.f(zt)
    st = h * cumulative_trapezoid(np.exp(-ft), zt, initial=0.0)
    conformal = float(st[-1])
    f3 = float(ft[-1])
    d3 = float(cap.derivative(BLEND_END, 1)[0])
    d23 = float(cap.derivative(BLEND_END, 2)[0])
    psi0 = h * math.exp(-f3)
    alpha0 = math.asin(min(d3, 1.0))
    kappa0 = d23 * math.exp(f3) / (h * math.cos(alpha0))

    def build(width):
        return make_closing(psi0, alpha0, kappa0, width)

    if total_length is None:
        closing = build(h)
    else:
        want = total_length - conformal

        def gap(width):
            return build(width).length - want
        lo, hi = 0.05 * h, 2.5 * h
        if gap(lo) * gap(hi) > 0:
            raise SurgeryFailed("requested cap length is out of reach")
        width = brentq(gap, lo, hi, xtol=1e-13 * h, rtol=1e-13)
        closing = build(width)
    return CapGeometry(h, conformal, closing, (st, zt, ft))


def standard_cap(cap: CapProfile, h: float, neck_length: float, n: int = 512) -> WarpedMetric3:
    """Exact cylinder of radius h and length ``neck_length`` closed by the cap at one end,
    mirrored at the other end; the model the glued caps are compared with."""
    geo = cap_geometry(cap, h)
    half = neck_length + geo.length
    length = 2.0 * half
    grid = Grid1D.uniform(n)
    s = length * grid.nodes
    left = np.minimum(s, length - s)
    sigma = half - left - neck_length  # distance into the cap from its z = 0 sphere
    psi = np.full_like(s, h)
    in_cap = sigma > 0
    psi[in_cap] = geo.psi(sigma[in_cap], lambda z: np.full_like(z, h))
    psi[0] = psi[-1] = 0.0
    return WarpedMetric3(grid, np.full_like(s, length), psi)


# ---------------------------------------------------------------------------
# surgery


@dataclass(frozen=True)
class SurgeryRecord:
    t: float
    h: float
    interval: tuple
    c: float
    P: float
    volume_before: float
    volume_after: float
    cut_s: tuple
    tips_s: tuple
    refine: int

    @property
    def volume_drop(self) -> float:
        return self.volume_before - self.volume_after

    def as_dict(self) -> dict:
        return {"t": self.t, "h": self.h, "s_a": self.interval[0], "s_b": self.interval[1],
                "c": self.c, "P": self.P, "volume_before": self.volume_before,
                "volume_after": self.volume_after, "volume_drop": self.volume_drop,
                "kappa_s": self.volume_drop / self.h ** 3}


def surgery_hypothesis(h: float, T: float) -> bool:
    """h^-2 >= 2 e^2 log(1 + T)."""
    return h ** -2 >= 2.0 * math.e ** 2 * math.log1p(max(T, 0.0))


def _one_side(m: WarpedMetric3, neck: NeckRegion, cap: CapProfile, refine: int,
              offset: Optional[float] = None):
    """Component keeping the part of the meridian before the waist (pole at s = 0).

    The cap tip lands at the near end of the neck window, or ``offset`` h before
    the waist when given.  The cap radius h_c is the old radius at z = 3, so the
    blend towards the exact cylinder never creates a bump.
    """
    s = arclength(m)
    length = float(s[-1])
    n = m.grid.n
    ds = length / n
    ext_s = np.concatenate([-s[:0:-1], s, 2 * length - s[-2::-1]])
    ext_p = np.concatenate([-m.psi[:0:-1], m.psi, -m.psi[-2::-1]])
    spline = CubicSpline(ext_s, ext_p)
    tip_s = neck.waist_s - (neck.waist_s - neck.interval[0] if offset is None
                            else offset * neck.h)
    # cap radius = old radius where the blend ends (z = 3), a fixed point in h_c
    hc = neck.h
    unit = cap_geometry(cap, 1.0).length
    for _ in range(20):
        new = float(spline(tip_s - (unit - BLEND_END) * hc))
        if abs(new - hc) < 1e-12 * hc:
            break
        hc = new
    j0 = int(math.floor((tip_s - unit * hc) / ds + 0.5))
    if j0 < 4:
        raise SurgeryFailed("neck too close to the pole for a cap")
    fine = ds / refine
    n_cap = max(int(round((tip_s - j0 * ds) / fine)), CAP_NODES)
    s0 = j0 * ds
    geo = cap_geometry(cap, hc, total_length=n_cap * fine)

    def neck_psi(z):
        return spline(s0 + hc * np.asarray(z))

    # kept part: original nodes, plus spline midpoints when refining
    kept = np.empty(j0 * refine + 1)
    kept[::refine] = m.psi[:j0 + 1]
    if refine > 1:
        sub = np.arange(j0 * refine + 1) * fine
        mask = np.ones(j0 * refine + 1, dtype=bool)
        mask[::refine] = False
        kept[mask] = spline(sub[mask])
    sigma = np.arange(1, n_cap + 1) * fine
    tip = geo.psi(sigma, neck_psi)
    psi = np.concatenate([kept, tip])
    psi[0] = psi[-1] = 0.0
    total = s0 + n_cap * fine
    grid = Grid1D.uniform(len(psi) - 1)
    try:
        comp = WarpedMetric3(grid, np.full(len(psi), total), psi)
        check_poles(comp, tol=2e-3)
    except (InvalidMetric, PoleSingular) as exc:
        raise SurgeryFailed(f"surgery produced an invalid component: {exc}") from exc
    return comp, s0, total


def _mirror(m: WarpedMetric3) -> WarpedMetric3:
    return WarpedMetric3(m.grid, m.phi[::-1].copy(), m.psi[::-1].copy())


def do_surgery(m: WarpedMetric3, neck: NeckRegion, cap: CapProfile, T: float,
               refine: Optional[int] = None, offset: Optional[float] = None):
    """Discard the neck window and close both sides with caps.

    Returns (components, record).  ``refine`` subdivides every cell so that at
    least CAP_NODES nodes fall on each cap; by default it is chosen from h.
    """
    if not surgery_hypothesis(neck.h, T):
        raise SurgeryRefused(f"h = {neck.h:.4g} too large for surgery at T = {T:.4g}")
    if not _in_gauge(m) or not m.grid.is_uniform:
        raise SurgeryFailed("surgery expects a state in the arclength gauge")
    s = arclength(m)
    length = float(s[-1])
    ds = length / m.grid.n
    if refine is None:
        nominal = cap_geometry(cap, neck.h).length
        refine = max(1, int(math.ceil(CAP_NODES * ds / nominal)))
    left, s0_left, tip_left = _one_side(m, neck, cap, refine, offset)
    flipped = _mirror(m)
    neck_r = replace(neck, waist_index=m.grid.n - neck.waist_index,
                     waist_s=length - neck.waist_s,
                     interval=(length - neck.interval[1], length - neck.interval[0]))
    right, s0_right, tip_right = _one_side(flipped, neck_r, cap, refine, offset)
    right = _mirror(right)
    before = volume(m)
    after = volume(left) + volume(right)
    record = SurgeryRecord(t=float(T), h=neck.h, interval=neck.interval, c=cap.c, P=cap.P,
                           volume_before=before, volume_after=after,
                           cut_s=(s0_left, length - s0_right),
                           tips_s=(tip_left, length - tip_right), refine=refine)
    return [left, right], record


# ---------------------------------------------------------------------------
# driver


@dataclass(frozen=True)
class SurgeryConfig:
    """Flow-with-surgery settings.

    After a surgery each component starts with a fresh cap whose curvature is
    already about 2/h^2, so its blowup threshold is raised to
    ``threshold_growth`` times its initial max |op| (never below the base value).
    """

    flow: FlowConfig = field(default_factory=lambda: FlowConfig(t_end=100.0))
    delta: float = DEFAULT_DELTA
    theta: float = DEFAULT_THETA
    strong_check: bool = True
    history: int = 64
    max_surgeries: int = 16
    threshold_growth: float = 300.0
    component_grid: Optional[int] = None
    cap: Optional[CapProfile] = None

    def __post_init__(self):
        if not (0.0 < self.delta <= 0.1):
            raise ConfigError("delta must lie in (0, 0.1]")
        if self.flow.dim != 3:
            raise ConfigError("surgery needs a 3-D flow mode")
        if self.max_surgeries < 0 or self.history < 1:
            raise ConfigError("surgery counts must be positive")
        if not self.threshold_growth >= 1.0:
            raise ConfigError("threshold_growth must be at least 1")


@dataclass
class SurgeryTrace:
    """All component runs of one flow-with-surgery, in the order they ran.

    ``events`` holds (kind, t, info) tuples with kind in {"surgery",
    "extinction", "singularity"}.
    """

    runs: list = field(default_factory=list)
    surgeries: list = field(default_factory=list)
    extinctions: list = field(default_factory=list)
    events: list = field(default_factory=list)
    post_surgery: list = field(default_factory=list)
    outcome: Optional[str] = None

    @property
    def surgery_count(self) -> int:
        return len(self.surgeries)

    def events_of(self, kind) -> list:
        return [e for e in self.events if e[0] == kind]


def pinching_violation(m: WarpedMetric3, T: float) -> float:
    """Largest relative shortfall of R >= (-nu)[log(-nu) + log(1+T) - 3] where nu < 0.

    Returns 0 when the inequality holds everywhere (or nu >= 0).
    """
    c = curvature(m, check=False)
    nu = c.nu
    neg = nu < 0
    if not neg.any():
        return 0.0
    x = -nu[neg]
    rhs = x * (np.log(x) + math.log1p(T) - 3.0)
    gap = (rhs - c.R[neg]) / np.maximum(np.abs(rhs), np.abs(c.R[neg]))
    return float(max(0.0, gap.max()))


def _declared_extinct(state: FlowState, cfg: SurgeryConfig) -> bool:
    """Discard rule: positive curvature operator and near-round."""
    diag = evaluate(state.metric, cfg.flow)
    return is_near_round(state.metric, diag, cfg.flow.round_tolerance)


def surgery_loop(initial: WarpedMetric3, cfg: SurgeryConfig) -> SurgeryTrace:
    """Flow, cut at each detected neck, and continue every component.

    Components created by surgery that are positively curved and near round are
    declared extinct at once; the others are flowed until extinction, ``t_end``
    or a further singularity.  A blowup without a detectable neck raises
    SingularityUnhandled carrying the partial trace.
    """
    cap = cfg.cap if cfg.cap is not None else cap_profile(cfg.theta)
    out = SurgeryTrace()
    queue = deque([(initial_state(initial), cfg.flow)])
    while queue:
        state, flow_cfg = queue.popleft()
        history = deque(maxlen=cfg.history)

        def remember(st, tr, row, _h=history):
            _h.append((st.t, st.metric))

        def on_singularity(st, _h=history):
            neck = detect_neck(st.metric, cfg.delta)
            if neck is None:
                log.info("blowup at t=%.6g without a detectable neck", st.t)
                return None
            if cfg.strong_check and not strong_neck_check(list(_h), neck, st.t, cfg.delta):
                log.info("neck at t=%.6g fails the backward-in-time check", st.t)
                return None
            if not surgery_hypothesis(neck.h, st.t):
                log.info("neck radius %.4g too large at t=%.6g; flowing on", neck.h, st.t)
                return DEFER
            if len(out.surgeries) >= cfg.max_surgeries:
                log.info("surgery budget exhausted at t=%.6g", st.t)
                return None
            comps, rec = do_surgery(st.metric, neck, cap, st.t)
            out.surgeries.append(rec)
            out.events.append(("surgery", st.t, rec.as_dict()))
            out.post_surgery.append([pinching_violation(c, st.t) for c in comps])
            n = cfg.component_grid
            return [FlowState(t=st.t, metric=c if n is None else to_arclength_gauge(c, n))
                    for c in comps]

        try:
            tr = run(state, flow_cfg, hooks=(remember,), on_singularity=on_singularity)
        except SingularityUnhandled as exc:
            out.runs.append(exc.trace)
            t_bad = exc.state.t if exc.state is not None else float("nan")
            out.events.append(("singularity", t_bad, {}))
            out.outcome = "singularity"
            raise SingularityUnhandled(str(exc), trace=out, state=exc.state) from exc
        out.runs.append(tr)
        if tr.outcome == "extinct":
            out.extinctions.append(tr.final_state.t)
            out.events.append(("extinction", tr.final_state.t, {}))
        elif tr.outcome == "surgery":
            for child in tr.children:
                if _declared_extinct(child, cfg):
                    out.extinctions.append(child.t)
                    out.events.append(("extinction", child.t, {"discarded": True}))
                    continue
                start = evaluate(child.metric, flow_cfg).max_op
                threshold = max(cfg.flow.curvature_blowup_threshold,
                                cfg.threshold_growth * start)
                queue.append((child, replace(cfg.flow, curvature_blowup_threshold=threshold)))
        else:
            out.outcome = tr.outcome
    if out.outcome is None:
        out.outcome = "extinct"
    return out

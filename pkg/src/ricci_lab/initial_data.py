"""Whitelisted initial metrics.

* ``dumbbell``: S^3 shaped like a chain of round bulbs joined by thin necks.
* ``dented_sphere``: round S^2 or S^3 with a rotationally symmetric conformal dent.
* ``torus_bump``: flat torus with a sinusoidal conformal factor.

The dumbbell is the boundary of a smoothed union of round 4-balls and a neck
cylinder in R^4, so its meridian is an embedded curve: |psi_s| <= 1 everywhere
and both poles are smooth by construction.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import ConfigError
from .flow import impose_pole_slope
from .geom import ConformalTorus, Grid1D, RotSphere, WarpedMetric3, curvature


def _check_range(name, value, lo, hi):
    if not (lo <= value <= hi):
        raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")


def _profile_squared(z, centers, bulb, neck, neck_span, blend):
    """Smooth maximum of the squared radii of the pieces at axial positions z."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    pieces = [bulb ** 2 - (z - c) ** 2 for c in centers]
    lo, hi = neck_span
    outside = np.maximum(lo - z, 0.0) + np.maximum(z - hi, 0.0)
    pieces.append(neck ** 2 - 50.0 * bulb ** 2 * outside ** 2)
    stack = np.stack(pieces)
    top = stack.max(axis=0)
    return top + blend * np.log(np.exp((stack - top) / blend).sum(axis=0))


def _profile_slope(z, *args, eps=1e-6):
    return (_profile_squared(z + eps, *args) - _profile_squared(z - eps, *args)) / (2 * eps)


def dumbbell_curve(neck_ratio=0.35, bulb_count=2, neck_length=3.0, blend=0.02):
    """Arclength-parametrised meridian (length, spline psi(s)) with unit bulbs."""
    _check_range("neck_ratio", neck_ratio, 0.05, 0.8)
    if int(bulb_count) != bulb_count or not (2 <= bulb_count <= 5):
        raise ConfigError("bulb_count must be an integer in [2, 5]")
    _check_range("neck_length", neck_length, 0.0, 20.0)
    _check_range("blend", blend, 1e-4, 0.2)
    b = 1.0
    h0 = neck_ratio * b
    gap = 2.0 * np.sqrt(b * b - h0 * h0) + neck_length
    centers = [k * gap for k in range(int(bulb_count))]
    args = (centers, b, h0, (centers[0], centers[-1]), blend * b * b)

    def S(z):
        return float(_profile_squared(z, *args)[0])

    z_left = brentq(S, centers[0] - 2 * b, centers[0])
    z_right = brentq(S, centers[-1], centers[-1] + 2 * b)

    def rhs(_s, y):
        z, r = y
        dS = float(_profile_slope(np.array([z]), *args)[0])
        nrm = np.hypot(2.0 * r, dS)
        return [2.0 * r / nrm, dS / nrm]

    def hit_pole(s, y):
        return y[1] if s > 1e-3 else 1.0
    hit_pole.terminal = True
    hit_pole.direction = -1

    span = 4 * (z_right - z_left) + 10
    sol = solve_ivp(rhs, (0.0, span), [z_left, 0.0], method="DOP853", rtol=1e-11, atol=1e-12,
                    events=hit_pole, dense_output=True, max_step=0.01)
    if not sol.t_events[0].size:
        raise ConfigError("dumbbell meridian did not close")
    length = float(sol.t_events[0][0])
    ss = np.linspace(0.0, length, 8001)
    rr = sol.sol(ss)[1]
    rr[0] = rr[-1] = 0.0
    ext_s = np.concatenate([-ss[:0:-1], ss, 2 * length - ss[-2::-1]])
    ext_r = np.concatenate([-rr[:0:-1], rr, -rr[-2::-1]])
    return length, CubicSpline(ext_s, ext_r)


def _sample(length, spline, n, scale, cls=WarpedMetric3):
    grid = Grid1D.uniform(n)
    psi = scale * spline(length * grid.nodes)
    psi = impose_pole_slope(psi, scale * length, grid.dx)
    return cls(grid, np.full(n + 1, scale * length), psi)


def dumbbell(neck_ratio=0.35, bulb_count=2, n=512, neck_length=3.0, blend=0.02,
             scale=None) -> WarpedMetric3:
    """Dumbbell S^3; by default scaled so that nu >= -1 and R >= -1 at t = 0."""
    length, spline = dumbbell_curve(neck_ratio, bulb_count, neck_length, blend)
    if scale is None:
        probe = _sample(length, spline, max(n, 1024), 1.0)
        c = curvature(probe)
        worst = max(1.0, -float(c.nu.min()), -float(c.R.min()))
        scale = float(np.sqrt(worst)) * 1.0001
    _check_range("scale", scale, 1e-3, 1e3)
    return _sample(length, spline, n, scale)


def dented_sphere(amplitude=0.2, mode=2, n=512, dim=2, radius=1.0):
    """Round sphere with conformal factor exp(2 a cos(mode * s / radius)).

    cos(k s) is even about both poles, so the deformed metric stays smooth.
    """
    _check_range("amplitude", amplitude, -0.6, 0.6)
    if int(mode) != mode or not (1 <= mode <= 12):
        raise ConfigError("mode must be an integer in [1, 12]")
    _check_range("radius", radius, 1e-3, 1e3)
    grid = Grid1D.uniform(n)
    x = grid.nodes
    w = amplitude * np.cos(mode * np.pi * x)
    psi = radius * np.sin(np.pi * x) * np.exp(w)
    psi[0] = psi[-1] = 0.0
    phi = radius * np.pi * np.exp(w)
    cls = WarpedMetric3 if dim == 3 else RotSphere
    if dim not in (2, 3):
        raise ConfigError("dim must be 2 or 3")
    return cls(grid, phi, psi)


def torus_bump(amplitude=0.3, mode=1, m=32):
    """u(x, y) = amplitude * sin(2 pi mode x) on the unit torus."""
    _check_range("amplitude", amplitude, -2.0, 2.0)
    if int(mode) != mode or not (1 <= mode <= 8):
        raise ConfigError("mode must be an integer in [1, 8]")
    if not (8 <= m <= 512):
        raise ConfigError("torus grid size must lie in [8, 512]")
    x = np.arange(m) / m
    u = amplitude * np.sin(2 * np.pi * mode * x)[:, None] * np.ones((1, m))
    return ConformalTorus(u)

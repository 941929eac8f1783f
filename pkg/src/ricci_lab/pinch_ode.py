"""Pointwise curvature-operator ODE and the convex sets it preserves.

The eigenvalues lam >= mu >= nu of the curvature operator of a 3-manifold
evolve under the reaction ODE

    lam' = lam^2 + mu nu,   mu' = mu^2 + lam nu,   nu' = nu^2 + lam mu.

Everything here is vectorized over a batch of samples; a state array has
shape (3, n) with rows (lam, mu, nu).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

__all__ = ["CurvatureODEState", "Trajectory", "SetReport", "rhs", "integrate", "integrate_batch",
           "f_curve", "f_inverse", "set_margin", "sample_set", "preserved_set_check",
           "pinching_delta", "SETS", "write_trajectory_csv"]

E2 = math.exp(2.0)
BLOWUP_FACTOR = 1e6
# per-sample step is capped by STEP_FRACTION / max|component|, which makes the
# integration near blowup effectively uniform in log-scale
STEP_FRACTION = 0.01


@dataclass
class CurvatureODEState:
    lam: float
    mu: float
    nu: float
    t: float = 0.0

    def __post_init__(self):
        if not (self.lam >= self.mu >= self.nu):
            raise ValueError("eigenvalues must satisfy lam >= mu >= nu")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.lam, self.mu, self.nu], dtype=float)

    @property
    def trace(self) -> float:
        return self.lam + self.mu + self.nu


@dataclass
class Trajectory:
    """Samples of one trajectory; ``normalized`` rows are state / trace."""
    t: np.ndarray
    states: np.ndarray          # (k, 3)
    blowup: bool
    blowup_time: float = math.nan

    @property
    def normalized(self) -> np.ndarray:
        tr = self.states.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.states / tr


def rhs(x: np.ndarray) -> np.ndarray:
    lam, mu, nu = x
    return np.stack([lam * lam + mu * nu, mu * mu + lam * nu, nu * nu + lam * mu])


def _rk4(x, h):
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_sizes(x, t, t_end, dt, active):
    big = np.max(np.abs(x), axis=0)
    with np.errstate(divide="ignore"):
        h = np.minimum(dt, STEP_FRACTION / big)
    h = np.minimum(h, t_end - t)
    return np.where(active, np.maximum(h, 0.0), 0.0)


def integrate_batch(x0, t_end: float, dt: float, t0: float = 0.0,
                    observer: Optional[Callable] = None, max_steps: int = 10_000_000):
    """Advance a batch of states with RK4 until ``t_end`` or blowup.

    Blowup means some component exceeds BLOWUP_FACTOR / dt.  ``observer(t, x,
    t_prev, x_prev, active)`` is called after every step.  Returns (t, x,
    blown) with per-sample final times, states and blowup flags.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.array(x0, dtype=float).reshape(3, -1).copy()
    n = x.shape[1]
    t = np.full(n, float(t0))
    blown = np.zeros(n, dtype=bool)
    limit = BLOWUP_FACTOR / dt
    active = t < t_end
    for _ in range(max_steps):
        if not active.any():
            break
        h = _step_sizes(x, t, t_end, dt, active)
        x_prev, t_prev = x, t
        x = np.where(active, _rk4(x, h), x)
        t = t + h
        over = np.max(np.abs(x), axis=0) > limit
        blown |= active & over
        if observer is not None:
            observer(t, x, t_prev, x_prev, active)
        active = active & ~over & (t < t_end - 1e-15 * max(1.0, abs(t_end)))
    return t, x, blown


def integrate(state: CurvatureODEState, t_end: float, dt: float) -> Trajectory:
    """Single trajectory with every RK4 step recorded."""
    ts, xs = [state.t], [state.array]

    def keep(t, x, *_):
        ts.append(float(t[0]))
        xs.append(x[:, 0].copy())

    t, x, blown = integrate_batch(state.array, t_end, dt, t0=state.t, observer=keep)
    return Trajectory(np.array(ts), np.array(xs), bool(blown[0]),
                      float(t[0]) if blown[0] else math.nan)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "lam", "mu", "nu", "lam_n", "mu_n", "nu_n"])
        for t, s, q in zip(traj.t, traj.states, traj.normalized):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in s] + [repr(float(v)) for v in q])


# ---------------------------------------------------------------------------
# f(x) = x(log x - 3) on [e^2, inf) and its inverse


def f_curve(x):
    x = np.asarray(x, dtype=float)
    return x * (np.log(x) - 3.0)


def f_inverse(y, tol: float = 1e-12, max_iter: int = 200):
    """Inverse of x(log x - 3) on x >= e^2, by Newton's method kept inside a bracket."""
    y = np.asarray(y, dtype=float)
    if np.any(y < -E2 * (1 + 1e-12)):
        raise ValueError("f_inverse is defined for y >= -e^2")
    y = np.maximum(y, -E2)
    if np.all(y == -E2):
        return np.full(y.shape, E2) if y.ndim else E2
    lo = np.full(y.shape, E2)
    hi = 2.0 * np.abs(y) + math.exp(3.0) + 1.0
    while np.any(f_curve(hi) < y):
        hi = np.where(f_curve(hi) < y, 2.0 * hi, hi)
    # fixed-point guess x = y / (log x - 3) for large y
    x = np.maximum(y, 1.0)
    for _ in range(3):
        x = np.maximum(y / np.maximum(np.log(np.maximum(x, E2)) - 3.0, 1.0), E2)
    x = np.where(y > 10.0, x, math.exp(3.0))
    # f has zero slope at e^2; near there f(x) ~ -e^2 + (x - e^2)^2 / (2 e^2)
    near = y < 1.0 - E2
    x = np.where(near, E2 + np.sqrt(2.0 * E2 * np.maximum(y + E2, 0.0)), x)
    x = np.clip(x, lo, hi)
    for _ in range(max_iter):
        g = f_curve(x) - y
        lo = np.where(g < 0, x, lo)
        hi = np.where(g > 0, x, hi)
        slope = np.log(x) - 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            nx = x - g / slope
        bad = ~np.isfinite(nx) | (nx <= lo) | (nx >= hi)
        nx = np.where(bad, 0.5 * (lo + hi), nx)
        done = np.abs(nx - x) <= tol * np.maximum(1.0, np.abs(nx))
        x = nx
        if np.all(done):
            break
    x = np.where(y <= -E2, E2, x)
    return x if x.ndim else float(x)


# ---------------------------------------------------------------------------
# preserved sets


def pinching_delta(eps: float) -> float:
    """delta for Ric >= eps R g, written as mu + nu >= delta lam."""
    if not 0.0 <= eps < 0.5:
        raise ValueError("eps must lie in [0, 1/2)")
    return 2.0 * eps / (1.0 - 2.0 * eps)


def _margin_cone(x, t, **_):
    lam, mu, nu = x
    return nu, np.maximum(np.abs(x).max(axis=0), 1.0)


def _margin_pinching(x, t, eps=0.1, **_):
    lam, mu, nu = x
    d = pinching_delta(eps)
    m = np.minimum(mu + nu, mu + nu - d * lam)
    return m, np.maximum(np.abs(x).max(axis=0), 1.0)


def _margin_hamilton_ivey(x, t, **_):
    lam, mu, nu = x
    s = 1.0 + np.asarray(t, dtype=float)
    R = lam + mu + nu
    m1 = R * s + 3.0
    # f^{-1} >= e^2, so nu (1+t) + f^{-1}(R (1+t)) >= 0 only binds where
    # nu (1+t) < -e^2; there it is equivalent (f increasing) to R (1+t) >= f(-nu (1+t))
    m2 = np.full(R.shape, np.inf)
    live = nu * s < -E2
    if live.any():
        m2[live] = (R * s)[live] - f_curve(-(nu * s)[live])
    scale = np.maximum(np.abs(x).max(axis=0) * s, 1.0)
    return np.minimum(m1, m2), scale


SETS: Dict[str, Callable] = {
    "cone": _margin_cone,
    "pinching": _margin_pinching,
    "hamilton_ivey": _margin_hamilton_ivey,
}


def set_margin(set_id: str, x, t=0.0, **params):
    """Signed distance-like margin (>= 0 inside) and its scale."""
    try:
        fn = SETS[set_id]
    except KeyError:
        raise ValueError(f"unknown set {set_id!r}; choose from {sorted(SETS)}") from None
    return fn(np.asarray(x, dtype=float).reshape(3, -1), t, **params)


def _sorted_desc(a):
    return -np.sort(-a, axis=0)


def _boundary_slack(rng, n, boundary_fraction):
    """Zero slack for a share of samples, tiny slack for some, uniform for the rest."""
    u = rng.random(n)
    slack = rng.random(n)
    slack = np.where(u < boundary_fraction, 0.0, slack)
    slack = np.where((u >= boundary_fraction) & (u < 2 * boundary_fraction), 1e-6 * slack, slack)
    return slack


def sample_set(set_id: str, n: int, rng: np.random.Generator, boundary_fraction: float = 0.25,
               scale: float = 1.0, eps: float = 0.1) -> np.ndarray:
    """Random ordered states inside a set with many on or next to its boundary."""
    if set_id == "cone":
        x = _sorted_desc(rng.random((3, n)) * scale)
        x[2] = _boundary_slack(rng, n, boundary_fraction) * x[1]
        return x
    if set_id == "pinching":
        d = pinching_delta(eps)
        lam = scale * rng.random(n)
        s = (d + _boundary_slack(rng, n, boundary_fraction) * (2.0 - d)) * lam
        mu = s / 2 + rng.random(n) * (lam - s / 2)
        return np.stack([lam, mu, s - mu])
    if set_id == "hamilton_ivey":
        # half with nu >= -1 (the usual normalization), half on the f-curve side
        half = n // 2
        a = _sorted_desc(rng.uniform(-1.0, 1.0, (3, half)) * scale)
        a[2] = np.where(rng.random(half) < boundary_fraction, -1.0, a[2])
        k = n - half
        x_lo = f_inverse(-3.0)      # keeps R >= -3
        xneg = x_lo + rng.random(k) * 40.0
        R = f_curve(xneg) + _boundary_slack(rng, k, boundary_fraction) * 5.0
        nu = -xneg
        pair = R - nu
        mu = nu + rng.random(k) * (pair / 2 - nu)
        b = np.stack([pair - mu, mu, nu])
        return np.concatenate([a, b], axis=1)
    raise ValueError(f"unknown set {set_id!r}")


@dataclass
class SetReport:
    set_id: str
    samples: int
    exits: int
    worst_margin: float         # most negative relative margin seen (0 if none)
    worst_sample: int
    blowups: int
    ordering_swaps: int
    trace_violations: int
    worst_trace_deficit: float
    pinching_trend: Optional[bool] = None
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        ok = self.exits == 0 and self.ordering_swaps == 0 and self.trace_violations == 0
        return ok and self.pinching_trend is not False

    def as_text(self) -> str:
        trend = "" if self.pinching_trend is None else f" pinching_trend={self.pinching_trend}"
        return (f"{self.set_id}: {'PASS' if self.passed else 'FAIL'} samples={self.samples} "
                f"exits={self.exits} worst_margin={self.worst_margin:.3e} blowups={self.blowups} "
                f"ordering_swaps={self.ordering_swaps} trace_violations={self.trace_violations}"
                f"{trend}")


def preserved_set_check(set_id: str, samples, horizon: float = 5.0, dt: float = 1e-3,
                        rel_tol: float = 1e-7, **params) -> SetReport:
    """Integrate every sample and report exits from the set before blowup or horizon.

    Alongside set membership this watches the ordering lam >= mu >= nu and the
    discrete trace bound  Delta T >= (1/3) dt min(T_k^2, T_{k+1}^2)  (valid since
    T is nondecreasing).  For the pinching set the normalized spread
    (lam - nu)/T of blown-up samples must shrink over the last decade of T.
    """
    x0 = np.asarray(samples, dtype=float).reshape(3, -1)
    n = x0.shape[1]
    m0, sc0 = set_margin(set_id, x0, 0.0, **params)
    if np.any(m0 < -rel_tol * sc0):
        raise ValueError(f"{int(np.sum(m0 < -rel_tol * sc0))} samples start outside {set_id!r}")

    worst = np.zeros(n)
    swaps = np.zeros(n, dtype=bool)
    trace_bad = np.zeros(n, dtype=bool)
    trace_worst = [0.0]
    track = set_id == "pinching"
    # normalized spread (lam - nu)/T at the last two crossings of a power of ten
    next_decade = np.full(n, 10.0)
    q_prev = np.full(n, np.nan)
    q_last = np.full(n, np.nan)

    def observer(t, x, t_prev, x_prev, active):
        m, sc = set_margin(set_id, x, t, **params)
        np.minimum(worst, np.where(active, m / sc, 0.0), out=worst)
        tol_o = 1e-12 * np.abs(x).max(axis=0)
        swaps[:] |= active & ((x[0] < x[1] - tol_o) | (x[1] < x[2] - tol_o))
        T0, T1 = x_prev.sum(axis=0), x.sum(axis=0)
        same = np.sign(T0) == np.sign(T1)
        bound = np.where(same, np.minimum(T0 * T0, T1 * T1), 0.0) * (t - t_prev) / 3.0
        deficit = bound - (T1 - T0)
        tol_t = 1e-8 * np.maximum(np.abs(T1), 1.0) + 1e-12
        viol = active & (deficit > tol_t)
        trace_bad[:] |= viol
        if viol.any():
            trace_worst[0] = max(trace_worst[0], float(np.max((deficit / tol_t)[viol])))
        if track:
            cross = active & (T1 >= next_decade)
            if cross.any():
                q = (x[0] - x[2]) / np.where(cross, T1, 1.0)
                q_prev[:] = np.where(cross, q_last, q_prev)
                q_last[:] = np.where(cross, q, q_last)
                up = 10.0 ** (np.floor(np.log10(np.where(cross, T1, 1.0))) + 1.0)
                next_decade[:] = np.where(cross, up, next_decade)

    _, _, blown = integrate_batch(x0, horizon, dt, observer=observer)
    trend = None
    if track:
        judged = blown & np.isfinite(q_prev)
        trend = bool(np.all(q_last[judged] <= q_prev[judged] + 1e-9))
    exits = worst < -rel_tol
    return SetReport(set_id=set_id, samples=n, exits=int(exits.sum()),
                     worst_margin=float(min(worst.min(), 0.0)), worst_sample=int(np.argmin(worst)),
                     blowups=int(blown.sum()), ordering_swaps=int(swaps.sum()),
                     trace_violations=int(trace_bad.sum()), worst_trace_deficit=trace_worst[0],
                     pinching_trend=trend, params=dict(params))

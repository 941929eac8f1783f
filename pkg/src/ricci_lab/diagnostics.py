"""Pointwise inequalities and monotone quantities evaluated along flow traces.

Every check returns an ``InequalityReport``.  A checked point with deficit d
(how far the inequality misses, positive when violated) and reference scale S
counts as a violation when d > max(abs_tol, rel_tol * S); the report stores the
worst value of d / tol - 1, so ``passed`` is simply ``worst <= 0``.

Checks that need nodal data take a sequence of ``(t, metric)`` pairs, e.g.
``FlowTrace.snapshots`` from a run with ``keep_snapshots=True``.  Meridian
metrics are flowed in a moving arclength gauge, so time derivatives at a fixed
point of the manifold are formed as material derivatives using the drift
returned by ``flow.material_drift``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import Inapplicable
from .flow import FlowTrace, _in_gauge, material_drift, to_arclength_gauge
from .geom import (ConformalTorus, CurvatureField, RotSphere, WarpedMetric3, _d1, _pad,
                   arclength, ball_volume, curvature, curvature_any, integrate, volume)

ABS_TOL = 1e-8
REL_TOL = 1e-2


@dataclass(frozen=True)
class InequalityReport:
    """Outcome of one inequality check.

    ``worst`` is max(deficit / tol) - 1 over all checked points (``-inf`` when
    nothing was checked); ``location`` is (t, node) of that point.
    """

    name: str
    worst: float
    location: Optional[tuple]
    checked: int
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.worst <= 0.0

    def as_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        loc = "-" if self.location is None else f"t={self.location[0]:.6g} node={self.location[1]}"
        extra = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(self.details.items()))
        return f"{self.name}: {status} worst={self.worst:.4g} at {loc} checked={self.checked} {extra}".rstrip()


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


class _Worst:
    """Running maximum of deficit / tol over batches of points."""

    def __init__(self, abs_tol=ABS_TOL, rel_tol=REL_TOL):
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.value = -math.inf
        self.where = None
        self.count = 0
        self.raw = 0.0

    def add(self, t, deficit, scale, nodes=None):
        deficit = np.atleast_1d(np.asarray(deficit, dtype=float))
        if deficit.size == 0:
            return
        scale = np.broadcast_to(np.abs(np.asarray(scale, dtype=float)), deficit.shape)
        tol = np.maximum(self.abs_tol, self.rel_tol * scale)
        ratio = deficit / tol - 1.0
        ratio = np.where(np.isnan(ratio), np.inf, ratio)
        k = int(np.argmax(ratio))
        self.count += deficit.size
        if ratio[k] > self.value:
            self.value = float(ratio[k])
            node = k if nodes is None else np.atleast_1d(nodes)[k]
            t_here = float(np.atleast_1d(t)[k] if np.ndim(t) else t)
            self.where = (t_here, int(node) if np.ndim(node) == 0 else tuple(int(a) for a in node))
            self.raw = float(deficit[k])

    def report(self, name, **details):
        details.setdefault("deficit", self.raw)
        return InequalityReport(name, self.value, self.where, self.count, details)


def _states(states) -> List[tuple]:
    if isinstance(states, FlowTrace):
        states = states.snapshots
    out = [(float(t), m) for t, m in states]
    if not out:
        raise Inapplicable("no states to check")
    return out


def _field(m) -> CurvatureField:
    return m if isinstance(m, CurvatureField) else curvature_any(m, check=False)


def _gauged(m):
    if isinstance(m, (WarpedMetric3, RotSphere)) and not _in_gauge(m):
        return to_arclength_gauge(m)
    return m


def _s_derivative(m, f):
    """d f / ds for an even nodal field on a metric in arclength gauge."""
    return _d1(_pad(np.asarray(f, dtype=float), 1.0), m.grid.dx) / float(m.phi[0])


# ---------------------------------------------------------------------------
# Hamilton-Ivey pinching


def hamilton_ivey_bound(nu, t):
    """(-nu)[log(-nu) + log(1 + t) - 3] for nu < 0 (nan elsewhere)."""
    nu = np.asarray(nu, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(nu < 0, -nu * (np.log(-nu) + np.log1p(t) - 3.0), np.nan)


def hamilton_ivey_check(states, check_initial: bool = True, abs_tol=ABS_TOL,
                        rel_tol=REL_TOL) -> InequalityReport:
    """R >= (-nu)[log(-nu) + log(1+t) - 3] wherever nu < 0.

    The estimate assumes nu >= -1 at the first state; with ``check_initial``
    a first state violating that raises ``Inapplicable``.
    """
    states = _states(states)
    acc = _Worst(abs_tol, rel_tol)
    for k, (t, m) in enumerate(states):
        c = _field(m)
        nu = c.nu
        if k == 0 and check_initial and float(np.min(nu)) < -1.0 - 1e-9:
            raise Inapplicable(f"initial nu_min = {float(np.min(nu)):.4g} < -1")
        idx = np.flatnonzero(nu < 0)
        if idx.size == 0:
            continue
        rhs = hamilton_ivey_bound(nu[idx], t)
        R = c.R[idx]
        acc.add(t, rhs - R, np.maximum(np.abs(R), np.abs(rhs)), idx)
    return acc.report("hamilton_ivey")


# ---------------------------------------------------------------------------
# Harnack inequality for surfaces


def track_material_points(states, labels) -> np.ndarray:
    """Arclength positions of material points through a dense sequence of states.

    ``labels`` are arclength fractions at the first state.  Positions are
    advanced between consecutive states with Heun's rule on the material drift,
    interpolated linearly in time.
    """
    states = [(t, _gauged(m)) for t, m in _states(states)]
    L0 = float(states[0][1].phi[0])
    pos = np.empty((len(states), len(labels)))
    s = np.asarray(labels, dtype=float) * L0
    pos[0] = s

    def drift(m):
        v = material_drift(m)
        return CubicSpline(float(m.phi[0]) * m.grid.nodes, v)

    prev = drift(states[0][1])
    for k in range(1, len(states)):
        dt = states[k][0] - states[k - 1][0]
        nxt = drift(states[k][1])
        L = float(states[k][1].phi[0])
        k1 = prev(s)
        k2 = nxt(np.clip(s + dt * k1, 0.0, L))
        s = np.clip(s + 0.5 * dt * (k1 + k2), 0.0, L)
        pos[k] = s
        prev = nxt
    return pos


def harnack_ratio(R1, R2, t1, t2, d):
    """R(x2,t2) / [(t1/t2) exp(-d^2 / 4(t2 - t1)) R(x1,t1)]."""
    return R2 / ((t1 / t2) * np.exp(-d * d / (4.0 * (t2 - t1))) * R1)


def harnack2d_check(states, pairs: int = 2000, points: int = 33, seed: int = 0,
                    abs_tol=ABS_TOL, rel_tol=REL_TOL) -> InequalityReport:
    """Harnack inequality for the scalar curvature of an unnormalized surface flow.

    Checks R(x2,t2) >= (t1/t2) exp(-d_{t1}(x1,x2)^2 / 4(t2-t1)) R(x1,t1) over a
    seeded sample of material point pairs on one meridian.  Projection onto a
    meridian shortens curves, so the meridian arclength between the two points
    is their exact distance.
    """
    states = [(t, _gauged(m)) for t, m in _states(states)]
    for _, m in states:
        if not isinstance(m, RotSphere):
            raise Inapplicable("Harnack check is implemented for rotationally symmetric spheres")
    labels = np.linspace(0.0, 1.0, points)
    pos = track_material_points(states, labels)
    R_at = np.empty_like(pos)
    for k, (_, m) in enumerate(states):
        R = curvature_any(m, check=False).R
        if float(R.min()) <= 0:
            raise Inapplicable("Harnack check needs R > 0")
        R_at[k] = CubicSpline(float(m.phi[0]) * m.grid.nodes, R)(pos[k])
    ts = np.array([t for t, _ in states])
    rng = np.random.default_rng(seed)
    acc = _Worst(abs_tol, rel_tol)
    usable = np.flatnonzero(ts > 0)
    if usable.size < 2:
        return acc.report("harnack2d", skipped="fewer than two positive times")
    i = rng.choice(usable[:-1], size=pairs)
    j = np.array([rng.integers(a + 1, len(ts)) for a in i])
    keep = ts[j] > ts[i]
    i, j = i[keep], j[keep]
    a = rng.integers(0, points, size=i.size)
    b = rng.integers(0, points, size=i.size)
    b[: i.size // 4] = a[: i.size // 4]
    d = np.abs(pos[i, a] - pos[i, b])
    t1, t2 = ts[i], ts[j]
    rhs = (t1 / t2) * np.exp(-d * d / (4.0 * (t2 - t1))) * R_at[i, a]
    lhs = R_at[j, b]
    acc.add(t2, rhs - lhs, np.maximum(rhs, lhs), np.stack([i, j, a, b], axis=1))
    return acc.report("harnack2d", pairs=int(i.size))


# ---------------------------------------------------------------------------
# trace Li-Yau-Hamilton inequality


def material_time_derivative(states, values) -> np.ndarray:
    """D f / Dt at every (state, node) for nodal fields f on meridian states.

    ``values[k]`` holds f at the nodes of ``states[k]``.  Time differences are
    taken at fixed grid fraction (centered, one-sided at the ends) and the grid
    motion x L'(t) is replaced by the material drift.
    """
    ts = np.array([t for t, _ in states])
    vals = np.asarray(values, dtype=float)
    if len(ts) < 3:
        raise Inapplicable("time derivatives need at least three states")
    L = np.array([float(m.phi[0]) for _, m in states])
    f_t = np.gradient(vals, ts, axis=0, edge_order=2)
    L_t = np.gradient(L, ts, edge_order=2)
    out = np.empty_like(vals)
    for k, (_, m) in enumerate(states):
        x = m.grid.nodes
        v = material_drift(m)
        out[k] = f_t[k] + (v - x * L_t[k]) * _s_derivative(m, vals[k])
    return out


def trace_lyh_check(states, abs_tol=ABS_TOL, rel_tol=REL_TOL,
                    ricci_floor: float = 1e-10) -> InequalityReport:
    """dR/dt + R/t + 2<grad R, V> + 2 Ric(V, V) >= 0 on nonnegatively curved 3-D runs.

    Checked with V = 0 and with the minimizing radial field V = -R_s / (4 K_mix)
    d/ds, which turns the left side into dR/dt + R/t - R_s^2 / (4 K_mix).  Nodes
    where the radial Ricci curvature 2 K_mix is not positive use V = 0 only.
    """
    states = [(t, _gauged(m)) for t, m in _states(states)]
    fields = []
    for _, m in states:
        if not isinstance(m, WarpedMetric3):
            raise Inapplicable("trace Harnack check expects 3-D meridian states")
        c = curvature(m, check=False)
        if float(c.nu.min()) < -abs_tol * max(1.0, c.max_abs_op):
            raise Inapplicable("curvature operator is not nonnegative")
        fields.append(c)
    n = {m.grid.n for _, m in states}
    if len(n) != 1:
        raise Inapplicable("states must share one grid size")
    DR = material_time_derivative(states, [c.R for c in fields])
    acc0 = _Worst(abs_tol, rel_tol)
    acc1 = _Worst(abs_tol, rel_tol)
    fallback = 0
    for k, (t, m) in enumerate(states):
        if t <= 0:
            continue
        c = fields[k]
        R = c.R
        base = DR[k] + R / t
        scale0 = np.abs(DR[k]) + np.abs(R) / t
        acc0.add(t, -base, scale0)
        R_s = _s_derivative(m, R)
        ok = c.K_mix > ricci_floor
        fallback += int(np.count_nonzero(~ok))
        with np.errstate(divide="ignore", invalid="ignore"):
            drag = np.where(ok, R_s ** 2 / (4.0 * c.K_mix), 0.0)
        acc1.add(t, drag - base, scale0 + drag)
    r0 = acc0.report("trace_lyh_v0")
    r1 = acc1.report("trace_lyh_optimal")
    worst = r0 if r0.worst >= r1.worst else r1
    return InequalityReport("trace_lyh", worst.worst, worst.location, r0.checked + r1.checked,
                            {"v0_worst": r0.worst, "optimal_worst": r1.worst,
                             "deficit": worst.details["deficit"], "fallback_nodes": fallback})


# ---------------------------------------------------------------------------
# monotone scalars from the trace table


def _rows(trace):
    if isinstance(trace, FlowTrace):
        rows = trace.rows
    else:
        rows = list(trace)
    t = np.array([r["t"] for r in rows], dtype=float)
    return rows, t


def monotone_scalars(trace, abs_tol=ABS_TOL, rel_tol=REL_TOL) -> List[InequalityReport]:
    """Discrete-derivative checks of the monotone scalars of an unnormalized run.

    * ``rmin_growth``: dR_min/dt >= (2/3) R_min^2, tested as d(-1/R_min)/dt >= 2/3
      while R_min keeps its sign.
    * ``rmin_lower_bound``: R_min(t) >= R0 / (1 - 2 R0 t / 3) when R0 = R_min(0) < 0.
    * ``volume_growth``: V(t) (t + c)^{-3/2} nonincreasing with c = 3 / (2 max(1, -R0)).
    * ``rmin_nondecreasing``: only on runs whose curvature operator stays nonnegative.

    Derivatives are centered (second order on uneven steps), one-sided at the ends.
    Times are measured from the first row.
    """
    rows, t = _rows(trace)
    if len(rows) < 3:
        raise Inapplicable("monotone checks need at least three trace rows")
    tau = t - t[0]
    Rmin = np.array([r["Rmin"] for r in rows], dtype=float)
    V = np.array([r["volume"] for r in rows], dtype=float)
    nu = np.array([r.get("nu_min", np.nan) for r in rows], dtype=float)
    dR = np.gradient(Rmin, t, edge_order=2)
    reports = []

    acc = _Worst(abs_tol, rel_tol)
    target = (2.0 / 3.0) * Rmin ** 2
    # where R_min keeps one sign over the stencil the bound is d(-1/R)/dt >= 2/3,
    # exact for the homothetic equality case; elsewhere use dR/dt directly
    sign = np.sign(Rmin)
    same = sign != 0
    same[1:] &= sign[1:] == sign[:-1]
    same[:-1] &= sign[:-1] == sign[1:]
    with np.errstate(divide="ignore"):
        inv = np.where(sign != 0, -1.0 / np.where(sign != 0, Rmin, 1.0), 0.0)
    d_inv = np.gradient(inv, t, edge_order=2)
    deficit = np.where(same, (2.0 / 3.0 - d_inv) * Rmin ** 2, target - dR)
    acc.add(t, deficit, np.abs(dR) + target, np.arange(len(t)))
    reports.append(acc.report("rmin_growth"))

    R0 = Rmin[0]
    acc = _Worst(abs_tol, rel_tol)
    if R0 < 0:
        bound = R0 / (1.0 - 2.0 * R0 * tau / 3.0)
        acc.add(t, bound - Rmin, np.abs(bound), np.arange(len(t)))
    reports.append(acc.report("rmin_lower_bound"))

    c = 1.5 / max(1.0, -R0)
    acc = _Worst(abs_tol, rel_tol)
    dlogV = np.gradient(np.log(V), t, edge_order=2)
    allowed = 1.5 / (tau + c)
    acc.add(t, dlogV - allowed, np.abs(dlogV) + allowed, np.arange(len(t)))
    reports.append(acc.report("volume_growth", offset=c))

    acc = _Worst(abs_tol, rel_tol)
    if np.all(np.nan_to_num(nu, nan=-1.0) >= 0):
        acc.add(t, -dR, np.abs(dR) + np.abs(Rmin) / np.maximum(tau[-1], 1e-300), np.arange(len(t)))
        reports.append(acc.report("rmin_nondecreasing"))
    else:
        reports.append(acc.report("rmin_nondecreasing", skipped="curvature not nonnegative"))
    return reports


# ---------------------------------------------------------------------------
# entropy of surfaces


@dataclass(frozen=True)
class EntropySeries:
    t: np.ndarray
    E: np.ndarray
    chow_lhs: np.ndarray
    chow_rhs: np.ndarray
    reports: tuple


def entropy(m) -> float:
    """E = integral of R log R against the area form (R > 0 required)."""
    R = curvature_any(m, check=False).R
    if float(R.min()) <= 0:
        raise Inapplicable("entropy needs R > 0")
    return integrate(m, R * np.log(R))


def chow_sides(m):
    """(integral |grad R|^2 / R, integral (R - r)^2) for a positively curved surface."""
    m = _gauged(m)
    R = curvature_any(m, check=False).R
    if float(R.min()) <= 0:
        raise Inapplicable("Chow's inequality needs R > 0")
    r = integrate(m, R) / volume(m)
    if isinstance(m, ConformalTorus):
        h = m.h
        gx = (np.roll(R, -1, 0) - np.roll(R, 1, 0)) / (2 * h)
        gy = (np.roll(R, -1, 1) - np.roll(R, 1, 1)) / (2 * h)
        grad2 = (gx ** 2 + gy ** 2) * np.exp(-2.0 * m.u)
    else:
        grad2 = _s_derivative(m, R) ** 2
    return integrate(m, grad2 / R), integrate(m, (R - r) ** 2)


def entropy2d(states, uptick_tol: float = 1e-6, abs_tol=ABS_TOL,
              rel_tol=REL_TOL) -> EntropySeries:
    """Entropy series of a normalized surface flow with its two reports.

    ``entropy_monotone`` fails on any increase E(t_{k+1}) - E(t_k) larger than
    ``uptick_tol`` |E|; ``chow`` checks the gradient inequality at every state.
    """
    states = _states(states)
    ts, Es, lhs, rhs = [], [], [], []
    for t, m in states:
        ts.append(t)
        Es.append(entropy(m))
        a, b = chow_sides(m)
        lhs.append(a)
        rhs.append(b)
    ts, Es, lhs, rhs = map(np.array, (ts, Es, lhs, rhs))
    mono = _Worst(abs_tol, uptick_tol)
    if len(Es) > 1:
        mono.add(ts[1:], np.diff(Es), np.abs(Es[1:]), np.arange(1, len(Es)))
    chow = _Worst(abs_tol, rel_tol)
    chow.add(ts, rhs - lhs, np.maximum(np.abs(lhs), np.abs(rhs)), np.arange(len(ts)))
    reports = (mono.report("entropy_monotone"), chow.report("chow"))
    return EntropySeries(ts, Es, lhs, rhs, reports)


# ---------------------------------------------------------------------------
# volume ratios


@dataclass(frozen=True)
class KappaRatio:
    r: float
    ratio: Optional[float]
    node: Optional[int]


def kappa_ratio(m: WarpedMetric3, r_list: Iterable[float], stride: int = 8,
                refine: int = 2001, curv_rtol: float = 1e-3) -> List[KappaRatio]:
    """min over sampled centers of Vol(B(x, r)) / r^3 among curvature-controlled balls.

    A ball counts when every sectional curvature on the nodes within meridian
    distance r of its center is at most r^-2 in absolute value; radii with no
    admissible center report ``ratio=None``.  The curvature bound is relaxed by
    ``curv_rtol`` so that discretization error does not exclude the equality
    case (the unit sphere at r = 1).  Report only: nothing is judged.
    """
    m = _gauged(m)
    c = curvature(m, check=False)
    sec = 0.5 * np.max(np.abs(c.op_eigs), axis=-1)
    s = arclength(m)
    centers = np.unique(np.r_[np.arange(0, len(s), max(1, stride)), len(s) - 1])
    out = []
    for r in r_list:
        best, where = None, None
        for i in centers:
            near = np.abs(s - s[i]) <= r
            if float(sec[near].max()) > (1.0 + curv_rtol) * r ** -2:
                continue
            val = ball_volume(m, int(i), r, refine=refine) / r ** 3
            if best is None or val < best:
                best, where = val, int(i)
        out.append(KappaRatio(float(r), best, where))
    return out


def reports_text(reports: Sequence[InequalityReport]) -> str:
    return "\n".join(r.as_text() for r in reports) + "\n"


__all__ = ["InequalityReport", "hamilton_ivey_check", "hamilton_ivey_bound", "harnack2d_check",
           "harnack_ratio", "track_material_points", "trace_lyh_check",
           "material_time_derivative", "monotone_scalars", "entropy", "chow_sides", "entropy2d",
           "EntropySeries", "kappa_ratio", "KappaRatio", "reports_text"]

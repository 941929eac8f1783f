"""Method-of-lines Ricci flow for the symmetry-reduced metrics.

Meridian metrics (``WarpedMetric3`` and ``RotSphere``) are evolved in the gauge
where the grid stays equally spaced in arclength: phi = L(t) at every node.  The
profile psi then obeys the material flow law plus a tangential transport term,
and the length L obeys dL/dt = v(L), where v(s) is the arclength velocity of a
material point.  The node next to each pole is slaved to the smooth-pole
condition psi_s = 1.  Geometric quantities are unaffected by this choice of
parametrisation; path-based tools recover the material motion from v.

Time stepping is the explicit midpoint rule (RK2).
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels as K
from .errors import (ConfigError, InvalidMetric, NumericalFailure, SingularityUnhandled,
                     StepRejected)
from .geom import (ConformalTorus, Grid1D, RotSphere, WarpedMetric3, arclength, curvature_any,
                   quad_weights)

log = logging.getLogger(__name__)

MODES_3D = ("unnormalized3d", "normalized3d")
MODES_2D = ("normalized2d", "unnormalized2d")
MODES = MODES_3D + MODES_2D

# fraction of the RK2 stability limit used at cfl = 1
_MERIDIAN_DT = 2.0 / 3.0
_TORUS_DT = 0.5
MAX_RETRIES = 20
CHECKPOINT_FORMAT = "ricci_lab.checkpoint"
CHECKPOINT_VERSION = 1


class _Defer:
    """Returned by a singularity handler to keep flowing with a doubled threshold."""

    def __repr__(self):
        return "DEFER"


DEFER = _Defer()


@dataclass(frozen=True)
class FlowConfig:
    mode: str = "unnormalized3d"
    cfl: float = 0.45
    t_end: float = 1.0
    curvature_blowup_threshold: float = 1e4
    regrid_trigger: float = 1.5
    snapshot_every: int = 100
    max_steps: int = 20_000_000
    extinction_volume: float = 1e-6
    extinction_oscillation: float = 1e-2
    round_tolerance: float = 0.05
    keep_snapshots: bool = False
    checkpoint_every: int = 0
    checkpoint_dir: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown flow mode {self.mode!r}; expected one of {MODES}")
        if not (0.0 < self.cfl <= 0.5):
            raise ConfigError("cfl must lie in (0, 0.5]")
        for name in ("t_end", "curvature_blowup_threshold", "extinction_volume",
                     "extinction_oscillation", "round_tolerance"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.regrid_trigger > 1.0:
            raise ConfigError("regrid_trigger must exceed 1")
        if self.snapshot_every < 1 or self.max_steps < 1 or self.checkpoint_every < 0:
            raise ConfigError("step counts must be positive")

    @property
    def dim(self) -> int:
        return 3 if self.mode in MODES_3D else 2

    @property
    def normalized(self) -> bool:
        return self.mode.startswith("normalized")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    info: dict = field(default_factory=dict)


@dataclass
class FlowTrace:
    """Monitored scalars at snapshot cadence plus an event log."""

    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    outcome: Optional[str] = None
    final_state: Optional["FlowState"] = None
    children: list = field(default_factory=list)

    def add_row(self, row: dict) -> bool:
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            return False
        self.rows.append(dict(row))
        return True

    def log_event(self, t, kind, **info):
        self.events.append(Event(float(t), kind, info))

    def column(self, name) -> np.ndarray:
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=float)

    @property
    def columns(self) -> list:
        names = []
        for r in self.rows:
            for k in r:
                if k not in names:
                    names.append(k)
        return names

    def events_of(self, kind) -> list:
        return [e for e in self.events if e.kind == kind]


@dataclass(frozen=True)
class FlowState:
    t: float
    metric: object
    trace: FlowTrace = field(default_factory=FlowTrace, compare=False)
    step: int = 0
    v0: Optional[float] = None


@dataclass(frozen=True)
class Diagnostics:
    """Scalars of the current state, computed alongside the first RK stage."""

    R_min: float
    R_max: float
    volume: float
    r: float
    max_op: float
    nu_min: float
    ds_min: float
    speed: float


# ---------------------------------------------------------------------------
# gauge helpers


def _is_meridian(m) -> bool:
    return isinstance(m, (WarpedMetric3, RotSphere))


def distortion(m) -> float:
    """max/min cell arclength."""
    if not _is_meridian(m):
        return 1.0
    ds = np.diff(arclength(m))
    return float(ds.max() / ds.min())


def impose_pole_slope(psi: np.ndarray, length: float, h: float) -> np.ndarray:
    """Set the node beside each pole so the fourth-order slope psi_s equals 1."""
    psi = np.array(psi, dtype=float)
    psi[0] = psi[-1] = 0.0
    psi[1] = (6.0 * h * length + psi[2]) / 8.0
    psi[-2] = (6.0 * h * length + psi[-3]) / 8.0
    return psi


def _in_gauge(m) -> bool:
    return bool(np.all(m.phi == m.phi[0]))


def to_arclength_gauge(m, n: Optional[int] = None):
    """Resample a meridian metric onto nodes equally spaced in arclength.

    psi is interpolated as a function of arclength by a C^2 cubic spline on the
    data extended oddly across both poles, which keeps extrema and the pole
    slopes intact.
    """
    n = m.grid.n if n is None else n
    s = arclength(m)
    length = float(s[-1])
    ext_s = np.concatenate([-s[:0:-1], s, 2 * length - s[-2::-1]])
    ext_p = np.concatenate([-m.psi[:0:-1], m.psi, -m.psi[-2::-1]])
    spline = CubicSpline(ext_s, ext_p)
    grid = Grid1D.uniform(n)
    psi = spline(length * grid.nodes)
    psi = impose_pole_slope(psi, length, grid.dx)
    return type(m)(grid, np.full(n + 1, length), psi)


def regrid(state: FlowState, trigger: Optional[float] = None, force: bool = False) -> FlowState:
    """Equidistribute arclength; a no-op (and no event) for uniform states."""
    m = state.metric
    if not _is_meridian(m):
        return state
    ratio = distortion(m)
    if not force and (ratio <= 1.0 + 1e-12 and _in_gauge(m)):
        return state
    if not force and trigger is not None and ratio <= trigger and _in_gauge(m):
        return state
    new = to_arclength_gauge(m)
    state.trace.log_event(state.t, "regrid", distortion=ratio)
    return replace(state, metric=new)


# ---------------------------------------------------------------------------
# right-hand sides


def _meridian_rhs(dim, normalized, length, psi, h, w):
    d = np.empty_like(psi)
    R = np.empty_like(psi)
    v = np.empty_like(psi)
    dl, r, vol, maxop, numin, vmax = K.arclength_rhs(dim, length, psi, h, w, normalized, d, R, v)
    diag = Diagnostics(float(R.min()), float(R.max()), vol, r, maxop, numin, length * h, vmax)
    return d, dl, diag


def material_drift(m, normalized: bool = False) -> np.ndarray:
    """Arclength velocity v(s_i) of material points for the unnormalized flow law."""
    dim = 3 if isinstance(m, WarpedMetric3) else 2
    g = m.grid
    psi = np.ascontiguousarray(m.psi, dtype=float)
    d = np.empty_like(psi)
    R = np.empty_like(psi)
    v = np.empty_like(psi)
    K.arclength_rhs(dim, float(m.phi[0]), psi, g.dx, g.weights, normalized, d, R, v)
    return v


def _torus_rhs(u, h):
    du = np.empty_like(u)
    rmax, lo, hi, area, emin = K.torus_rhs(u, h, du)
    diag = Diagnostics(lo, hi, area, 0.0, rmax, lo, h * emin, 0.0)
    return du, diag


def evaluate(metric, cfg: FlowConfig) -> Diagnostics:
    if _is_meridian(metric) and not _in_gauge(metric):
        metric = to_arclength_gauge(metric)
    return _stage1(metric, cfg)[1]


def _check_family(metric, cfg):
    if cfg.dim == 3 and not isinstance(metric, WarpedMetric3):
        raise ConfigError(f"mode {cfg.mode} needs a WarpedMetric3")
    if cfg.dim == 2 and isinstance(metric, WarpedMetric3):
        raise ConfigError(f"mode {cfg.mode} needs a surface metric")
    if isinstance(metric, ConformalTorus) and cfg.mode == "normalized2d":
        pass  # r = 0 on the torus either way


# ---------------------------------------------------------------------------
# single steps


def _stage1(m, cfg):
    """First RK stage of the current state plus its diagnostics."""
    if _is_meridian(m):
        g = m.grid
        h = g.dx
        w = g.weights
        length = float(m.phi[0])
        psi = np.ascontiguousarray(m.psi, dtype=float)
        k1, dl1, diag = _meridian_rhs(cfg.dim, cfg.normalized, length, psi, h, w)
        return (k1, dl1, w), diag
    k1, diag = _torus_rhs(np.ascontiguousarray(m.u, dtype=float), m.h)
    return (k1,), diag


def _meridian_advance(m, cfg, payload, diag, dt_cap=math.inf):
    k1, dl1, w = payload
    g = m.grid
    h = g.dx
    length = float(m.phi[0])
    psi = np.ascontiguousarray(m.psi, dtype=float)
    limits = [diag.ds_min ** 2]
    if diag.max_op > 0:
        limits.append(1.0 / diag.max_op)
    if diag.speed > 0:
        limits.append(diag.ds_min / diag.speed)
    dt = min(_MERIDIAN_DT * cfg.cfl * min(limits), dt_cap)
    for _ in range(MAX_RETRIES + 1):
        try:
            lm = length + 0.5 * dt * dl1
            pm = impose_pole_slope(psi + 0.5 * dt * k1, lm, h)
            _validate_profile(pm, lm)
            k2, dl2, _ = _meridian_rhs(cfg.dim, cfg.normalized, lm, pm, h, w)
            newlen = length + dt * dl2
            new = impose_pole_slope(psi + dt * k2, newlen, h)
            _validate_profile(new, newlen)
            return type(m).trusted(g, np.full(g.n + 1, newlen), new), dt
        except StepRejected:
            dt *= 0.5
    raise SingularityUnhandled("time step rejected repeatedly (profile lost positivity)")


def _validate_profile(psi, length):
    if not (np.isfinite(length) and length > 0):
        raise StepRejected("non-positive meridian length")
    inner = psi[1:-1]
    if not np.all(np.isfinite(inner)) or np.any(inner <= 0):
        raise StepRejected("profile lost positivity")


def _torus_advance(m, cfg, payload, diag, dt_cap=math.inf):
    (k1,) = payload
    u = np.ascontiguousarray(m.u, dtype=float)
    h = m.h
    dt = min(_TORUS_DT * cfg.cfl * diag.ds_min ** 2, dt_cap)
    for _ in range(MAX_RETRIES + 1):
        um = u + 0.5 * dt * k1
        k2, _ = _torus_rhs(um, h)
        new = u + dt * k2
        if np.all(np.isfinite(new)):
            return ConformalTorus(new), dt
        dt *= 0.5
    raise SingularityUnhandled("time step rejected repeatedly on the torus")


def _advance(state: FlowState, cfg: FlowConfig, dt_cap=math.inf, stage=None):
    """Take one step; returns (new state, dt, diagnostics of the old state)."""
    if _is_meridian(state.metric) and not _in_gauge(state.metric):
        state = regrid(state, force=True)
        stage = None
    m = state.metric
    payload, diag = stage if stage is not None else _stage1(m, cfg)
    if _is_meridian(m):
        new, dt = _meridian_advance(m, cfg, payload, diag, dt_cap)
    else:
        new, dt = _torus_advance(m, cfg, payload, diag, dt_cap)
    v0 = state.v0 if state.v0 is not None else diag.volume
    return replace(state, t=state.t + dt, metric=new, step=state.step + 1, v0=v0), dt, diag


def step3d(state: FlowState, cfg: FlowConfig) -> FlowState:
    """One RK2 step of the 3-D flow."""
    if cfg.dim != 3 or not isinstance(state.metric, WarpedMetric3):
        raise ConfigError("step3d needs a 3-D mode and a WarpedMetric3")
    return _advance(state, cfg)[0]


def step2d(state: FlowState, cfg: FlowConfig) -> FlowState:
    """One RK2 step of the surface flow."""
    if cfg.dim != 2 or isinstance(state.metric, WarpedMetric3):
        raise ConfigError("step2d needs a 2-D mode and a surface metric")
    return _advance(state, cfg)[0]


# ---------------------------------------------------------------------------
# runs


def is_near_round(metric, diag: Diagnostics, tol: float) -> bool:
    """Positive curvature with scalar curvature nearly constant."""
    if isinstance(metric, ConformalTorus) or diag.nu_min <= 0:
        return False
    mean = 0.5 * (diag.R_max + diag.R_min)
    return (diag.R_max - diag.R_min) <= tol * mean


def _row(state, dt, diag):
    return {"t": state.t, "dt": dt, "Rmin": diag.R_min, "Rmax": diag.R_max,
            "volume": diag.volume, "r": diag.r, "max_op": diag.max_op, "nu_min": diag.nu_min}


Hook = Callable[[FlowState, FlowTrace, dict], None]


def run(state: FlowState, cfg: FlowConfig, hooks: Sequence[Hook] = (),
        on_singularity: Optional[Callable[[FlowState], Optional[list]]] = None) -> FlowTrace:
    """Advance until t_end, extinction, or a curvature blowup.

    Hooks are called at snapshot cadence with (state, trace, row) and may add
    entries to ``row``.  ``on_singularity`` may return replacement states (for
    example the components produced by surgery); they are stored in
    ``trace.children`` and the run stops with outcome "surgery".  Returning
    ``DEFER`` doubles the blowup threshold and keeps flowing.
    """
    _check_family(state.metric, cfg)
    trace = state.trace
    if _is_meridian(state.metric) and not _in_gauge(state.metric):
        state = regrid(state, force=True)
    if cfg.checkpoint_every and cfg.checkpoint_dir:
        Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
    eps_t = 1e-14 * max(1.0, abs(cfg.t_end))
    last_dt = 0.0
    stage = None
    while True:
        stage = _stage1(state.metric, cfg)
        diag = stage[1]
        if state.v0 is None:
            state = replace(state, v0=diag.volume)
        snap = state.step % cfg.snapshot_every == 0
        extinct = (diag.volume < cfg.extinction_volume * state.v0
                   and diag.R_min > 0
                   and (diag.R_max - diag.R_min) < cfg.extinction_oscillation * 0.5 * (diag.R_max + diag.R_min))
        blowup = diag.max_op > cfg.curvature_blowup_threshold and not is_near_round(
            state.metric, diag, cfg.round_tolerance)
        done = state.t >= cfg.t_end - eps_t
        if snap or extinct or blowup or done:
            _record(state, trace, last_dt, diag, hooks, cfg)
        if cfg.checkpoint_every and cfg.checkpoint_dir and state.step % cfg.checkpoint_every == 0:
            save_checkpoint(state, Path(cfg.checkpoint_dir) / f"ckpt_{state.step:09d}.json", cfg.mode)
        if extinct:
            trace.log_event(state.t, "extinction", volume=diag.volume)
            trace.outcome = "extinct"
            break
        if blowup:
            trace.log_event(state.t, "singularity", max_op=diag.max_op, R_min=diag.R_min)
            log.info("curvature blowup at t=%.6g (max|op|=%.3g)", state.t, diag.max_op)
            children = on_singularity(state) if on_singularity is not None else None
            if children is DEFER:
                cfg = replace(cfg, curvature_blowup_threshold=2.0 * cfg.curvature_blowup_threshold)
                trace.log_event(state.t, "deferred", threshold=cfg.curvature_blowup_threshold)
                state, last_dt, _ = _advance(state, cfg, dt_cap=cfg.t_end - state.t, stage=stage)
                continue
            if children is None:
                trace.outcome = "singularity"
                trace.final_state = state
                raise SingularityUnhandled(
                    f"curvature blowup at t={state.t:.6g} not resolved", trace=trace, state=state)
            trace.children = list(children)
            trace.outcome = "surgery"
            break
        if done:
            trace.outcome = "t_end"
            break
        if state.step >= cfg.max_steps:
            raise NumericalFailure(f"step budget {cfg.max_steps} exhausted at t={state.t:.6g}")
        state, last_dt, _ = _advance(state, cfg, dt_cap=cfg.t_end - state.t, stage=stage)
    trace.final_state = state
    return trace


def _record(state, trace, dt, diag, hooks, cfg):
    row = _row(state, dt, diag)
    for hook in hooks:
        hook(state, trace, row)
    if trace.add_row(row) and cfg.keep_snapshots:
        trace.snapshots.append((state.t, state.metric))


def initial_state(metric, t: float = 0.0) -> FlowState:
    if _is_meridian(metric) and not _in_gauge(metric):
        metric = to_arclength_gauge(metric)
    return FlowState(t=t, metric=metric)


# ---------------------------------------------------------------------------
# checkpoints


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def save_checkpoint(state: FlowState, path, mode: str = "") -> None:
    """Write a versioned JSON checkpoint; floats round-trip exactly."""
    m = state.metric
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "mode": mode,
           "t": float(state.t), "step": int(state.step),
           "v0": None if state.v0 is None else float(state.v0)}
    if isinstance(m, ConformalTorus):
        doc.update(kind="ConformalTorus", m=m.m, u=_floats(m.u))
    else:
        doc.update(kind=type(m).__name__, nodes=_floats(m.grid.nodes), phi=_floats(m.phi),
                   psi=_floats(m.psi))
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(doc))
    os.replace(tmp, path)


def load_checkpoint(path) -> FlowState:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    kind = doc["kind"]
    if kind == "ConformalTorus":
        mm = int(doc["m"])
        metric = ConformalTorus(np.array(doc["u"], dtype=float).reshape(mm, mm))
    elif kind in ("WarpedMetric3", "RotSphere"):
        cls = WarpedMetric3 if kind == "WarpedMetric3" else RotSphere
        metric = cls(Grid1D(np.array(doc["nodes"])), np.array(doc["phi"]), np.array(doc["psi"]))
    else:
        raise ConfigError(f"{path}: unknown metric kind {kind!r}")
    return FlowState(t=doc["t"], metric=metric, step=doc["step"], v0=doc["v0"])


def curvature_of(state: FlowState):
    return curvature_any(state.metric, check=False)


__all__ = ["FlowConfig", "FlowState", "FlowTrace", "Event", "Diagnostics", "run", "step3d",
           "step2d", "regrid", "to_arclength_gauge", "impose_pole_slope", "material_drift",
           "save_checkpoint", "load_checkpoint", "initial_state", "evaluate", "InvalidMetric", "DEFER"]

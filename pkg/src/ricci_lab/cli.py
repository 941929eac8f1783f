"""Command-line driver: run scenarios, evaluate their checks, write CSV and text reports.

Exit codes: 0 all enabled checks pass, 1 configuration error, 2 unhandled
curvature singularity, 3 some check failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .diagnostics import (InequalityReport, entropy2d, hamilton_ivey_check, harnack2d_check,
                          kappa_ratio, monotone_scalars, trace_lyh_check)
from .errors import ConfigError, Inapplicable, SingularityUnhandled
from .flow import FlowTrace, initial_state, run
from .functionals import coupled_monotonicity, lambda_monotone_report, lambda_series
from .geom import ConformalTorus, curvature_any, mean_scalar
from .pinch_ode import CurvatureODEState, integrate, preserved_set_check, sample_set
from .reduced import RunField, reduced_distance_field
from .scenario import COMMANDS, Scenario, build_initial, exact_solution, load_scenario, shipped_scenarios
from .surgery import SurgeryConfig, surgery_hypothesis, surgery_loop

log = logging.getLogger("ricci_lab")

EXIT_OK, EXIT_CONFIG, EXIT_SINGULAR, EXIT_FAILED = 0, 1, 2, 3
TRACE_SCHEMA = "trace/1"
EVENTS_SCHEMA = "events/1"
TRACE_COLUMNS = ("t", "dt", "Rmin", "Rmax", "volume", "r", "max_op", "nu_min")


# ---------------------------------------------------------------------------
# run context and small report helpers


@dataclass
class Context:
    scenario: Scenario
    seed: int = 0
    trace: Optional[FlowTrace] = None
    traces: List[FlowTrace] = field(default_factory=list)
    surgery: object = None
    tables: Dict[str, tuple] = field(default_factory=dict)   # name -> (header, rows)
    cache: dict = field(default_factory=dict)

    @property
    def opts(self) -> dict:
        return self.scenario.section("checks")

    def opt(self, key, default):
        return self.opts.get(key, default)

    @property
    def states(self):
        return self.trace.snapshots


def skipped(name: str, reason: str) -> InequalityReport:
    return InequalityReport(name, -math.inf, None, 0, {"skipped": reason})


def bound_report(name: str, value: float, limit: float, location=None, **details) -> InequalityReport:
    """Passes when value <= limit; worst is value / limit - 1."""
    worst = math.inf if not np.isfinite(value) else value / limit - 1.0
    return InequalityReport(name, float(worst), location, 1, dict(details, value=float(value),
                                                                    limit=float(limit)))


def _floats(text, default) -> List[float]:
    if text is None:
        return list(default)
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(v) for v in str(text).replace(",", " ").split()]


# ---------------------------------------------------------------------------
# checks on flow runs


def check_extinction_time(ctx: Context):
    sol = exact_solution(ctx.scenario)
    if sol is None or not math.isfinite(sol.extinction_time):
        return [skipped("extinction_time", "no finite exact extinction time")]
    ev = ctx.trace.events_of("extinction")
    T = sol.extinction_time
    if not ev:
        return [bound_report("extinction_time", math.inf, 1.0, expected=T)]
    err = abs(ev[0].t - T) / T
    return [bound_report("extinction_time", err, float(ctx.opt("extinction_rel_tol", 0.01)),
                         (ev[0].t, None), expected=T, observed=ev[0].t)]


def check_scale_profile(ctx: Context):
    """rho^2(t) from the volume against the exact scale factor."""
    sol = exact_solution(ctx.scenario)
    if sol is None:
        return [skipped("scale_profile", "no exact solution")]
    t = ctx.trace.column("t")
    V = ctx.trace.column("volume")
    n = 3 if ctx.scenario.flow.dim == 3 else 2
    rho2 = (V / V[0]) ** (2.0 / n)
    exact = np.array([sol.scale2(x) for x in t])
    err = np.abs(rho2 - exact)
    k = int(np.argmax(err))
    return [bound_report("scale_profile", float(err[k]), float(ctx.opt("scale_abs_tol", 1e-3)),
                         (float(t[k]), None))]


def check_hamilton_ivey(ctx: Context):
    out = []
    for k, tr in enumerate(ctx.traces):
        try:
            rep = hamilton_ivey_check(tr.snapshots, check_initial=(k == 0))
        except Inapplicable as exc:
            rep = skipped("hamilton_ivey", str(exc))
        out.append(replace(rep, name="hamilton_ivey" if len(ctx.traces) == 1 else f"hamilton_ivey[{k}]"))
    return out


def check_monotone_scalars(ctx: Context):
    if ctx.scenario.flow.mode != "unnormalized3d":
        return [skipped("monotone_scalars", "needs an unnormalized 3-D run")]
    out = []
    for k, tr in enumerate(ctx.traces):
        try:
            reps = monotone_scalars(tr)
        except Inapplicable as exc:
            reps = [skipped("monotone_scalars", str(exc))]
        if len(ctx.traces) > 1:
            reps = [replace(r, name=f"{r.name}[{k}]") for r in reps]
        out.extend(reps)
    return out


def check_trace_lyh(ctx: Context):
    try:
        return [trace_lyh_check(ctx.states)]
    except Inapplicable as exc:
        return [skipped("trace_lyh", str(exc))]


def check_kappa(ctx: Context):
    """Monitored only: the smallest volume ratio of curvature-controlled balls.

    Radii are multiples of the curvature scale (max |sec|)^(-1/2) of the final state.
    """
    m = ctx.trace.final_state.metric
    sec = 0.5 * float(curvature_any(m, check=False).max_abs_op)
    scales = _floats(ctx.opt("kappa_scales", None), (0.25, 0.5, 1.0))
    radii = [c / math.sqrt(sec) for c in scales]
    ratios = kappa_ratio(m, radii)
    details = {f"r={k.r:g}": ("none" if k.ratio is None else float(k.ratio)) for k in ratios}
    rows = [(k.r, "" if k.ratio is None else k.ratio, "" if k.node is None else k.node) for k in ratios]
    ctx.tables["kappa"] = (("r", "ratio", "node"), rows)
    return [InequalityReport("kappa_ratio", -math.inf, None, len(ratios), details)]


def check_harnack2d(ctx: Context):
    try:
        return [harnack2d_check(ctx.states, pairs=int(ctx.opt("harnack_pairs", 2000)), seed=ctx.seed)]
    except Inapplicable as exc:
        return [skipped("harnack2d", str(exc))]


def _entropy(ctx: Context):
    if "entropy" not in ctx.cache:
        ctx.cache["entropy"] = entropy2d(ctx.states, uptick_tol=float(ctx.opt("uptick_tol", 1e-6)))
        es = ctx.cache["entropy"]
        ctx.tables["entropy"] = (("t", "E", "chow_lhs", "chow_rhs"),
                                 list(zip(es.t, es.E, es.chow_lhs, es.chow_rhs)))
    return ctx.cache["entropy"]


def check_entropy(ctx: Context):
    return [_entropy(ctx).reports[0]]


def check_chow(ctx: Context):
    return [_entropy(ctx).reports[1]]


def check_convergence(ctx: Context):
    m = ctx.trace.final_state.metric
    R = curvature_any(m, check=False).R
    gap = float(np.max(np.abs(R - mean_scalar(m, R))))
    return [bound_report("convergence", gap, float(ctx.opt("convergence_tol", 1e-3)),
                         (ctx.trace.final_state.t, None))]


def check_torus_decay(ctx: Context):
    if not isinstance(ctx.trace.final_state.metric, ConformalTorus):
        return [skipped("torus_decay", "not a torus run")]
    t = ctx.trace.column("t")
    Rinf = np.maximum(np.abs(ctx.trace.column("Rmax")), np.abs(ctx.trace.column("Rmin")))
    weighted = Rinf * (1.0 + t)
    factor = float(ctx.opt("decay_factor", 3.0))
    k = int(np.argmax(weighted))
    return [bound_report("torus_decay", float(weighted[k]), factor * float(weighted[0]), (float(t[k]), None)),
            bound_report("torus_flat", float(Rinf[-1]), float(ctx.opt("flat_tol", 1e-3)), (float(t[-1]), None))]


# ---------------------------------------------------------------------------
# checks on surgery runs


def check_surgery(ctx: Context):
    st = ctx.surgery
    out = []
    expected = ctx.opt("expected_surgeries", None)
    if expected is not None:
        out.append(bound_report("surgery_count", abs(st.surgery_count - int(expected)), 0.5,
                                count=st.surgery_count))
    hyp = [surgery_hypothesis(r.h, r.t) for r in st.surgeries]
    out.append(InequalityReport("surgery_hypothesis", -1.0 if all(hyp) else 1.0, None, len(hyp),
                                {"h": ",".join(f"{r.h:.4g}" for r in st.surgeries)}))
    worst_pinch = max((max(v) for v in st.post_surgery), default=0.0)
    out.append(bound_report("post_surgery_pinching", worst_pinch, float(ctx.opt("pinching_tol", 1e-2))))
    frac = float(ctx.opt("volume_drop_fraction", 0.5))
    if st.surgeries:
        ratios = [r.volume_drop / r.h ** 3 for r in st.surgeries]
        out.append(bound_report("volume_drop", frac / min(ratios), 1.0, kappa_s=min(ratios)))
    ends = [tr.outcome for tr in st.runs if tr.outcome != "surgery"]
    ok = st.outcome == "extinct" and all(o == "extinct" for o in ends)
    out.append(InequalityReport("extinction", -1.0 if ok else 1.0, None, len(st.extinctions),
                                {"extinctions": len(st.extinctions)}))
    return out


# ---------------------------------------------------------------------------
# registry


CHECKS: Dict[str, Callable[[Context], List[InequalityReport]]] = {
    "extinction_time": check_extinction_time,
    "scale_profile": check_scale_profile,
    "hamilton_ivey": check_hamilton_ivey,
    "monotone_scalars": check_monotone_scalars,
    "trace_lyh": check_trace_lyh,
    "kappa": check_kappa,
    "harnack2d": check_harnack2d,
    "entropy": check_entropy,
    "chow": check_chow,
    "convergence": check_convergence,
    "torus_decay": check_torus_decay,
    "surgery": check_surgery,
}
_NEEDS_STATES = {"hamilton_ivey", "trace_lyh", "harnack2d", "entropy", "chow"}


def run_checks(ctx: Context, names: Sequence[str]) -> List[InequalityReport]:
    out = []
    for name in names:
        if name not in CHECKS:
            raise ConfigError(f"unknown check {name!r}; available: {sorted(CHECKS)}")
        out.extend(CHECKS[name](ctx))
    return out


# ---------------------------------------------------------------------------
# commands


def _flow_cfg(sc: Scenario, out: Path, checkpoint_every: int, keep: bool):
    cfg = replace(sc.flow, keep_snapshots=keep)
    if checkpoint_every:
        cfg = replace(cfg, checkpoint_every=int(checkpoint_every),
                      checkpoint_dir=str(out / "checkpoints"))
    return cfg


def cmd_flow(ctx: Context, out: Path, checkpoint_every: int) -> List[InequalityReport]:
    sc = ctx.scenario
    keep = bool(set(sc.checks) & _NEEDS_STATES) or sc.command in ("reduced-volume", "functionals")
    cfg = _flow_cfg(sc, out, checkpoint_every, keep)
    metric = build_initial(sc)
    ctx.trace = run(initial_state(metric), cfg)
    ctx.traces = [ctx.trace]
    return run_checks(ctx, sc.checks)


def cmd_surgery(ctx: Context, out: Path, checkpoint_every: int) -> List[InequalityReport]:
    sc = ctx.scenario
    opts = sc.section("surgery")
    cfg = SurgeryConfig(flow=_flow_cfg(sc, out, checkpoint_every, "hamilton_ivey" in sc.checks),
                        delta=float(opts.get("delta", 0.1)),
                        threshold_growth=float(opts.get("threshold_growth", 300.0)),
                        max_surgeries=int(opts.get("max_surgeries", 16)),
                        strong_check=bool(opts.get("strong_check", True)))
    metric = build_initial(sc)
    ctx.surgery = surgery_loop(metric, cfg)
    ctx.traces = list(ctx.surgery.runs)
    ctx.trace = ctx.traces[0]
    rows = [(r.t, r.h, r.volume_before, r.volume_after, r.volume_drop, r.volume_drop / r.h ** 3)
            for r in ctx.surgery.surgeries]
    ctx.tables["surgeries"] = (("t", "h", "volume_before", "volume_after", "volume_drop", "kappa_s"), rows)
    return run_checks(ctx, [c for c in sc.checks] + (["surgery"] if "surgery" not in sc.checks else []))


def cmd_reduced(ctx: Context, out: Path, checkpoint_every: int) -> List[InequalityReport]:
    sc = ctx.scenario
    reps = cmd_flow(ctx, out, checkpoint_every)
    opts = sc.section("reduced")
    taus = _floats(opts.get("taus"), (0.01, 0.02, 0.05, 0.1))
    base = int(opts.get("base", 0))
    kw = dict(fan=int(opts.get("fan", 257)), steps=int(opts.get("steps", 256)),
              knots=int(opts.get("knots", 64)))
    field_ = RunField(ctx.trace)
    n = 3 if sc.flow.dim == 3 else 2
    rows, lrows = [], []
    data = []
    for tau in taus:
        d = reduced_distance_field(field_, base, tau, **kw)
        both = np.isfinite(d.l_shoot) & np.isfinite(d.l_direct)
        gap = float(np.max(np.abs(d.l_shoot[both] - d.l_direct[both])
                           / np.maximum(np.abs(d.l_shoot[both]), 1e-12))) if both.any() else math.nan
        data.append((tau, d, gap))
        rows.append((tau, d.V, d.min_l, float(d.l[base]), d.unreachable_fraction, gap))
        for q in range(len(d.l)):
            lrows.append((tau, q, d.l[q], d.l_shoot[q], d.l_direct[q]))
    ctx.tables["reduced"] = (("tau", "V", "min_l", "l_base", "unreachable_fraction", "shoot_direct_gap"), rows)
    ctx.tables["l_field"] = (("tau", "node", "l", "l_shoot", "l_direct"), lrows)

    tol = float(opts.get("tol", 0.02))
    V = np.array([d.V for _, d, _ in data])
    wanted = set(_floats_or_names(opts.get("checks", "monotone bound min_l agreement reliable")))
    if "monotone" in wanted:
        grow = np.diff(V) / V[:-1] if len(V) > 1 else np.zeros(0)
        k = int(np.argmax(grow)) if grow.size else 0
        reps.append(bound_report("reduced_monotone", float(max(grow.max(), 0.0)) if grow.size else 0.0,
                                 tol, (taus[k + 1] if grow.size else taus[0], None)))
    if "constant" in wanted:
        spread = float((V.max() - V.min()) / V.mean())
        reps.append(bound_report("reduced_constant", spread, tol, V_min=float(V.min()), V_max=float(V.max())))
    if "bound" in wanted:
        reps.append(bound_report("reduced_bound", float(V.max()), 1.0 + tol))
    if "min_l" in wanted:
        ml = max(d.min_l for _, d, _ in data)
        reps.append(bound_report("reduced_min_l", ml, n / 2.0 + float(opts.get("min_l_tol", 0.05))))
    if "agreement" in wanted:
        g = max((gap for _, _, gap in data if np.isfinite(gap)), default=0.0)
        reps.append(bound_report("shoot_direct_agreement", g, tol))
    if "reliable" in wanted:
        bad = [tau for tau, d, _ in data if d.unreliable]
        reps.append(InequalityReport("reduced_reliable", 1.0 if bad else -1.0, None, len(data),
                                     {"unreliable_taus": ",".join(map(str, bad)) or "none"}))
    return reps


def _floats_or_names(text):
    return str(text).replace(",", " ").split()


def cmd_functionals(ctx: Context, out: Path, checkpoint_every: int) -> List[InequalityReport]:
    sc = ctx.scenario
    reps = cmd_flow(ctx, out, checkpoint_every)
    opts = sc.section("functionals")
    kind = str(opts.get("kind", "W"))
    res = coupled_monotonicity(ctx.states, tau0=float(opts.get("tau0", 1.0)), kind=kind,
                               rhs_floor=float(opts.get("rhs_floor", 1e-6)),
                               rhs_rel=float(opts.get("rhs_rel", 0.05)))
    reps.extend(res.reports)
    ctx.tables["functionals"] = (("t", "tau", kind, "rate", "rhs"),
                                 list(zip(res.t, res.tau, res.value, res.rate, res.rhs)))
    stride = max(1, int(opts.get("lambda_stride", 20)))
    ts, lam = lambda_series(ctx.states[::stride])
    reps.append(lambda_monotone_report(ts, lam, abs_tol=float(opts.get("lambda_tol", 1e-3))))
    ctx.tables["lambda"] = (("t", "lambda"), list(zip(ts, lam)))
    return reps


def pinch_exact_report(dt: float = 1e-4, tol: float = 1e-8) -> InequalityReport:
    """RK4 against the two closed-form sub-system solutions."""
    a = integrate(CurvatureODEState(1.0, 1.0, 1.0), 0.4, dt)
    b = integrate(CurvatureODEState(1.0, 0.0, 0.0), 0.5, dt)
    err_a = float(np.max(np.abs(a.states - (1.0 / (1.0 - 2.0 * a.t))[:, None])))
    exact_b = np.zeros_like(b.states)
    exact_b[:, 0] = 1.0 / (1.0 - b.t)
    err_b = float(np.max(np.abs(b.states - exact_b)))
    return bound_report("pinch_exact", max(err_a, err_b), tol, equal=err_a, single=err_b)


def cmd_pinch(ctx: Context, out: Path, checkpoint_every: int) -> List[InequalityReport]:
    opts = ctx.scenario.section("pinch")
    n = int(opts.get("samples", 10000))
    horizon = float(opts.get("horizon", 5.0))
    dt = float(opts.get("dt", 1e-3))
    eps = float(opts.get("eps", 0.1))
    sets = _floats_or_names(opts.get("sets", "cone pinching hamilton_ivey"))
    rng = np.random.default_rng(ctx.seed)
    reps, rows = [], []
    for sid in sets:
        params = {"eps": eps} if sid == "pinching" else {}
        samples = sample_set(sid, n, rng, eps=eps)
        sr = preserved_set_check(sid, samples, horizon=horizon, dt=dt, **params)
        worst = -1.0 if sr.passed else max(1.0, -sr.worst_margin / 1e-7 - 1.0)
        reps.append(InequalityReport(f"preserved_{sid}", worst, None, sr.samples,
                                     {"exits": sr.exits, "blowups": sr.blowups,
                                      "ordering_swaps": sr.ordering_swaps,
                                      "trace_violations": sr.trace_violations,
                                      "pinching_trend": sr.pinching_trend,
                                      "worst_margin": sr.worst_margin}))
        rows.append((sid, sr.samples, sr.exits, sr.blowups, sr.ordering_swaps, sr.trace_violations,
                     sr.worst_margin))
    reps.append(pinch_exact_report())
    ctx.tables["pinch"] = (("set", "samples", "exits", "blowups", "ordering_swaps",
                            "trace_violations", "worst_margin"), rows)
    return reps


COMMAND_DRIVERS = {
    "flow2d": cmd_flow,
    "flow3d": cmd_flow,
    "surgery-run": cmd_surgery,
    "reduced-volume": cmd_reduced,
    "functionals": cmd_functionals,
    "pinch-ode": cmd_pinch,
}


# ---------------------------------------------------------------------------
# output


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_trace_csv(traces: Sequence[FlowTrace], path: Path) -> None:
    extra = []
    for tr in traces:
        for c in tr.columns:
            if c not in TRACE_COLUMNS and c not in extra:
                extra.append(c)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {TRACE_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["run", *TRACE_COLUMNS, *extra])
        for k, tr in enumerate(traces):
            for row in tr.rows:
                w.writerow([k] + [_cell(row.get(c, "")) for c in (*TRACE_COLUMNS, *extra)])


def _event_rows(ctx: Context):
    if ctx.surgery is not None:
        for kind, t, info in ctx.surgery.events:
            yield t, kind, info
        return
    for tr in ctx.traces:
        for e in tr.events:
            yield e.t, e.kind, e.info


def write_events_csv(ctx: Context, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {EVENTS_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["t", "kind", "info"])
        for t, kind, info in _event_rows(ctx):
            w.writerow([repr(float(t)), kind, json.dumps(info, sort_keys=True, default=float)])


def write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def write_reports(path: Path, name: str, reports: Sequence[InequalityReport], elapsed: float,
                  status: str) -> None:
    lines = [f"scenario: {name}", f"status: {status}", f"elapsed_s: {elapsed:.3f}"]
    lines += [r.as_text() for r in reports]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# scenario execution


@dataclass
class Outcome:
    name: str
    code: int
    reports: List[InequalityReport]
    elapsed: float
    message: str = ""


def execute(sc: Scenario, out: Path, seed: int = 0, checkpoint_every: int = 0,
            tables: bool = False) -> Outcome:
    """Run one scenario and write its artifacts into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(sc, seed=seed)
    t0 = time.perf_counter()
    code, message, reports = EXIT_OK, "", []
    try:
        reports = COMMAND_DRIVERS[sc.command](ctx, out, checkpoint_every)
        if not all(r.passed for r in reports):
            code = EXIT_FAILED
    except ConfigError as exc:
        code, message = EXIT_CONFIG, str(exc)
    except SingularityUnhandled as exc:
        code, message = EXIT_SINGULAR, str(exc)
        partial = exc.trace
        if isinstance(partial, FlowTrace):
            ctx.traces = [partial]
        elif partial is not None:
            ctx.surgery = partial
            ctx.traces = list(partial.runs)
    elapsed = time.perf_counter() - t0
    if ctx.traces:
        write_trace_csv(ctx.traces, out / "trace.csv")
        write_events_csv(ctx, out / "events.csv")
    if tables:
        for name, (header, rows) in ctx.tables.items():
            write_table(out / f"{name}.csv", header, rows)
    else:
        for name in ("reduced", "functionals", "pinch", "surgeries"):
            if name in ctx.tables:
                write_table(out / f"{name}.csv", *ctx.tables[name])
    status = {EXIT_OK: "PASS", EXIT_FAILED: "FAIL", EXIT_SINGULAR: f"SINGULARITY {message}",
              EXIT_CONFIG: f"CONFIG ERROR {message}"}[code]
    write_reports(out / "reports.txt", sc.name, reports, elapsed, status)
    return Outcome(sc.name, code, reports, elapsed, message)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RICCI_LAB_THREADS", "1")))
    except ValueError:
        raise ConfigError("RICCI_LAB_THREADS must be an integer") from None


def verify_all(out: Path, seed: int = 0, grid: Optional[int] = None, tables: bool = False,
               names: Optional[Sequence[str]] = None) -> int:
    names = list(names) if names else shipped_scenarios()
    scenarios = []
    for name in names:
        sc = load_scenario(name)
        if grid is not None and sc.command != "pinch-ode":
            sc = sc.with_grid(grid)
        scenarios.append(sc)

    def one(sc):
        return execute(sc, out / sc.name, seed=seed, tables=tables)

    with ThreadPoolExecutor(max_workers=min(_threads(), len(scenarios))) as pool:
        results = list(pool.map(one, scenarios))
    lines = []
    for r in results:
        status = {EXIT_OK: "PASS", EXIT_FAILED: "FAIL", EXIT_SINGULAR: "SINGULARITY",
                  EXIT_CONFIG: "CONFIG ERROR"}[r.code]
        lines.append(f"{r.name}: {status} ({r.elapsed:.1f} s)")
    summary = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(summary)
    print(summary, end="")
    codes = {r.code for r in results}
    for code in (EXIT_CONFIG, EXIT_SINGULAR, EXIT_FAILED):
        if code in codes:
            return code
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ricci-lab", description="Symmetry-reduced Ricci flow laboratory.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in (*COMMANDS, "verify-all"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="scenario file, or the name of a shipped scenario")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=_seed, default=0, help="seed for randomized sampling")
        s.add_argument("--grid", type=int, help="override the initial grid size")
        s.add_argument("--csv", action="store_true", help="also write every per-check CSV table")
        s.add_argument("--checkpoint-every", type=int, default=0, metavar="K",
                       help="write a checkpoint every K steps into OUT/checkpoints")
        if name == "verify-all":
            s.add_argument("--only", nargs="*", help="restrict to these shipped scenarios")
    return p


_DEFAULT_CONFIG = {"flow3d": "round_s3", "flow2d": "dented_s2_normalized",
                   "surgery-run": "dumbbell_surgery", "reduced-volume": "reduced_round_s3",
                   "functionals": "functionals_dented_s3", "pinch-ode": "pinch_ode"}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.checkpoint_every < 0:
            raise ConfigError("--checkpoint-every must be nonnegative")
        if args.command == "verify-all":
            out = Path(args.out or "ricci_lab_out")
            return verify_all(out, seed=args.seed, grid=args.grid, tables=args.csv, names=args.only)
        sc = load_scenario(args.config or _DEFAULT_CONFIG[args.command])
        if sc.command != args.command:
            raise ConfigError(f"scenario {sc.name!r} is a {sc.command} scenario, not {args.command}")
        if args.grid is not None:
            sc = sc.with_grid(args.grid)
        out = Path(args.out or Path("ricci_lab_out") / sc.name)
        res = execute(sc, out, seed=args.seed, checkpoint_every=args.checkpoint_every, tables=args.csv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in res.reports:
        print(r.as_text())
    if res.code == EXIT_CONFIG:
        print(f"configuration error: {res.message}", file=sys.stderr)
    if res.code == EXIT_SINGULAR:
        print(f"unhandled singularity: {res.message}", file=sys.stderr)
    return res.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

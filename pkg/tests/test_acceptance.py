"""End-to-end acceptance runs.

Each test drives the shipped scenarios through the same code path as
``ricci-lab verify-all`` and prints one ``criterion N: PASS|FAIL`` line.
Scenario runs are cached per module so that shared runs (round S^3, the
dumbbell) execute once.
"""
import math
import time

import numpy as np
import pytest

from ricci_lab.cli import execute
from ricci_lab.diagnostics import hamilton_ivey_check
from ricci_lab.geom import Grid1D, curvature, round_s3
from ricci_lab.initial_data import dumbbell
from ricci_lab.scenario import build_initial, load_scenario, shipped_scenarios

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = execute(load_scenario(name), root / name)
        return cache[name]

    return get


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return emit


def _by_name(outcome, prefix):
    return [r for r in outcome.reports if r.name.split("[")[0] == prefix]


def _summary(reports):
    return ", ".join(f"{r.name}={'ok' if r.passed else 'FAIL'}" for r in reports)


def _three_d_flows():
    """Shipped scenarios that evolve a 3-D warped metric and evaluate checks on it."""
    out = []
    for name in shipped_scenarios():
        sc = load_scenario(name)
        if sc.command in ("flow3d", "surgery-run"):
            out.append(sc.name)
    return out


def test_criterion_1_einstein_shrinker(runs, verdict):
    o = runs("round_s3")
    ext = _by_name(o, "extinction_time")
    prof = _by_name(o, "scale_profile")
    ok = (o.code == 0 and len(ext) == 1 and len(prof) == 1 and ext[0].passed and prof[0].passed
          and o.elapsed < 60.0)
    assert verdict(1, ok, f"{ext[0].as_text()}; {prof[0].as_text()}; {o.elapsed:.1f} s")


def test_criterion_2_surface_convergence(runs, verdict):
    o = runs("dented_s2_normalized")
    reps = [r for k in ("convergence", "entropy_monotone", "chow") for r in _by_name(o, k)]
    ok = o.code == 0 and len(reps) == 3 and all(r.passed for r in reps) and o.elapsed < 300.0
    assert verdict(2, ok, f"{_summary(reps)}; {o.elapsed:.1f} s")


def test_criterion_3_flat_torus_decay(runs, verdict):
    o = runs("torus_bump")
    reps = _by_name(o, "torus_decay") + _by_name(o, "torus_flat")
    ok = o.code == 0 and len(reps) == 2 and all(r.passed for r in reps)
    assert verdict(3, ok, "; ".join(r.as_text() for r in reps))


def test_criterion_4_hamilton_ivey(runs, verdict):
    names = _three_d_flows()
    reps = []
    for name in names:
        sc = load_scenario(name)
        m0 = build_initial(sc)
        nu0 = float(curvature(m0).op_eigs[:, 2].min())
        if nu0 < -1.0:
            continue
        found = _by_name(runs(name), "hamilton_ivey")
        assert found, f"{name} does not evaluate the pinching check"
        reps += found
    # injected violation on a genuine dumbbell curvature field
    c = curvature(dumbbell(n=256))
    c.op_eigs[40, 2] = -math.e ** 4
    c.R[40] = 0.0
    injected = hamilton_ivey_check([(0.5, c)], check_initial=False)
    ok = bool(reps) and all(r.passed for r in reps) and not injected.passed
    detail = f"{_summary(reps)}; injected={'flagged' if not injected.passed else 'MISSED'}"
    assert verdict(4, ok, detail)


def test_criterion_5_monotone_scalars(runs, verdict):
    reps = []
    for name in _three_d_flows():
        o = runs(name)
        for key in ("rmin_growth", "rmin_lower_bound", "volume_growth"):
            found = _by_name(o, key)
            assert found, f"{name} lacks {key}"
            reps += found
    ok = all(r.passed for r in reps)
    worst = max(reps, key=lambda r: r.worst)
    assert verdict(5, ok, f"{len(reps)} reports, worst {worst.as_text()}")


def test_criterion_6_reduced_volume(runs, verdict):
    t0 = time.perf_counter()
    rnd = runs("reduced_round_s3")
    dent = runs("reduced_dented_s3")
    elapsed = time.perf_counter() - t0
    want_round = {"reduced_constant", "reduced_bound", "reduced_min_l", "reduced_reliable"}
    want_dent = {"reduced_monotone", "reduced_bound", "reduced_min_l", "reduced_reliable"}
    have_round = {r.name for r in rnd.reports}
    have_dent = {r.name for r in dent.reports}
    reps = rnd.reports + dent.reports
    ok = (want_round <= have_round and want_dent <= have_dent and rnd.code == 0 and dent.code == 0
          and all(r.passed for r in reps) and elapsed < 600.0)
    assert verdict(6, ok, f"round: {_summary(rnd.reports)}; dented: {_summary(dent.reports)}; "
                          f"{elapsed:.1f} s")


def test_criterion_7_coupled_w(runs, verdict):
    o = runs("functionals_dented_s3")
    names = {r.name for r in o.reports}
    ok = o.code == 0 and all(r.passed for r in o.reports) and any("lambda" in n for n in names)
    assert verdict(7, ok, _summary(o.reports))


def test_criterion_8_pinch_ode(runs, verdict):
    o = runs("pinch_ode")
    sets = [r for r in o.reports if r.name.startswith("preserved_")]
    exact = _by_name(o, "pinch_exact")
    ok = (o.code == 0 and len(sets) == 3 and all(r.checked == 10000 and r.details["exits"] == 0
                                                 for r in sets)
          and exact and exact[0].passed and o.elapsed < 120.0)
    assert verdict(8, ok, f"{_summary(o.reports)}; {o.elapsed:.1f} s")


def test_criterion_9_surgery(runs, verdict):
    o = runs("dumbbell_surgery")
    want = ("surgery_count", "surgery_hypothesis", "post_surgery_pinching", "volume_drop", "extinction")
    reps = [r for k in want for r in _by_name(o, k)]
    ok = (o.code == 0 and len(reps) == len(want) and all(r.passed for r in o.reports)
          and o.elapsed < 1200.0)
    assert verdict(9, ok, f"{_summary(reps)}; {o.elapsed:.1f} s")


def test_criterion_10_convergence_order(verdict):
    errs = []
    for n in (512, 1024):
        c = curvature(round_s3(Grid1D.uniform(n), 1.0))
        errs.append(float(np.max(np.abs(c.R - 6.0))))
    ratio = errs[0] / errs[1]
    assert verdict(10, ratio >= 3.5, f"err512={errs[0]:.3e} err1024={errs[1]:.3e} ratio={ratio:.2f}")

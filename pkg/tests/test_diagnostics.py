import math

import numpy as np
import pytest

from ricci_lab.diagnostics import (InequalityReport, chow_sides, entropy, entropy2d,
                                   hamilton_ivey_bound, hamilton_ivey_check, harnack2d_check,
                                   harnack_ratio, kappa_ratio, monotone_scalars, reports_text,
                                   trace_lyh_check)
from ricci_lab.errors import Inapplicable
from ricci_lab.flow import FlowConfig, initial_state, run
from ricci_lab.geom import CurvatureField, Grid1D, round_s2, round_s3
from ricci_lab.initial_data import dented_sphere, dumbbell, torus_bump


def _field(nu, R):
    """Synthetic curvature field with given smallest eigenvalue and scalar curvature."""
    nu = np.asarray(nu, dtype=float)
    R = np.asarray(R, dtype=float)
    rest = 0.5 * (R - nu)
    op = np.stack([rest, rest, nu], axis=-1)
    return CurvatureField(K_mix=nu / 2, K_sph=rest / 2, ricci_eigs=op, R=R, op_eigs=op)


def test_hamilton_ivey_vacuous_for_nonnegative_curvature():
    rep = hamilton_ivey_check([(0.0, _field(np.zeros(5), np.ones(5)))])
    assert rep.passed and rep.checked == 0


def test_hamilton_ivey_flags_injected_node():
    nu = np.full(9, -0.5)
    R = np.full(9, 10.0)
    nu[4], R[4] = -math.e ** 4, 0.0
    rep = hamilton_ivey_check([(0.0, _field(nu, R))], check_initial=False)
    assert not rep.passed
    assert rep.location == (0.0, 4)
    assert rep.details["deficit"] == pytest.approx(math.e ** 4)


def test_hamilton_ivey_initial_hypothesis():
    with pytest.raises(Inapplicable):
        hamilton_ivey_check([(0.0, _field(np.full(3, -2.0), np.zeros(3)))])


def test_hamilton_ivey_bound_values():
    assert hamilton_ivey_bound(-math.e ** 3, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert np.isnan(hamilton_ivey_bound(1.0, 0.0))
    assert hamilton_ivey_bound(-1.0, math.e - 1) == pytest.approx(-2.0)


def test_hamilton_ivey_on_dumbbell():
    tr = run(initial_state(dumbbell(0.35, 2, n=256, neck_length=3.0, blend=0.1)),
             FlowConfig(t_end=0.5, keep_snapshots=True, snapshot_every=20))
    rep = hamilton_ivey_check(tr)
    assert rep.passed and rep.checked > 0


def test_harnack_ratio_for_space_constant_curvature():
    R0, t1, t2 = 1.0, 0.2, 0.5
    R = lambda t: R0 / (1 - R0 * t)
    expect = (t2 / t1) * (1 - R0 * t1) / (1 - R0 * t2)
    assert harnack_ratio(R(t1), R(t2), t1, t2, 0.0) == pytest.approx(expect)
    assert expect >= 1


def test_harnack_on_round_and_dented_sphere():
    for m in (round_s2(Grid1D.uniform(64)), dented_sphere(0.2, 2, n=64, dim=2)):
        tr = run(initial_state(m), FlowConfig(mode="unnormalized2d", t_end=0.3,
                                              keep_snapshots=True, snapshot_every=5))
        rep = harnack2d_check(tr, pairs=500)
        assert rep.passed, rep.as_text()


def test_harnack_detects_injected_drop():
    tr = run(initial_state(round_s2(Grid1D.uniform(64))),
             FlowConfig(mode="unnormalized2d", t_end=0.2, keep_snapshots=True, snapshot_every=5))
    snaps = list(tr.snapshots)
    t, m = snaps[-1]
    # a later state with much smaller curvature: a larger sphere
    big = round_s2(Grid1D.uniform(64), 3.0)
    snaps[-1] = (t, big)
    assert not harnack2d_check(snaps, pairs=500).passed


def test_harnack_skips_without_two_positive_times():
    m = round_s2(Grid1D.uniform(32))
    rep = harnack2d_check([(0.0, m), (0.1, m)])
    assert rep.checked == 0 and rep.passed


def test_harnack_needs_positive_curvature():
    with pytest.raises(Inapplicable):
        harnack2d_check([(0.1, torus_bump(0.2, 1, 16))])


def test_trace_lyh_on_round_shrinking_sphere():
    tr = run(initial_state(round_s3(Grid1D.uniform(64))),
             FlowConfig(t_end=0.2, keep_snapshots=True, snapshot_every=10))
    rep = trace_lyh_check(tr)
    assert rep.passed and rep.checked > 0
    assert rep.details["fallback_nodes"] == 0


def test_trace_lyh_fails_when_time_reversed():
    tr = run(initial_state(round_s3(Grid1D.uniform(64))),
             FlowConfig(t_end=0.2, keep_snapshots=True, snapshot_every=10))
    snaps = tr.snapshots
    ts = [t for t, _ in snaps]
    reversed_ = [(t, m) for t, (_, m) in zip(ts, snaps[::-1])]
    assert not trace_lyh_check(reversed_).passed


def test_trace_lyh_inapplicable_for_negative_curvature():
    tr = run(initial_state(dumbbell(0.35, 2, n=128, neck_length=3.0, blend=0.1)),
             FlowConfig(t_end=0.05, keep_snapshots=True, snapshot_every=10))
    with pytest.raises(Inapplicable):
        trace_lyh_check(tr)


def test_monotone_scalars_round_sphere():
    tr = run(initial_state(round_s3(Grid1D.uniform(64))), FlowConfig(t_end=0.2, snapshot_every=10))
    reps = {r.name: r for r in monotone_scalars(tr)}
    assert all(r.passed for r in reps.values())
    V, t = tr.column("volume"), tr.column("t")
    q = V * (t + 1.5) ** -1.5
    assert np.all(np.diff(q) < 0)


def test_monotone_scalars_flat_torus():
    rows = [dict(t=t, Rmin=0.0, volume=1.0, nu_min=0.0) for t in np.linspace(0, 1, 5)]
    assert all(r.passed for r in monotone_scalars(rows))


def test_monotone_scalars_flag_volume_increase():
    rows = [dict(t=t, Rmin=1.0, volume=1.0 + 10 * t, nu_min=0.0) for t in np.linspace(0, 1, 5)]
    reps = {r.name: r for r in monotone_scalars(rows)}
    assert not reps["volume_growth"].passed
    assert not reps["rmin_growth"].passed


def test_monotone_scalars_flag_rmin_decrease():
    rows = [dict(t=t, Rmin=-0.5 - t, volume=1.0, nu_min=-0.1) for t in np.linspace(0, 1, 5)]
    reps = {r.name: r for r in monotone_scalars(rows)}
    assert not reps["rmin_lower_bound"].passed
    assert reps["rmin_nondecreasing"].details.get("skipped")


def test_entropy_and_chow_on_round_s2():
    m = round_s2(Grid1D.uniform(128))
    assert entropy(m) == pytest.approx(4 * math.pi * 2 * math.log(2), rel=1e-6)
    lhs, rhs = chow_sides(m)
    assert abs(lhs) < 1e-8 and abs(rhs) < 1e-8


def test_entropy_decreases_on_dented_sphere():
    tr = run(initial_state(dented_sphere(0.2, 2, n=128, dim=2)),
             FlowConfig(mode="normalized2d", t_end=1.0, keep_snapshots=True, snapshot_every=20))
    es = entropy2d(tr)
    assert all(r.passed for r in es.reports)
    assert es.E[-1] < es.E[0]


def test_entropy_uptick_is_flagged():
    a = round_s2(Grid1D.uniform(64))
    b = dented_sphere(0.1, 2, n=64, dim=2)
    es = entropy2d([(0.0, a), (0.1, b)])
    assert not es.reports[0].passed


def test_entropy_needs_positive_curvature():
    with pytest.raises(Inapplicable):
        entropy(torus_bump(0.3, 1, 16))


def test_kappa_ratio_round_sphere():
    m = round_s3(Grid1D.uniform(256))
    small, unit = kappa_ratio(m, [0.05, 1.0], stride=32)
    assert small.ratio == pytest.approx(4 * math.pi / 3, rel=2e-3)
    # geodesic ball of radius 1 in the unit sphere
    assert unit.ratio == pytest.approx(2 * math.pi * (1 - math.sin(1) * math.cos(1)), rel=1e-4)


def test_kappa_ratio_skips_large_radius():
    m = round_s3(Grid1D.uniform(64))
    (k,) = kappa_ratio(m, [2.0])
    assert k.ratio is None


def test_report_text():
    rep = InequalityReport("x", -0.5, (0.1, 3), 7, {"a": 1.0})
    assert rep.passed
    assert reports_text([rep]) == "x: PASS worst=-0.5 at t=0.1 node=3 checked=7 a=1\n"

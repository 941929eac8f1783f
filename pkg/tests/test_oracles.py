import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from ricci_lab.errors import ConfigError, PastExtinction
from ricci_lab.flow import FlowConfig, initial_state, run
from ricci_lab.geom import ConformalTorus, Grid1D, curvature, round_s2, volume
from ricci_lab.oracles import (ExactSolution, cigar_conformal_factor, cigar_field,
                               cigar_on_torus, cigar_scalar_curvature, cigar_window, evaluate,
                               soliton_residual)


def test_shrinker_scale_at_three_quarters():
    sol = ExactSolution("einstein_shrink", 0.5)
    assert sol.scale2(0.75) == pytest.approx(0.25)
    m0 = evaluate(sol, 0.0, Grid1D.uniform(64))
    m1 = evaluate(sol, 0.75, Grid1D.uniform(64))
    assert volume(m1) / volume(m0) == pytest.approx(0.25 ** 1.5, rel=1e-12)


def test_shrinker_has_ric_equal_lambda_g():
    sol = ExactSolution("einstein_shrink", 0.5)
    c = curvature(evaluate(sol, 0.0, Grid1D.uniform(256)))
    assert np.allclose(c.ricci_eigs, 0.5, rtol=1e-4)


def test_expander_at_zero_is_initial_metric():
    sol = ExactSolution("einstein_expand", 0.5)
    g = Grid1D.uniform(64)
    a, b = evaluate(sol, 0.0, g), evaluate(sol, 0.0, g)
    assert np.array_equal(a.psi, b.psi)
    assert sol.scale2(0.0) == 1.0 and sol.scale2(2.0) == 3.0
    assert math.isinf(sol.extinction_time)


def test_expander_is_hyperbolic():
    sol = ExactSolution("einstein_expand", 0.5)
    w = evaluate(sol, 1.0, Grid1D.uniform(512))
    K = w.gauss_curvature()
    # Ric = -lambda rho^-2 g with K = Ric/(n-1) in dimension 3
    target = -0.5 / 2 / sol.scale2(1.0)
    inner = slice(5, -5)
    assert np.allclose(K[inner], target, rtol=1e-5)


@pytest.mark.parametrize("kind,param", [("einstein_shrink", 0.5), ("round_s3", 2.0),
                                        ("round_s2", 1.0), ("cylinder", 1.0)])
def test_past_extinction_raises(kind, param):
    sol = ExactSolution(kind, param)
    with pytest.raises(PastExtinction):
        evaluate(sol, sol.extinction_time, Grid1D.uniform(32))


def test_bad_solution_parameters():
    with pytest.raises(ConfigError):
        ExactSolution("bryant")
    with pytest.raises(ConfigError):
        ExactSolution("round_s3", -1.0)


def test_cigar_closed_forms():
    r = np.array([0.0, 1.0, 10.0])
    assert np.allclose(cigar_conformal_factor(r), 1 / (1 + r * r))
    R = cigar_scalar_curvature(np.linspace(0, 50, 200))
    assert np.all(R > 0) and np.all(np.diff(R) < 0) and R[-1] < 2e-3


def test_cigar_circumference_tends_to_two_pi():
    # circumference at Euclidean radius r is 2 pi r / sqrt(1 + r^2)
    r = 1e4
    assert 2 * math.pi * r * math.sqrt(cigar_conformal_factor(r)) == pytest.approx(2 * math.pi,
                                                                                  rel=1e-7)
    w = evaluate(ExactSolution("cigar"), 0.0, Grid1D.uniform(64))
    assert 2 * math.pi * w.psi[-1] == pytest.approx(2 * math.pi, rel=1e-4)


def test_cigar_window_edge_curvature():
    s = cigar_window()
    assert 4 / math.cosh(s) ** 2 == pytest.approx(1e-4)


def test_cigar_steady_identity_symbolic():
    s = sp.symbols("s", positive=True)
    psi = sp.tanh(s)
    V = -2 * sp.tanh(s)
    K = -sp.diff(psi, s, 2) / psi
    radial = 2 * K + 2 * sp.diff(V, s)
    hoop = 2 * K + 2 * V * sp.diff(psi, s) / psi
    assert sp.simplify(radial) == 0 and sp.simplify(hoop) == 0


def test_cigar_residual_is_second_order():
    sol = ExactSolution("cigar")
    res = []
    for n in (256, 512, 1024):
        w = evaluate(sol, 0.0, Grid1D.uniform(n))
        res.append(soliton_residual(w, "steady", cigar_field(w.s)))
    assert res[-1] < 1e-4
    assert res[0] / res[1] > 3.5 and res[1] / res[2] > 3.5


def test_cigar_half_field_is_not_a_soliton():
    w = evaluate(ExactSolution("cigar"), 0.0, Grid1D.uniform(512))
    assert soliton_residual(w, "steady", 0.5 * cigar_field(w.s)) > 0.5


def test_round_s2_is_not_steady():
    m = round_s2(Grid1D.uniform(128), 1.0)
    # Ric = g, so 2 Ric has sup norm 2
    assert soliton_residual(m, "steady") == pytest.approx(2.0, rel=1e-4)
    assert soliton_residual(m, "shrinking", lam=1.0) < 1e-4


def test_flat_torus_residual_is_zero():
    assert soliton_residual(ConformalTorus(np.zeros((16, 16))), "steady") == 0.0


def test_cigar_on_torus_conformal_factor():
    w = 5.0
    m = cigar_on_torus(64, w)
    xs = (np.arange(64) / 64 - 0.5) * 2 * w
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    # unit-torus coordinates are Euclidean ones divided by 2w
    assert np.allclose(np.exp(2 * m.u), (2 * w) ** 2 * cigar_conformal_factor(np.hypot(X, Y)))


def test_shrinker_flow_matches_exact_profile():
    sol = ExactSolution("einstein_shrink", 0.5)
    g = Grid1D.uniform(128)
    tr = run(initial_state(evaluate(sol, 0.0, g)), FlowConfig(t_end=0.9, keep_snapshots=True,
                                                               snapshot_every=100))
    worst = 0.0
    for t, m in tr.snapshots:
        ex = evaluate(sol, t, g)
        worst = max(worst, np.max(np.abs(m.psi - ex.psi)) / np.max(ex.psi))
    assert worst < 1e-3


@given(st.floats(0.05, 2.0), st.floats(0.0, 0.99))
def test_shrinker_scale_is_linear(lam, frac):
    sol = ExactSolution("einstein_shrink", lam)
    t = frac * sol.extinction_time
    assert sol.scale2(t) == pytest.approx(1 - 2 * lam * t, abs=1e-14)
    assert sol.scale2(t) > 0

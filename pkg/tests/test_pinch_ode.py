import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ricci_lab import pinch_ode
from ricci_lab.pinch_ode import (E2, CurvatureODEState, f_curve, f_inverse, integrate,
                                 integrate_batch, pinching_delta, preserved_set_check,
                                 sample_set, set_margin, write_trajectory_csv)


def test_equal_eigenvalues_blow_up_at_one_half():
    traj = integrate(CurvatureODEState(1.0, 1.0, 1.0), 0.4, 1e-4)
    exact = 1.0 / (1.0 - 2.0 * traj.t)
    assert np.max(np.abs(traj.states / exact[:, None] - 1.0)) < 1e-10
    traj = integrate(CurvatureODEState(1.0, 1.0, 1.0), 1.0, 1e-3)
    assert traj.blowup and traj.blowup_time == pytest.approx(0.5, abs=1e-6)


def test_single_eigenvalue_subsystem():
    traj = integrate(CurvatureODEState(1.0, 0.0, 0.0), 0.5, 1e-4)
    assert np.all(traj.states[:, 1:] == 0.0)
    assert np.max(np.abs(traj.states[:, 0] * (1.0 - traj.t) - 1.0)) < 1e-10


def test_zero_state_is_constant():
    traj = integrate(CurvatureODEState(0.0, 0.0, 0.0), 2.0, 1e-2)
    assert not traj.blowup and np.all(traj.states == 0.0)
    assert traj.t[-1] == pytest.approx(2.0)


def test_state_ordering_validated():
    with pytest.raises(ValueError):
        CurvatureODEState(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate_batch(np.zeros(3), 1.0, 0.0)


def test_normalized_output_near_blowup():
    traj = integrate(CurvatureODEState(1.0, 0.5, 0.2), 10.0, 1e-3)
    assert traj.blowup
    q = traj.normalized[-1]
    assert q.sum() == pytest.approx(1.0)
    # pinching improves towards the round direction
    assert (q[0] - q[2]) < (1.0 - 0.2) / 1.7


def test_trajectory_csv(tmp_path):
    traj = integrate(CurvatureODEState(1.0, 0.0, -0.5), 0.01, 1e-3)
    p = tmp_path / "traj.csv"
    write_trajectory_csv(traj, p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["t", "lam", "mu", "nu", "lam_n", "mu_n", "nu_n"]
    assert len(rows) == len(traj.t) + 1
    assert float(rows[-1][1]) == traj.states[-1, 0]


@given(st.floats(-E2 + 1e-9, 1e8))
def test_f_inverse_round_trip(y):
    x = f_inverse(y)
    assert x >= E2
    assert f_curve(x) == pytest.approx(y, rel=1e-10, abs=1e-9)


def test_f_inverse_edges():
    assert f_inverse(-E2) == pytest.approx(E2)
    with pytest.raises(ValueError):
        f_inverse(-100.0)
    assert f_inverse(0.0) == pytest.approx(math.e ** 3)
    assert np.allclose(f_curve(f_inverse(np.array([1.0, 10.0, 1e3]))), [1.0, 10.0, 1e3])


def test_pinching_delta():
    assert pinching_delta(0.1) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        pinching_delta(0.5)


@pytest.mark.parametrize("set_id", sorted(pinch_ode.SETS))
def test_samples_lie_in_their_set(set_id):
    rng = np.random.default_rng(1)
    x = sample_set(set_id, 400, rng)
    m, sc = set_margin(set_id, x)
    assert np.all(m >= -1e-12 * sc)
    assert np.all(x[0] >= x[1]) and np.all(x[1] >= x[2])
    # a good share sits on or next to the boundary
    assert np.mean(m / sc < 1e-3) > 0.1


@pytest.mark.parametrize("set_id", sorted(pinch_ode.SETS))
def test_sets_are_preserved(set_id):
    rng = np.random.default_rng(2)
    rep = preserved_set_check(set_id, sample_set(set_id, 1000, rng), horizon=3.0)
    assert rep.passed, rep.as_text()
    assert rep.blowups > 0


def test_unpreserved_set_is_caught(monkeypatch):
    def below_one(x, t, **_):
        return 1.0 - x[0], np.ones(x.shape[1])

    monkeypatch.setitem(pinch_ode.SETS, "below_one", below_one)
    x = np.array([[0.5, 0.9], [0.1, 0.0], [0.0, -0.2]])
    rep = preserved_set_check("below_one", x, horizon=5.0)
    assert not rep.passed and rep.exits == 2
    assert rep.worst_margin < 0


def test_samples_outside_are_rejected():
    with pytest.raises(ValueError):
        preserved_set_check("cone", np.array([[1.0], [0.5], [-0.5]]))
    with pytest.raises(ValueError):
        set_margin("nope", np.zeros(3))


def test_hamilton_ivey_margin_is_time_dependent():
    x = np.array([[20.0], [0.0], [-10.0]])
    m0, _ = set_margin("hamilton_ivey", x, 0.0)
    m1, _ = set_margin("hamilton_ivey", x, 1.0)
    assert m0[0] == pytest.approx(min(13.0, 10.0 - f_curve(10.0)))
    assert m1[0] == pytest.approx(min(10.0 * 2 + 3.0, 20.0 - f_curve(20.0)))


ordered = st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3).map(sorted).map(lambda v: v[::-1])


@given(st.lists(ordered, min_size=1, max_size=8))
def test_ordering_and_trace_growth(states):
    x0 = np.array(states).T
    seen = []

    def observe(t, x, t_prev, x_prev, active):
        tol = 1e-12 * np.abs(x).max(axis=0)
        assert np.all(~active | ((x[0] >= x[1] - tol) & (x[1] >= x[2] - tol)))
        T0, T1 = x_prev.sum(axis=0), x.sum(axis=0)
        seen.append(np.all(~active | (T1 >= T0 - 1e-12 * np.maximum(np.abs(T1), 1.0))))

    integrate_batch(x0, 1.0, 1e-2, observer=observe)
    assert all(seen)

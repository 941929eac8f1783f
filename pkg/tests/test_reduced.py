import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ricci_lab.errors import Inapplicable, InvalidPath
from ricci_lab.flow import FlowConfig, initial_state, run
from ricci_lab.geom import Grid1D, round_s3
from ricci_lab.initial_data import dented_sphere
from ricci_lab.oracles import MeridianWindow
from ricci_lab.reduced import (RunField, SpaceTimePath, l_length, minimize_paths,
                               reduced_distance_field, reduced_distance_of, shoot_l_geodesic)

N = 64
SPAN = 4.0


@pytest.fixture(scope="module")
def flat():
    """Static flat R^3 on the ball of radius 4 (meridian from the origin)."""
    g = Grid1D.uniform(N)
    w = MeridianWindow(g, SPAN, SPAN * g.nodes, 3, True)
    return RunField([(0.0, w), (SPAN, w)], static=True)


@pytest.fixture(scope="module")
def static_sphere():
    m = round_s3(Grid1D.uniform(N), 2.0)
    return RunField([(0.0, m), (1.0, m)], static=True)


def _straight(p, q, tau_bar, k=65):
    sig = np.linspace(0.0, math.sqrt(tau_bar), k)
    nodes = p + (q - p) * sig / sig[-1]
    return SpaceTimePath(p, sig ** 2, nodes)


@given(st.integers(8, 56), st.integers(0, N), st.floats(0.1, 3.0))
def test_flat_straight_path_action(p, q, tau_bar):
    field = RunField([(0.0, _flat_window()), (SPAN, _flat_window())], static=True)
    path = _straight(p, q, tau_bar)
    d = abs(q - p) * SPAN / N
    assert l_length(path, field) == pytest.approx(d * d / (2 * math.sqrt(tau_bar)), rel=1e-10,
                                                 abs=1e-12)
    assert reduced_distance_of(path, field) == pytest.approx(d * d / (4 * tau_bar), rel=1e-10,
                                                             abs=1e-12)


def _flat_window():
    g = Grid1D.uniform(N)
    return MeridianWindow(g, SPAN, SPAN * g.nodes, 3, True)


def test_constant_path_on_flat_space(flat):
    path = SpaceTimePath(20.0, np.linspace(0, 1, 9), np.full(9, 20.0))
    assert l_length(path, flat) == 0.0


@pytest.mark.parametrize("tau_bar", [0.1, 0.5, 1.0])
def test_constant_path_on_static_round_s3(static_sphere, tau_bar):
    a = 2.0
    path = SpaceTimePath(10.0, np.linspace(0, tau_bar, 33), np.full(33, 10.0))
    expect = (2 / 3) * tau_bar ** 1.5 * 6 / a ** 2
    assert l_length(path, static_sphere) == pytest.approx(expect, rel=1e-4)


def test_shot_on_flat_space_is_straight(flat):
    v, tau_bar, p = 0.7, 0.8, 16
    path = shoot_l_geodesic(p, v, flat, tau_bar)
    sig = np.sqrt(path.tau)
    assert np.allclose(path.nodes, p + 2 * v * sig * N / SPAN, atol=1e-10)
    assert path.length == pytest.approx((2 * v * sig[-1]) ** 2 / (2 * sig[-1]), rel=1e-10)


@pytest.fixture(scope="module")
def dented_run():
    return RunField(run(initial_state(dented_sphere(0.2, 2, n=64, dim=3)),
                        FlowConfig(t_end=0.05, keep_snapshots=True, snapshot_every=1)))


def test_zero_velocity_at_pole_stays_put(dented_run):
    path = shoot_l_geodesic(0, 0.0, dented_run, 0.02)
    assert np.max(np.abs(path.nodes)) < 1e-12


def test_reduced_distance_flat(flat):
    p, tau_bar = N // 2, 1.0
    data = reduced_distance_field(flat, p, tau_bar, fan=129, knots=16)
    d = np.abs(np.arange(N + 1) - p) * SPAN / N
    assert np.allclose(data.l, d * d / (4 * tau_bar), atol=1e-6)
    # shots aimed at the open edge leave the window; the direct optimizer covers them
    both = np.isfinite(data.l_shoot)
    assert both[: N - 4].all()
    assert np.allclose(data.l_direct[both], data.l_shoot[both], atol=1e-6)
    assert data.min_l == pytest.approx(0.0, abs=1e-12)


def test_direct_optimizer_finds_straight_lines(flat):
    ends = np.array([0.25, 0.5, 0.75])
    acts, sig, paths = minimize_paths(flat, 0.5, ends, 0.5, knots=8)
    d = np.abs(ends - 0.5) * SPAN
    assert np.allclose(acts, d * d / (2 * math.sqrt(0.5)), rtol=1e-6, atol=1e-10)


def test_invalid_paths(flat):
    with pytest.raises(InvalidPath):
        SpaceTimePath(1.0, [0.1, 0.2], [1.0, 2.0])
    with pytest.raises(InvalidPath):
        SpaceTimePath(1.0, [0.0, 0.2], [2.0, 2.0])
    with pytest.raises(InvalidPath):
        l_length(SpaceTimePath(60.0, [0.0, 1.0], [60.0, 70.0]), flat)
    with pytest.raises(InvalidPath):
        l_length(SpaceTimePath(10.0, [0.0, 10.0], [10.0, 10.0]), flat)


def test_sparse_runs_are_inapplicable():
    tr = run(initial_state(dented_sphere(0.2, 2, n=32, dim=3)),
             FlowConfig(t_end=0.05, keep_snapshots=True, snapshot_every=50))
    with pytest.raises(Inapplicable):
        reduced_distance_field(tr, 0, 0.04)


def test_reduced_volume_small_run(dented_run):
    a = reduced_distance_field(dented_run, 0, 0.02, fan=129, knots=16)
    b = reduced_distance_field(dented_run, 0, 0.045, fan=129, knots=16)
    assert a.V <= 1.0 + 1e-2 and b.V <= a.V + 1e-3
    assert a.l[0] < b.l[0]
    assert np.nanmin(a.l) >= 0.0
    assert a.min_l <= 1.5 and b.min_l <= 1.5
    ok = np.isfinite(a.l_shoot) & np.isfinite(a.l_direct)
    assert np.all(np.abs(a.l_shoot[ok] - a.l_direct[ok]) <= 0.02 * np.maximum(a.l[ok], 1e-3))

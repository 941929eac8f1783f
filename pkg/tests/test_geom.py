import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from ricci_lab.errors import InvalidMetric, PoleSingular
from ricci_lab.geom import (ConformalTorus, Grid1D, RotSphere, WarpedMetric3, arclength,
                            ball_volume, curvature, curvature2d, integrate, mean_scalar,
                            quad_weights, round_s2, round_s3, volume)


def _sympy_warped_curvature(psi_expr, s):
    """Sectional curvatures of ds^2 + psi(s)^2 g_S2 from the Christoffel symbols."""
    th, ph = sp.symbols("theta phi")
    coords = [s, th, ph]
    g = sp.diag(1, psi_expr ** 2, psi_expr ** 2 * sp.sin(th) ** 2)
    ginv = g.inv()
    n = 3
    Gam = [[[sum(ginv[a, d] * (sp.diff(g[d, b], coords[c]) + sp.diff(g[d, c], coords[b])
                               - sp.diff(g[b, c], coords[d])) for d in range(n)) / 2
             for c in range(n)] for b in range(n)] for a in range(n)]

    def riem(a, b, c, d):  # R^a_{bcd}
        expr = sp.diff(Gam[a][b][d], coords[c]) - sp.diff(Gam[a][b][c], coords[d])
        expr += sum(Gam[a][c][e] * Gam[e][b][d] - Gam[a][d][e] * Gam[e][b][c] for e in range(n))
        return sp.simplify(expr)

    # K(e_s, e_theta) = R_{s theta theta s}/(g_ss g_thth) with lowered index
    R_sts = sum(g[0, a] * riem(a, 1, 0, 1) for a in range(n))
    K_mix = sp.simplify(R_sts / (g[0, 0] * g[1, 1]))
    R_tptp = sum(g[1, a] * riem(a, 2, 1, 2) for a in range(n))
    K_sph = sp.simplify(R_tptp / (g[1, 1] * g[2, 2]))
    return K_mix, K_sph


def test_sympy_oracle_matches_closed_forms():
    s = sp.symbols("s", positive=True)
    psi = sp.sin(s) * (1 + sp.Rational(1, 5) * sp.cos(s) ** 2)
    K_mix, K_sph = _sympy_warped_curvature(psi, s)
    assert sp.simplify(K_mix + sp.diff(psi, s, 2) / psi) == 0
    assert sp.simplify(K_sph - (1 - sp.diff(psi, s) ** 2) / psi ** 2) == 0


def test_curvature_matches_sympy_profile():
    s = sp.symbols("s", positive=True)
    psi_e = sp.sin(s) * (1 + sp.Rational(1, 5) * sp.sin(s) ** 2)
    K_mix, K_sph = _sympy_warped_curvature(psi_e, s)
    f_mix = sp.lambdify(s, K_mix, "numpy")
    f_sph = sp.lambdify(s, K_sph, "numpy")
    f_psi = sp.lambdify(s, psi_e, "numpy")
    n = 512
    grid = Grid1D.uniform(n)
    x = grid.nodes
    psi = f_psi(np.pi * x)
    psi[0] = psi[-1] = 0.0
    m = WarpedMetric3(grid, np.full(n + 1, np.pi), psi)
    c = curvature(m)
    inner = slice(8, -8)
    assert np.max(np.abs(c.K_mix[inner] - f_mix(np.pi * x[inner]))) < 1e-6
    assert np.max(np.abs(c.K_sph[inner] - f_sph(np.pi * x[inner]))) < 1e-6
    R_exact = 4 * f_mix(np.pi * x[inner]) + 2 * f_sph(np.pi * x[inner])
    assert np.max(np.abs(c.R[inner] - R_exact)) < 1e-5


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_round_s3_curvature(a):
    c = curvature(round_s3(Grid1D.uniform(128), a))
    assert np.allclose(c.K_mix, 1 / a ** 2, atol=1e-6)
    # 1/psi^2 amplifies truncation error next to the poles
    assert np.allclose(c.K_sph, 1 / a ** 2, rtol=1e-4, atol=0)
    assert np.allclose(c.R, 6 / a ** 2, rtol=1e-4, atol=0)
    assert np.allclose(c.op_eigs, 2 / a ** 2, rtol=1e-4, atol=0)  # factor-two convention
    assert np.allclose(c.ricci_eigs, 2 / a ** 2, rtol=1e-4, atol=0)


def test_round_s2_gauss_curvature():
    c = curvature2d(round_s2(Grid1D.uniform(128), 2.0))
    assert np.allclose(c.R, 0.5, atol=1e-6)


def test_volumes():
    g = Grid1D.uniform(128)
    assert volume(round_s3(g, 1.5)) == pytest.approx(2 * math.pi ** 2 * 1.5 ** 3, rel=1e-8)
    assert volume(round_s2(g, 1.5)) == pytest.approx(4 * math.pi * 1.5 ** 2, rel=1e-8)
    assert volume(ConformalTorus(np.zeros((8, 8)))) == pytest.approx(1.0)
    m = round_s3(g, 1.0)
    assert integrate(m, curvature(m).R) == pytest.approx(6 * 2 * math.pi ** 2, rel=1e-6)
    assert mean_scalar(m) == pytest.approx(6.0, rel=1e-6)


def test_arclength_of_round_sphere():
    s = arclength(round_s3(Grid1D.uniform(64), 1.0))
    assert s[-1] == pytest.approx(math.pi, rel=1e-12)


def test_ball_volume_round_s3_pole():
    m = round_s3(Grid1D.uniform(256), 1.0)
    r = 0.7
    exact = 2 * math.pi * (r - math.sin(r) * math.cos(r))
    assert ball_volume(m, 0, r) == pytest.approx(exact, rel=1e-5)
    assert ball_volume(m, 0, 10.0) == pytest.approx(volume(m))


def test_quadrature_order():
    for n, tol in ((32, 1e-6), (64, 1e-7)):
        x = np.linspace(0, 1, n + 1)
        assert np.dot(quad_weights(x), np.exp(x)) == pytest.approx(math.e - 1, abs=tol)


def test_curvature_convergence_order():
    errs = []
    for n in (128, 256):
        c = curvature(round_s3(Grid1D.uniform(n), 1.0))
        errs.append(np.max(np.abs(c.R - 6.0)))
    assert errs[0] / errs[1] > 3.5


def test_invalid_metrics():
    g = Grid1D.uniform(32)
    x = g.nodes
    psi = np.sin(np.pi * x)
    psi[0] = psi[-1] = 0.0
    with pytest.raises(InvalidMetric):
        WarpedMetric3(g, -np.ones_like(x), psi)
    bad = psi.copy()
    bad[0] = 1e-3
    with pytest.raises(InvalidMetric):
        WarpedMetric3(g, np.full_like(x, np.pi), bad)
    with pytest.raises(PoleSingular):
        curvature(WarpedMetric3(g, np.full_like(x, np.pi), 2 * psi))
    with pytest.raises(InvalidMetric):
        Grid1D(np.linspace(0, 1, 5))
    with pytest.raises(InvalidMetric):
        ConformalTorus(np.zeros((4, 5)))


@given(st.floats(0.3, 3.0))
def test_scalar_curvature_scales_inversely_with_metric(c):
    g = Grid1D.uniform(64)
    x = g.nodes
    psi = np.sin(np.pi * x) * np.exp(0.2 * np.cos(2 * np.pi * x))
    psi[0] = psi[-1] = 0.0
    phi = np.pi * np.exp(0.2 * np.cos(2 * np.pi * x))
    R1 = curvature(WarpedMetric3(g, phi, psi)).R
    R2 = curvature(WarpedMetric3(g, c * phi, c * psi)).R
    assert np.allclose(R2, R1 / c ** 2, rtol=1e-10, atol=1e-10)


@given(st.floats(-0.4, 0.4), st.integers(1, 3))
def test_torus_gauss_bonnet(a, k):
    mm = 32
    xs = np.arange(mm) / mm
    u = a * np.sin(2 * np.pi * k * xs)[:, None] * np.cos(2 * np.pi * xs)[None, :]
    m = ConformalTorus(u)
    assert abs(integrate(m, curvature2d(m).R)) < 1e-10


@given(st.floats(-0.3, 0.3), st.integers(1, 4))
def test_surface_gauss_bonnet(a, k):
    from ricci_lab.initial_data import dented_sphere
    m = dented_sphere(a, k, n=256, dim=2)
    assert integrate(m, curvature2d(m).R) == pytest.approx(8 * math.pi, rel=1e-6)

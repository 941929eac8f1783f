import math

import numpy as np
import pytest

from ricci_lab.errors import ConfigError, SurgeryRefused
from ricci_lab.flow import FlowConfig
from ricci_lab.geom import Grid1D, curvature, from_arclength_profile, round_s3, volume
from ricci_lab.surgery import (BLEND_END, CapProfile, SurgeryConfig, bump, cap_geometry,
                               cap_profile, detect_neck, do_surgery, pinching_violation,
                               standard_cap, surgery_hypothesis, surgery_loop)

H = 0.2
NECK = 10.0


def capsule(n=2048, h=H, neck=NECK):
    """Exact cylinder of radius h closed by round hemispheres."""
    q = 0.5 * math.pi * h
    length = neck + 2 * q

    def psi(s):
        r = np.minimum(s, length - s)
        return np.where(r < q, h * np.sin(np.minimum(r, q) / h), h)

    return from_arclength_profile(Grid1D.uniform(n), length, psi)


@pytest.fixture(scope="module")
def cap():
    return cap_profile(0.01)


def test_exact_cylinder_is_a_neck():
    m = capsule()
    neck = detect_neck(m, 0.05)
    assert neck is not None
    assert neck.h == pytest.approx(H)
    assert neck.delta_achieved < 1e-10
    assert neck.length >= 2 * H / 0.05
    assert neck.waist_s == pytest.approx(m.phi[0] / 2, abs=2 * m.phi[0] / m.grid.n)


def test_round_sphere_has_no_neck():
    assert detect_neck(round_s3(Grid1D.uniform(256)), 0.05) is None


def test_short_neck_is_rejected():
    # the window 2h/delta is longer than the cylinder
    assert detect_neck(capsule(neck=1.0), 0.05) is None


def test_delta_range():
    with pytest.raises(ConfigError):
        detect_neck(capsule(n=256), 0.2)


def test_cap_profile_shape(cap):
    z = np.linspace(-2.0, 3.999, 20001)
    f = cap.f(z)
    assert np.all(f[z <= 0] == 0.0)
    top = z >= 3.9
    assert np.allclose(np.exp(-2 * f[top]), 16 - z[top] ** 2, rtol=1e-12)
    d1, d2 = cap.derivative(z, 1), cap.derivative(z, 2)
    assert np.all(d1 >= 0) and np.all(d2 >= -1e-12)
    assert np.all(np.diff(f) >= -1e-12)


def test_cap_profile_smallness(cap):
    z = np.linspace(3.0 / 10_000, 3.0, 10_000)
    assert np.all(cap.smallness_ratio(z) < 0.01)
    assert np.all(cap.derivative(z, 2) < 0.01)
    assert cap.satisfies_smallness(0.01)


def test_cap_profile_search_failure():
    with pytest.raises(ConfigError):
        cap_profile(1e-3, c_grid=[1.0], p_grid=[10.0])
    with pytest.raises(ConfigError):
        CapProfile(0.0, 1.0, 0.01)


def test_bump():
    assert bump(1.0) == 1.0 and bump(3.5) == 0.0
    assert 0 < bump(2.5) < 1


def test_hypothesis():
    assert surgery_hypothesis(0.1, 1.0)
    h_max = (2 * math.e ** 2 * math.log(2.0)) ** -0.5
    assert surgery_hypothesis(0.999 * h_max, 1.0)
    assert not surgery_hypothesis(1.001 * h_max, 1.0)


def test_surgery_refused_for_fat_neck(cap):
    m = capsule()
    neck = detect_neck(m, 0.05)
    with pytest.raises(SurgeryRefused):
        do_surgery(m, neck, cap, T=1e6)


def test_surgery_on_exact_cylinder(cap):
    m = capsule()
    neck = detect_neck(m, 0.05)
    comps, rec = do_surgery(m, neck, cap, T=1.0, offset=10.0)
    left, right = comps
    # mirror symmetry
    assert np.allclose(left.psi, right.psi[::-1], atol=1e-12)
    # locality: untouched nodes are bit-identical
    refine = rec.refine
    j0 = int(round(rec.cut_s[0] / (m.phi[0] / m.grid.n)))
    assert np.array_equal(left.psi[: j0 * refine + 1: refine][1:], m.psi[1: j0 + 1])
    # volume drop bounded below by a multiple of h^3
    assert rec.volume_drop > 0 and rec.as_dict()["kappa_s"] > 1.0
    for c in comps:
        curvature(c)
        assert pinching_violation(c, 1.0) == 0.0
    # the glued cap matches the standard capped cylinder
    geo = cap_geometry(cap, H, total_length=rec.tips_s[0] - rec.cut_s[0])
    ds = left.phi[0] / left.grid.n
    sig = np.arange(1, left.grid.n - j0 * refine) * ds
    model = geo.psi(sig, lambda z: np.full_like(z, H))
    glued = left.psi[j0 * refine + 1: -1]
    assert np.max(np.abs(glued - model)) < 1e-9 * H


def test_standard_cap_is_valid(cap):
    m = standard_cap(cap, 0.1, 1.0, n=1024)
    c = curvature(m)
    assert m.psi.max() == pytest.approx(0.1)
    assert np.isfinite(c.R).all()


def test_surgery_config_validation():
    with pytest.raises(ConfigError):
        SurgeryConfig(delta=0.5)
    with pytest.raises(ConfigError):
        SurgeryConfig(flow=FlowConfig(mode="normalized2d"))
    with pytest.raises(ConfigError):
        SurgeryConfig(threshold_growth=0.5)


def test_round_sphere_needs_no_surgery():
    tr = surgery_loop(round_s3(Grid1D.uniform(64)), SurgeryConfig(flow=FlowConfig(t_end=1.0)))
    assert tr.surgery_count == 0
    assert len(tr.extinctions) == 1 and tr.outcome == "extinct"
    assert tr.extinctions[0] == pytest.approx(0.25, rel=1e-2)

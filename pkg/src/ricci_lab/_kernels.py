"""Compiled per-node kernels used by the time stepper.

These mirror the array code in ``geom`` (same stencils, same pole rule) but run
as tight loops so that long explicit runs stay cheap.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _at(f, i, parity):
    n = f.shape[0] - 1
    if i < 0:
        return parity * f[-i]
    if i > n:
        return parity * f[2 * n - i]
    return f[i]


@njit(cache=True, nogil=True)
def warped_curvature(phi, psi, h, kmix, ksph, psi_s):
    """Fill K_mix, K_sph and psi_s for a pole-to-pole profile."""
    n = psi.shape[0] - 1
    c1 = 1.0 / (12.0 * h)
    c2 = 1.0 / (12.0 * h * h)
    c3 = 1.0 / (8.0 * h * h * h)
    for i in range(n + 1):
        pm2 = _at(psi, i - 2, -1.0)
        pm1 = _at(psi, i - 1, -1.0)
        pp1 = _at(psi, i + 1, -1.0)
        pp2 = _at(psi, i + 2, -1.0)
        fm2 = _at(phi, i - 2, 1.0)
        fm1 = _at(phi, i - 1, 1.0)
        fp1 = _at(phi, i + 1, 1.0)
        fp2 = _at(phi, i + 2, 1.0)
        px = (pm2 - 8.0 * pm1 + 8.0 * pp1 - pp2) * c1
        pxx = (-pm2 + 16.0 * pm1 - 30.0 * psi[i] + 16.0 * pp1 - pp2) * c2
        fx = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) * c1
        f = phi[i]
        ps = px / f
        psi_s[i] = ps
        if i == 0 or i == n:
            pm3 = _at(psi, i - 3, -1.0)
            pp3 = _at(psi, i + 3, -1.0)
            p3 = (pm3 - 8.0 * pm2 + 13.0 * pm1 - 13.0 * pp1 + 8.0 * pp2 - pp3) * c3
            fxx = (-fm2 + 16.0 * fm1 - 30.0 * f + 16.0 * fp1 - fp2) * c2
            k = -(p3 * f - px * fxx) / (f * f * f * px)
            kmix[i] = k
            ksph[i] = k
        else:
            pss = (pxx - ps * fx) / (f * f)
            kmix[i] = -pss / psi[i]
            ksph[i] = (1.0 - ps * ps) / (psi[i] * psi[i])


@njit(cache=True, nogil=True)
def cumulative_integral(f, h, out):
    """Running integral of an even-parity nodal field, fourth order.

    Uses the endpoint-corrected trapezoid rule on each cell, with slopes from
    the five-point stencil and even ghost values at both ends.
    """
    n = f.shape[0] - 1
    c1 = 1.0 / (12.0 * h)
    out[0] = 0.0
    dprev = 0.0
    for i in range(n + 1):
        d = (_at(f, i - 2, 1.0) - 8.0 * _at(f, i - 1, 1.0)
             + 8.0 * _at(f, i + 1, 1.0) - _at(f, i + 2, 1.0)) * c1
        if i > 0:
            out[i] = out[i - 1] + 0.5 * h * (f[i - 1] + f[i]) - h * h / 12.0 * (d - dprev)
        dprev = d


@njit(cache=True, nogil=True)
def arclength_rhs(dim, length, psi, h, w, normalized, dpsi, R, drift):
    """Flow of psi in the gauge where nodes stay equally spaced in arclength.

    ``length`` is the meridian length L and phi = L at every node.  For
    dim == 3 the material law is the Ricci flow of the warped product; for
    dim == 2 it is the conformal surface flow with r = 8 pi / area when
    ``normalized``.  The material drift v(s) (arclength velocity of a point
    moving with the flow) is written to ``drift``.

    Returns (dL/dt, r, volume, max |op|, min nu, max |tangential speed|).
    """
    n = psi.shape[0] - 1
    phi = np.full(n + 1, length)
    kmix = np.empty(n + 1)
    ksph = np.empty(n + 1)
    ps = np.empty(n + 1)
    warped_curvature(phi, psi, h, kmix, ksph, ps)
    vol = 0.0
    rint = 0.0
    maxop = 0.0
    numin = np.inf
    for i in range(n + 1):
        if dim == 3:
            R[i] = 4.0 * kmix[i] + 2.0 * ksph[i]
            dens = 4.0 * np.pi * psi[i] * psi[i] * length * w[i]
            a = 2.0 * abs(kmix[i])
            b = 2.0 * abs(ksph[i])
            if b > a:
                a = b
            lo = 2.0 * min(kmix[i], ksph[i])
        else:
            R[i] = 2.0 * kmix[i]
            dens = 2.0 * np.pi * psi[i] * length * w[i]
            a = abs(R[i])
            lo = R[i]
        vol += dens
        rint += R[i] * dens
        if a > maxop:
            maxop = a
        if lo < numin:
            numin = lo
    if dim == 3:
        r = rint / vol
        scale = r / 3.0 if normalized else 0.0
    else:
        r = 8.0 * np.pi / vol if normalized else 0.0
        scale = 0.0
    # stretch rate of arclength per unit x
    rate = np.empty(n + 1)
    for i in range(n + 1):
        if dim == 3:
            rate[i] = length * (-2.0 * kmix[i] + scale)
        else:
            rate[i] = length * 0.5 * (r - R[i])
    cumulative_integral(rate, h, drift)
    dlen = drift[n]
    vmax = 0.0
    for i in range(n + 1):
        if i == 0 or i == n:
            dpsi[i] = 0.0
        else:
            if dim == 3:
                own = -(kmix[i] + ksph[i]) * psi[i] + scale * psi[i]
            else:
                own = 0.5 * (r - R[i]) * psi[i]
            adv = i * h * dlen - drift[i]
            dpsi[i] = own + adv * ps[i]
            if abs(adv) > vmax:
                vmax = abs(adv)
    if dim == 2 and not normalized:
        r = rint / vol
    return dlen, r, vol, maxop, numin, vmax


@njit(cache=True, nogil=True)
def torus_rhs(u, h, du):
    """du/dt = exp(-2u) * flat Laplacian(u) on the periodic grid.

    Returns (max |R|, min R, max R, area, min exp(u)).
    """
    m = u.shape[0]
    rmax = 0.0
    lo = np.inf
    hi = -np.inf
    area = 0.0
    emin = np.inf
    inv = 1.0 / (h * h)
    for i in range(m):
        ip = (i + 1) % m
        im = (i - 1) % m
        for j in range(m):
            jp = (j + 1) % m
            jm = (j - 1) % m
            lap = (u[ip, j] + u[im, j] + u[i, jp] + u[i, jm] - 4.0 * u[i, j]) * inv
            e = np.exp(-2.0 * u[i, j])
            du[i, j] = e * lap
            Rij = -2.0 * e * lap
            if abs(Rij) > rmax:
                rmax = abs(Rij)
            if Rij < lo:
                lo = Rij
            if Rij > hi:
                hi = Rij
            area += 1.0 / e
            eu = np.exp(u[i, j])
            if eu < emin:
                emin = eu
    return rmax, lo, hi, area * h * h, emin

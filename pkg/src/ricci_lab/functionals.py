"""Energy and entropy functionals F, lambda and W, and their monotonicity along the flow.

    F(g, f)     = int (R + |grad f|^2) e^{-f} dV,             int e^{-f} dV = 1
    lambda(g)   = lowest eigenvalue of -4 Laplacian + R
    W(g, f, t)  = int [t (R + |grad f|^2) + f - n] (4 pi t)^{-n/2} e^{-f} dV,
                  int (4 pi t)^{-n/2} e^{-f} dV = 1

Test functions are invariant under the symmetry, so on meridian metrics they
are nodal arrays on the profile grid (even across the poles) and on the torus
M x M arrays.  Constraints are enforced by an additive shift of f.

``coupled_monotonicity`` evolves u = (4 pi tau)^{-n/2} e^{-f} backward along a
stored run by the conjugate heat equation du/dt = -Laplacian u + R u (linear,
hence stable backward in time) and compares the discrete dW/dt with
int 2 tau |Ric + Hess f - g / 2 tau|^2 (4 pi tau)^{-n/2} e^{-f} dV.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .diagnostics import InequalityReport, _Worst, _states
from .errors import ConstraintError, Inapplicable, NumericalFailure
from .flow import material_drift
from .geom import (ConformalTorus, RotSphere, WarpedMetric3, _d1, _d2, _pad, arclength,
                   curvature_any, integrate, volume)

CONSTRAINT_TOL = 1e-8


# ---------------------------------------------------------------------------
# derivatives of invariant functions


def _dim(m) -> int:
    return 3 if isinstance(m, WarpedMetric3) else 2


def _even_derivs(m, f):
    """(f_s, f_ss) along the meridian for an even nodal function f."""
    h = m.grid.dx
    fp = _pad(np.asarray(f, dtype=float), 1.0)
    gp = _pad(np.asarray(m.phi, dtype=float), 1.0)
    phi = m.phi
    f_x, f_xx = _d1(fp, h), _d2(fp, h)
    phi_x = _d1(gp, h)
    f_s = f_x / phi
    f_ss = (f_xx - f_s * phi_x) / phi ** 2
    return f_s, f_ss


def _psi_s(m):
    h = m.grid.dx
    return _d1(_pad(m.psi, -1.0), h) / m.phi


def _torus_grad(m, f):
    h = m.h
    fx = (np.roll(f, -1, 0) - np.roll(f, 1, 0)) / (2 * h)
    fy = (np.roll(f, -1, 1) - np.roll(f, 1, 1)) / (2 * h)
    return fx, fy


def grad_norm2(m, f) -> np.ndarray:
    """|grad f|^2 at every node."""
    f = np.asarray(f, dtype=float)
    if isinstance(m, ConformalTorus):
        fx, fy = _torus_grad(m, f)
        return (fx ** 2 + fy ** 2) * np.exp(-2.0 * m.u)
    f_s, _ = _even_derivs(m, f)
    return f_s ** 2


def laplacian(m, f) -> np.ndarray:
    """Laplace-Beltrami operator of an invariant function."""
    f = np.asarray(f, dtype=float)
    if isinstance(m, ConformalTorus):
        h = m.h
        lap = (np.roll(f, 1, 0) + np.roll(f, -1, 0) + np.roll(f, 1, 1) + np.roll(f, -1, 1)
               - 4.0 * f) / (h * h)
        return np.exp(-2.0 * m.u) * lap
    n = _dim(m)
    f_s, f_ss = _even_derivs(m, f)
    out = np.empty_like(f)
    ps = _psi_s(m)
    out[1:-1] = f_ss[1:-1] + (n - 1) * ps[1:-1] * f_s[1:-1] / m.psi[1:-1]
    out[[0, -1]] = n * f_ss[[0, -1]]
    return out


def hessian_frame(m, f):
    """Orthonormal-frame Hessian of a radial function: (radial, orbit) components."""
    f_s, f_ss = _even_derivs(m, f)
    ps = _psi_s(m)
    orbit = np.empty_like(f_s)
    orbit[1:-1] = ps[1:-1] * f_s[1:-1] / m.psi[1:-1]
    orbit[[0, -1]] = f_ss[[0, -1]]
    return f_ss, orbit


# ---------------------------------------------------------------------------
# constraints


def _mass(m, f, tau=None):
    w = np.exp(-np.asarray(f, dtype=float))
    if tau is not None:
        w = w * (4.0 * math.pi * tau) ** (-_dim(m) / 2.0)
    return integrate(m, w)


def normalize_f(m, f, tau: Optional[float] = None) -> np.ndarray:
    """Shift f so that int e^{-f} dV = 1 (or the W constraint when tau is given)."""
    f = np.asarray(f, dtype=float)
    return f + math.log(_mass(m, f, tau))


def _check_constraint(m, f, tau=None):
    err = abs(_mass(m, f, tau) - 1.0)
    if err > CONSTRAINT_TOL:
        raise ConstraintError(f"constraint violated by {err:.3g}; use normalize_f first")


# ---------------------------------------------------------------------------
# functionals


def F(m, f, enforce: bool = True) -> float:
    """int (R + |grad f|^2) e^{-f} dV.

    With ``enforce`` the constraint int e^{-f} dV = 1 must hold to 1e-8.
    """
    if enforce:
        _check_constraint(m, f)
    R = curvature_any(m, check=False).R
    return integrate(m, (R + grad_norm2(m, f)) * np.exp(-np.asarray(f, dtype=float)))


def W(m, f, tau: float, enforce: bool = True) -> float:
    """int [tau (R + |grad f|^2) + f - n] (4 pi tau)^{-n/2} e^{-f} dV."""
    if not tau > 0:
        raise ConstraintError("tau must be positive")
    if enforce:
        _check_constraint(m, f, tau)
    n = _dim(m)
    f = np.asarray(f, dtype=float)
    R = curvature_any(m, check=False).R
    dens = (4.0 * math.pi * tau) ** (-n / 2.0) * np.exp(-f)
    return integrate(m, (tau * (R + grad_norm2(m, f)) + f - n) * dens)


def first_variation_F(m: WarpedMetric3, f, dphi, dpsi, dfun) -> float:
    """Linear change of F (unconstrained) under phi += dphi, psi += dpsi, f += dfun.

    int [-v_ij (R_ij + f_ij) + (v/2 - h)(2 Lap f - |grad f|^2 + R)] e^{-f} dV with
    v = delta g written in the orthonormal frame: v_ss = 2 dphi/phi and 2 dpsi/psi
    on each orbit direction.
    """
    if not isinstance(m, WarpedMetric3):
        raise TypeError("first_variation_F is implemented for 3-D meridian metrics")
    c = curvature_any(m, check=False)
    f = np.asarray(f, dtype=float)
    v_rad = 2.0 * np.asarray(dphi) / m.phi
    v_orb = np.empty_like(v_rad)
    v_orb[1:-1] = 2.0 * np.asarray(dpsi)[1:-1] / m.psi[1:-1]
    # at a pole dpsi/psi tends to the radial ratio dphi/phi for smooth variations
    v_orb[[0, -1]] = v_rad[[0, -1]]
    hr, ho = hessian_frame(m, f)
    ric_r, ric_o = c.ricci_eigs[:, 0], c.ricci_eigs[:, 1]
    contract = v_rad * (ric_r + hr) + 2.0 * v_orb * (ric_o + ho)
    trace = v_rad + 2.0 * v_orb
    body = -contract + (0.5 * trace - dfun) * (2.0 * laplacian(m, f) - grad_norm2(m, f) + c.R)
    return integrate(m, body * np.exp(-f))


def first_variation_W_f(m, f, tau: float, dfun) -> float:
    """Linear change of W (unconstrained) when only f moves by dfun.

    int -h [tau (R + 2 Lap f - |grad f|^2) + f - n - 1] (4 pi tau)^{-n/2} e^{-f} dV.
    """
    n = _dim(m)
    f = np.asarray(f, dtype=float)
    R = curvature_any(m, check=False).R
    bracket = tau * (R + 2.0 * laplacian(m, f) - grad_norm2(m, f)) + f - n - 1.0
    dens = (4.0 * math.pi * tau) ** (-n / 2.0) * np.exp(-f)
    return integrate(m, -np.asarray(dfun) * bracket * dens)


# ---------------------------------------------------------------------------
# discrete -4 Laplacian + R


def energy_system(m):
    """(S, M) with u^T S u ~ int |grad u|^2 dV and M a positive lumped mass.

    Meridian metrics use one flux per cell with the orbit area at the cell
    midpoint; the torus uses the five-point graph Laplacian (the Dirichlet
    energy is conformally invariant in two dimensions).
    """
    if isinstance(m, ConformalTorus):
        k = m.m
        e = np.ones(k)
        ring = sp.diags([-e[:-1], 2 * e, -e[:-1]], [-1, 0, 1], format="lil")
        ring[0, -1] = ring[-1, 0] = -1.0
        ring = ring.tocsr()
        eye = sp.identity(k, format="csr")
        S = sp.kron(ring, eye) + sp.kron(eye, ring)
        M = sp.diags(np.exp(2.0 * m.u).ravel() * m.h ** 2)
        return S.tocsc(), M.tocsc()
    n = _dim(m)
    omega = 4.0 * math.pi if n == 3 else 2.0 * math.pi
    s = arclength(m)
    ds = np.diff(s)
    area = omega * (0.5 * (m.psi[1:] + m.psi[:-1])) ** (n - 1)
    node_area = omega * m.psi ** (n - 1)
    cond = area / ds
    N = len(s)
    main = np.zeros(N)
    main[:-1] += cond
    main[1:] += cond
    S = sp.diags([-cond, main, -cond], [-1, 0, 1], format="csc")
    mass = np.zeros(N)
    half = 0.25 * ds * (area + node_area[:-1])
    mass[:-1] += half
    mass[1:] += 0.25 * ds * (area + node_area[1:])
    return S, sp.diags(mass, format="csc")


def _operator(m):
    S, M = energy_system(m)
    R = curvature_any(m, check=False).R.ravel()
    A = 4.0 * S + M @ sp.diags(R)
    return A.tocsc(), M, R


@dataclass(frozen=True)
class Eigenpair:
    value: float
    vector: np.ndarray
    iterations: int
    residual: float


def lowest_eigenpair(m, tol: float = 1e-10, max_iter: int = 20000) -> Eigenpair:
    """Inverse power iteration for -4 Laplacian + R, shifted below min R.

    Convergence is declared when ||A u - lambda M u|| <= tol (||A u|| + 1) in
    the M^{-1} norm.
    """
    A, M, R = _operator(m)
    sigma = float(R.min()) - 1.0
    lu = splu((A - sigma * M).tocsc())
    mdiag = M.diagonal()
    u = np.ones(A.shape[0])
    u /= math.sqrt(u @ (mdiag * u))
    lam = float(u @ (A @ u))
    res = math.inf
    for it in range(1, max_iter + 1):
        u = lu.solve(mdiag * u)
        u /= math.sqrt(u @ (mdiag * u))
        if u.sum() < 0:
            u = -u
        Au = A @ u
        lam = float(u @ Au)
        r = Au - lam * mdiag * u
        res = math.sqrt(float(r @ (r / mdiag))) / (math.sqrt(float(Au @ (Au / mdiag))) + 1.0)
        if res <= tol:
            shape = m.u.shape if isinstance(m, ConformalTorus) else (A.shape[0],)
            return Eigenpair(lam, u.reshape(shape), it, res)
        if not math.isfinite(lam):
            break
    raise NumericalFailure(f"inverse iteration stagnated (residual {res:.3g} after {max_iter})")


def lambda_(m, tol: float = 1e-10) -> float:
    """Lowest eigenvalue of -4 Laplacian + R on invariant functions."""
    return lowest_eigenpair(m, tol).value


def lambda_dense(m) -> float:
    """Dense generalized eigensolver on the same discretization (small grids)."""
    from scipy.linalg import eigh

    A, M, _ = _operator(m)
    if A.shape[0] > 4096:
        raise ValueError("dense eigensolver limited to 4096 unknowns")
    return float(eigh(A.toarray(), M.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0])


# ---------------------------------------------------------------------------
# coupled monotonicity


def _drift_matrix(m, w):
    """Sparse w d/ds (second-order centred, zero rows where w vanishes)."""
    s = arclength(m)
    N = len(s)
    lo = np.zeros(N - 1)
    hi = np.zeros(N - 1)
    span = s[2:] - s[:-2]
    hi[1:] = w[1:-1] / span
    lo[:-1] = -w[1:-1] / span
    return sp.diags([lo, hi], [-1, 1], format="csc")


def _heat_generator(m, w):
    """L with du/ds_back = L u: Laplacian - R + w d/ds (s_back = -t)."""
    S, M, = energy_system(m)
    R = curvature_any(m, check=False).R.ravel()
    Minv = sp.diags(1.0 / M.diagonal())
    L = -(Minv @ S) - sp.diags(R)
    if w is not None:
        L = L + _drift_matrix(m, w)
    return L.tocsc()


def _gauge_drift(states):
    """w = v - x L'(t): material velocity relative to the grid for each state."""
    ts = np.array([t for t, _ in states])
    out = []
    if isinstance(states[0][1], ConformalTorus):
        return [None] * len(states)
    L = np.array([float(arclength(m)[-1]) for _, m in states])
    L_t = np.gradient(L, ts, edge_order=2) if len(ts) >= 3 else np.gradient(L, ts)
    for k, (_, m) in enumerate(states):
        x = arclength(m) / L[k]
        out.append(material_drift(m) - x * L_t[k])
    return out


def conjugate_heat_backward(states, u_T) -> list:
    """Solve du/dt = -Laplacian u + R u backward from the last state.

    Crank-Nicolson between consecutive stored states; returns u at every state.
    """
    states = _states(states)
    drift = _gauge_drift(states)
    gens = [_heat_generator(m, w) for (_, m), w in zip(states, drift)]
    shape = np.shape(u_T)
    u = np.asarray(u_T, dtype=float).ravel()
    out = [None] * len(states)
    out[-1] = u.reshape(shape)
    eye = sp.identity(len(u), format="csc")
    for k in range(len(states) - 2, -1, -1):
        dt = states[k + 1][0] - states[k][0]
        rhs = u + 0.5 * dt * (gens[k + 1] @ u)
        u = splu((eye - 0.5 * dt * gens[k]).tocsc()).solve(rhs)
        if not np.all(np.isfinite(u)) or float(u.min()) <= 0:
            raise NumericalFailure(f"backward conjugate heat flow lost positivity at t={states[k][0]:.6g}")
        out[k] = u.reshape(shape)
    return out


def w_rate(m, f, tau: float) -> float:
    """int 2 tau |Ric + Hess f - g / 2 tau|^2 (4 pi tau)^{-n/2} e^{-f} dV."""
    n = _dim(m)
    f = np.asarray(f, dtype=float)
    dens = (4.0 * math.pi * tau) ** (-n / 2.0) * np.exp(-f)
    return integrate(m, 2.0 * tau * _soliton_defect2(m, f, 0.5 / tau) * dens)


def f_rate(m, f) -> float:
    """int 2 |Ric + Hess f|^2 e^{-f} dV."""
    f = np.asarray(f, dtype=float)
    return integrate(m, 2.0 * _soliton_defect2(m, f, 0.0) * np.exp(-f))


def _soliton_defect2(m, f, c):
    """|Ric + Hess f - c g|^2 at every node."""
    if isinstance(m, ConformalTorus):
        K = 0.5 * curvature_any(m, check=False).R
        h = m.h
        fx, fy = _torus_grad(m, f)
        ux, uy = _torus_grad(m, m.u)
        fxx = (np.roll(f, -1, 0) - 2 * f + np.roll(f, 1, 0)) / (h * h)
        fyy = (np.roll(f, -1, 1) - 2 * f + np.roll(f, 1, 1)) / (h * h)
        fxy = (np.roll(np.roll(f, -1, 0), -1, 1) - np.roll(np.roll(f, -1, 0), 1, 1)
               - np.roll(np.roll(f, 1, 0), -1, 1) + np.roll(np.roll(f, 1, 0), 1, 1)) / (4 * h * h)
        dot = ux * fx + uy * fy
        e = np.exp(-2.0 * m.u)
        hxx = (fxx - 2 * ux * fx + dot) * e + K - c
        hyy = (fyy - 2 * uy * fy + dot) * e + K - c
        hxy = (fxy - ux * fy - uy * fx) * e
        return hxx ** 2 + hyy ** 2 + 2 * hxy ** 2
    cf = curvature_any(m, check=False)
    hr, ho = hessian_frame(m, f)
    if isinstance(m, WarpedMetric3):
        rr = cf.ricci_eigs[:, 0] + hr - c
        oo = cf.ricci_eigs[:, 1] + ho - c
        return rr ** 2 + 2.0 * oo ** 2
    K = cf.K_mix
    return (K + hr - c) ** 2 + (K + ho - c) ** 2


@dataclass(frozen=True)
class CoupledResult:
    t: np.ndarray
    tau: np.ndarray
    value: np.ndarray
    rate: np.ndarray
    rhs: np.ndarray
    constraint_drift: float
    reports: tuple


def coupled_monotonicity(states, tau0: float = 1.0, f_T=None, kind: str = "W",
                         rhs_floor: float = 1e-6, rhs_rel: float = 0.05,
                         abs_tol: float = 1e-8, rel_tol: float = 1e-2) -> CoupledResult:
    """Evolve f backward along a stored run and test the monotonicity identity.

    ``states`` are dense (t, metric) pairs on one grid; tau(t) = tau0 + T - t.
    ``kind`` is "W" (with tau) or "F".  f_T defaults to the constrained constant.
    Reports: ``<kind>_monotone`` (discrete derivative >= 0 up to rel_tol of the
    predicted rate) and ``<kind>_rate`` (|dW/dt - rhs| <= rhs_rel * rhs wherever
    rhs > rhs_floor).  The constraint is restored by a shift of f at each state
    and the largest correction is returned as ``constraint_drift``.
    """
    if kind not in ("W", "F"):
        raise ValueError("kind must be 'W' or 'F'")
    states = _states(states)
    if len(states) < 3:
        raise Inapplicable("coupled monotonicity needs at least three states")
    ts = np.array([t for t, _ in states])
    T = ts[-1]
    taus = tau0 + T - ts
    mT = states[-1][1]
    n = _dim(mT)
    use_tau = kind == "W"
    shape = mT.u.shape if isinstance(mT, ConformalTorus) else mT.psi.shape
    f = np.zeros(shape) if f_T is None else np.asarray(f_T, dtype=float)
    f = normalize_f(mT, f, tau0 if use_tau else None)
    scale_T = (4.0 * math.pi * tau0) ** (-n / 2.0) if use_tau else 1.0
    us = conjugate_heat_backward(states, scale_T * np.exp(-f))
    vals, rhs = [], []
    drift = 0.0
    for (t, m), u, tau in zip(states, us, taus):
        scale = (4.0 * math.pi * tau) ** (-n / 2.0) if use_tau else 1.0
        fk = -np.log(u / scale)
        shift = math.log(_mass(m, fk, tau if use_tau else None))
        drift = max(drift, abs(shift))
        fk = fk + shift
        if use_tau:
            vals.append(W(m, fk, tau, enforce=False))
            rhs.append(w_rate(m, fk, tau))
        else:
            vals.append(F(m, fk, enforce=False))
            rhs.append(f_rate(m, fk))
    vals = np.array(vals)
    rhs = np.array(rhs)
    rate = np.gradient(vals, ts, edge_order=2)
    mono = _Worst(abs_tol, rel_tol)
    mono.add(ts, -rate, rhs, np.arange(len(ts)))
    match = _Worst(abs_tol, rhs_rel)
    big = rhs > rhs_floor
    match.add(ts[big], np.abs(rate[big] - rhs[big]), rhs[big], np.flatnonzero(big))
    reports = (mono.report(f"{kind}_monotone"), match.report(f"{kind}_rate", compared=int(big.sum())))
    return CoupledResult(ts, taus, vals, rate, rhs, drift, reports)


def lambda_series(states, tol: float = 1e-10):
    """(t, lambda(g(t))) over a sequence of states."""
    states = _states(states)
    return (np.array([t for t, _ in states]),
            np.array([lambda_(m, tol) for _, m in states]))


def lambda_monotone_report(t, lam, abs_tol: float = 1e-3) -> InequalityReport:
    """lambda(g(t)) nondecreasing up to ``abs_tol`` between consecutive samples."""
    acc = _Worst(abs_tol, 0.0)
    if len(lam) > 1:
        acc.add(np.asarray(t)[1:], -np.diff(lam), 0.0, np.arange(1, len(lam)))
    return acc.report("lambda_monotone")


__all__ = ["F", "W", "lambda_", "lambda_dense", "lowest_eigenpair", "normalize_f",
           "grad_norm2", "laplacian", "first_variation_F", "first_variation_W_f",
           "energy_system", "conjugate_heat_backward", "coupled_monotonicity", "CoupledResult",
           "w_rate", "f_rate", "lambda_series", "lambda_monotone_report"]

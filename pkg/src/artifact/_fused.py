"""Compiled closed-loop vector field for linear prediction models.

Only the regulator and chain arithmetic is compiled; plant maps stay
ordinary Python callables and are evaluated by the caller. The result is
checked against the reference assembly in ``ClosedLoop.evaluate``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# layout of the integer parameter vector
_NW, _N0, _NCHI, _NE, _NU, _D, _P, _NT = range(8)
# layout of the real parameter vector
_LAM, _M1RHO, _M2RHO2, _SAT, _PDB, _ELL = range(6)


@njit(cache=True)
def _cholesky(A, out):
    n = A.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s -= out[i, k] * out[j, k]
            if i == j:
                if not s > 0.0:
                    return False
                out[i, i] = math.sqrt(s)
            else:
                out[i, j] = s / out[j, j]
    return True


@njit(cache=True)
def _cho_solve(Lc, b, out):
    n = b.shape[0]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= Lc[i, k] * y[k]
        y[i] = s / Lc[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= Lc[k, i] * out[k]
        out[i] = s / Lc[i, i]


@njit(cache=True)
def closed_loop_field(y, wdot, f0, b, q, Om, ffw, ip, fp, gains, Gamma, K, Lmat, heads, offsets, lengths):
    """Derivative of the packed closed-loop state; ``ok`` is False on a singular Gram matrix.

    ``ffw`` is the already evaluated feedforward ``Kw nu`` (length ``ne``).
    """
    nw, n0, nchi, ne, nu = ip[_NW], ip[_N0], ip[_NCHI], ip[_NE], ip[_NU]
    d, p, nt = ip[_D], ip[_P], ip[_NT]
    lam, m1rho, m2rho2, sat, pdb, ell = fp[_LAM], fp[_M1RHO], fp[_M2RHO2], fp[_SAT], fp[_PDB], fp[_ELL]
    nx = n0 + nchi + ne
    i_chi = nw + n0
    i_zeta = i_chi + nchi
    i_eta = nw + nx
    i_s1 = i_eta + d * ne
    i_s2 = i_s1 + nt * nt
    i_xi1 = i_s2 + nt
    i_xi2 = i_xi1 + ne
    out = np.empty(y.shape[0])

    M = np.empty((nt, nt))
    for i in range(nt):
        for j in range(nt):
            M[i, j] = y[i_s1 + i * nt + j] + Gamma[i, j]
    Lc = np.zeros((nt, nt))
    if not _cholesky(M, Lc):
        return out, np.zeros(nu), False
    theta = np.empty(nt)
    _cho_solve(Lc, y[i_s2:i_xi1], theta)

    finite_sat = sat < np.inf
    sig = np.empty((ne, p))
    slope = np.empty((ne, p))
    for j in range(ne):
        for i in range(d):
            r = y[i_eta + i * ne + j]
            if finite_sat:
                sig[j, i] = sat * math.tanh(r / sat)
                z = r / sat
                slope[j, i] = 1.0 / math.cosh(z) ** 2 if abs(z) < 300.0 else 0.0
            else:
                sig[j, i] = r
                slope[j, i] = 1.0
    psi = np.zeros(ne)
    for j in range(ne):
        for k in range(p):
            psi[j] += theta[j * p + k] * sig[j, k]

    e = np.empty(ne)
    for j in range(ne):
        e[j] = y[i_chi + heads[j]]

    # internal model
    for i in range(d - 1):
        for j in range(ne):
            out[i_eta + i * ne + j] = y[i_eta + (i + 1) * ne + j] + gains[i] * e[j]
    for j in range(ne):
        out[i_eta + (d - 1) * ne + j] = psi[j] + gains[d - 1] * e[j]

    # least squares flow and theta-dot
    for a in range(nt * nt):
        out[i_s1 + a] = -lam * y[i_s1 + a]
    for a in range(nt):
        out[i_s2 + a] = -lam * y[i_s2 + a]
    r = np.zeros(nt)
    for j in range(ne):
        xi2 = y[i_xi2 + j]
        resid = xi2 - psi[j]
        for k in range(p):
            a = j * p + k
            out[i_s2 + a] += lam * sig[j, k] * xi2
            r[a] = sig[j, k] * resid
            for l in range(p):
                out[i_s1 + a * nt + j * p + l] += lam * sig[j, k] * sig[j, l]
    for a in range(nt):
        s = -y[i_s2 + a]
        for m in range(nt):
            s += y[i_s1 + a * nt + m] * theta[m]
        r[a] += s
    thd = np.zeros(nt)
    if lam != 0.0:
        _cho_solve(Lc, r, thd)
        for a in range(nt):
            thd[a] *= lam

    # derivative observer
    for j in range(ne):
        raw = 0.0
        for i in range(d):
            phi = y[i_eta + (i + 1) * ne + j] if i < d - 1 else psi[j]
            raw += theta[j * p + i] * slope[j, i] * phi
        for k in range(p):
            raw += sig[j, k] * thd[j * p + k]
        pd = pdb * math.tanh(raw / pdb) if pdb < np.inf else raw
        innov = y[i_xi1 + j] - y[i_eta + (d - 1) * ne + j]
        out[i_xi1 + j] = y[i_xi2 + j] - m1rho * innov
        out[i_xi2 + j] = pd - m2rho2 * innov

    # stabilizer
    v = np.empty(ne)
    for j in range(ne):
        off = offsets[j]
        kchi = 0.0
        for k in range(lengths[j]):
            kchi += K[j, off + k] * y[i_chi + off + k]
        v[j] = ell * kchi - ell * y[i_zeta + j] + ell * K[j, heads[j]] * y[i_eta + j] + ffw[j]
    u = np.zeros(nu)
    for i in range(nu):
        for j in range(ne):
            u[i] += Lmat[i, j] * v[j]

    # plant
    for k in range(nw):
        out[k] = wdot[k]
    for k in range(n0):
        s = f0[k]
        for i in range(nu):
            s += b[k, i] * u[i]
        out[nw + k] = s
    for j in range(ne):
        off = offsets[j]
        n = lengths[j]
        for k in range(n - 1):
            out[i_chi + off + k] = y[i_chi + off + k + 1]
        out[i_chi + off + n - 1] = y[i_zeta + j]
        s = q[j]
        for i in range(nu):
            s += Om[j, i] * u[i]
        out[i_zeta + j] = s
    return out, u, True

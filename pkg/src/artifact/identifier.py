"""Least-squares identifier and derivative observer.

The identifier state is ``(sigma1, sigma2, xi1, xi2)``:

* ``xi`` is a high-gain observer of ``eta_d`` and its derivative,
* ``(sigma1, sigma2)`` integrate the exponentially forgotten normal equations
  of the regularised least-squares problem, and
* ``theta = (sigma1 + Gamma)^-1 sigma2`` is the current best parameter.

The two ``*_oracle`` functions evaluate the same quantities by direct
quadrature over a sampled history; they share no code with the flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorruptedState, NotPositiveDefinite
from .internal_model import smooth_saturation
from .numerics import solve_spd


@dataclass(frozen=True)
class LsIdentifierConfig:
    ntheta: int
    lam: float
    Gamma: np.ndarray = None
    m1: float = 1.0
    m2: float = 1.0
    rho: float = 1.0
    psidot_bound: float = np.inf

    def __post_init__(self):
        G = 1e-4 * np.eye(self.ntheta) if self.Gamma is None else np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        if G.shape != (self.ntheta, self.ntheta):
            raise ValueError(f"Gamma must be {self.ntheta}x{self.ntheta}")
        if np.max(np.abs(G - G.T)) > 1e-12 * max(np.max(np.abs(G)), 1.0):
            raise ValueError("Gamma must be symmetric")
        try:
            np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            raise ValueError("Gamma must be positive definite") from None
        object.__setattr__(self, "Gamma", G)
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not (self.m1 > 0 and self.m2 > 0 and self.rho > 0):
            raise ValueError("m1, m2 and rho must be positive")
        if not self.psidot_bound > 0:
            raise ValueError("psidot_bound must be positive")


@dataclass
class IdentifierState:
    sigma1: np.ndarray
    sigma2: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray

    @classmethod
    def zeros(cls, ntheta: int, ne: int) -> "IdentifierState":
        return cls(np.zeros((ntheta, ntheta)), np.zeros(ntheta), np.zeros(ne), np.zeros(ne))


def _as_regressor(sigma_val) -> np.ndarray:
    S = np.asarray(sigma_val, dtype=float)
    return S.reshape(-1, 1) if S.ndim == 1 else S


def ls_flow(cfg: LsIdentifierConfig, sigma1, sigma2, sigma_val, xi2):
    """Right-hand side of the forgetting least-squares flow.

    ``sigma_val`` is either the regressor vector (single channel) or the
    ``ntheta x ne`` regressor matrix ``S(eta)``.
    """
    S = _as_regressor(sigma_val)
    xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))
    lam = cfg.lam
    d1 = lam * (S @ S.T - np.asarray(sigma1, dtype=float))
    d2 = lam * (S @ xi2 - np.asarray(sigma2, dtype=float))
    return d1, d2


def ls_output(cfg: LsIdentifierConfig, sigma1, sigma2) -> np.ndarray:
    try:
        return solve_spd(np.asarray(sigma1, dtype=float) + cfg.Gamma, sigma2)
    except NotPositiveDefinite as exc:
        raise CorruptedState(f"sigma1 + Gamma is not positive definite ({exc})") from None


def theta_dot(cfg: LsIdentifierConfig, sigma1, sigma2, sigma_val, xi2, theta) -> np.ndarray:
    """Derivative of ``theta = (sigma1 + Gamma)^-1 sigma2`` along the LS flow."""
    S = _as_regressor(sigma_val)
    xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))
    theta = np.asarray(theta, dtype=float)
    rhs = S @ xi2 - S @ (S.T @ theta) - np.asarray(sigma2, dtype=float) + np.asarray(sigma1, dtype=float) @ theta
    if cfg.lam == 0:
        return np.zeros_like(theta)
    try:
        return cfg.lam * solve_spd(np.asarray(sigma1, dtype=float) + cfg.Gamma, rhs)
    except NotPositiveDefinite as exc:
        raise CorruptedState(str(exc)) from None


def observer_rhs(cfg: LsIdentifierConfig, xi1, xi2, eta_d, psidot_val):
    innov = np.asarray(xi1, dtype=float) - np.asarray(eta_d, dtype=float)
    d1 = np.asarray(xi2, dtype=float) - cfg.m1 * cfg.rho * innov
    d2 = np.asarray(psidot_val, dtype=float) - cfg.m2 * cfg.rho ** 2 * innov
    return d1, d2


def internal_drift(eta, psi_val, ne: int) -> np.ndarray:
    """``Phi(eta, theta) = col(eta_2, ..., eta_d, psi)``."""
    eta = np.asarray(eta, dtype=float)
    return np.concatenate([eta[ne:], np.asarray(psi_val, dtype=float)])


def psidot_saturated(model, cfg: LsIdentifierConfig, xi2, eta, sigma1, sigma2, theta,
                     thetadot=None) -> np.ndarray:
    """Predicted time derivative of ``psi``, saturated at ``cfg.psidot_bound``.

    ``thetadot`` may be supplied when the caller already has it.
    """
    eta = np.asarray(eta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    S = model.regressor_matrix(eta)
    if thetadot is None:
        thetadot = theta_dot(cfg, sigma1, sigma2, S, xi2, theta)
    phi = internal_drift(eta, S.T @ theta, model.ne)
    raw = model.jacobian_eta(eta, theta) @ phi + S.T @ thetadot
    return smooth_saturation(raw, cfg.psidot_bound)


def _history_regressors(model, eta_hist):
    eta_hist = np.atleast_2d(np.asarray(eta_hist, dtype=float))
    return np.stack([model.regressor_matrix(row) for row in eta_hist])


def _forgetting_weights(n, lam, dt):
    t = (n - 1) * dt
    s = dt * np.arange(n)
    return lam * np.exp(-lam * (t - s))


def cost_functional_oracle(etad_dot_hist, eta_hist, theta, lam, Gamma, dt, model):
    """Regularised forgetting least-squares cost by trapezoid quadrature.

    ``etad_dot_hist`` (N x ne) and ``eta_hist`` (N x d*ne) are uniform samples
    on ``[0, t]`` with ``t = (N-1) dt``. ``theta`` may be one parameter
    vector or a ``K x ntheta`` batch, in which case ``K`` costs are returned.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    thetas = np.atleast_2d(theta)
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    reg = np.einsum("ki,ij,kj->k", thetas, Gamma, thetas)
    ydot = np.asarray(etad_dot_hist, dtype=float)
    ydot = ydot.reshape(ydot.shape[0], -1) if ydot.size else ydot.reshape(0, 1)
    n = ydot.shape[0]
    if n < 2:
        out = reg
    else:
        S = _history_regressors(model, eta_hist)
        pred = np.einsum("nij,ki->knj", S, thetas)
        err2 = np.sum((ydot[None, :, :] - pred) ** 2, axis=2)
        w = _forgetting_weights(n, lam, dt)
        out = np.trapezoid(w[None, :] * err2, dx=dt, axis=1) + reg
    return float(out[0]) if single else out


def ideal_sigma_star_oracle(etad_dot_hist, eta_hist, lam, dt, model):
    """``(sigma1*, sigma2*)`` at the last sample time, by trapezoid quadrature."""
    ydot = np.asarray(etad_dot_hist, dtype=float)
    n = ydot.shape[0]
    ydot = ydot.reshape(n, -1)
    nt = model.ntheta
    if n < 2:
        return np.zeros((nt, nt)), np.zeros(nt)
    S = _history_regressors(model, eta_hist)
    w = _forgetting_weights(n, lam, dt)
    outer = np.einsum("nij,nkj->nik", S, S)
    proj = np.einsum("nij,nj->ni", S, ydot)
    s1 = np.trapezoid(w[:, None, None] * outer, dx=dt, axis=0)
    s2 = np.trapezoid(w[:, None] * proj, dx=dt, axis=0)
    return 0.5 * (s1 + s1.T), s2

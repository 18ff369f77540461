"""High-gain stabilizer and the assembled regulator.

The stabilizer is the static law

    u = L (ell K(kappa) chi - ell zeta + ell K(kappa) C^T eta_1 + Kw nu(w, x*))

and :class:`Regulator` stacks it with the internal model, the derivative
observer and the least-squares identifier into one vector field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ShapeMismatch
from .identifier import (
    LsIdentifierConfig,
    internal_drift,
    ls_output,
    theta_dot,
)
from .internal_model import InternalModelConfig, smooth_saturation
from .numerics import Polynomial, is_hurwitz
from .plant import ChainStructure, chain_matrices


def gain_row(n: int, c, kappa: float) -> np.ndarray:
    """``-(c_1 kappa**n, c_2 kappa**(n-1), ..., c_n kappa)``."""
    c = np.asarray(c, dtype=float)
    if c.size != n:
        raise ShapeMismatch(f"need {n} coefficients, got {c.size}")
    powers = kappa ** np.arange(n, 0, -1, dtype=float)
    return -c * powers


def default_c(n: int) -> tuple:
    """Coefficients ``c_1..c_n`` of ``(s + 1)**n``."""
    from math import comb

    return tuple(float(comb(n, k)) for k in range(n))


@dataclass(frozen=True)
class StabilizerConfig:
    kappa: float
    ell: float
    c_coeffs: tuple
    Lmat: np.ndarray
    Kw: Optional[np.ndarray] = None
    nu: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "c_coeffs", tuple(tuple(float(v) for v in c) for c in self.c_coeffs))
        L = np.atleast_2d(np.asarray(self.Lmat, dtype=float))
        object.__setattr__(self, "Lmat", L)
        if not (self.kappa > 0 and self.ell > 0):
            raise ValueError("kappa and ell must be positive")
        for c in self.c_coeffs:
            if not is_hurwitz(Polynomial(c)):
                raise ValueError(f"chain polynomial with coefficients {c} is not Hurwitz")
        if np.linalg.matrix_rank(L) < L.shape[1]:
            raise ValueError("L must have full column rank")
        if self.Kw is not None:
            object.__setattr__(self, "Kw", np.atleast_2d(np.asarray(self.Kw, dtype=float)))

    def K(self) -> np.ndarray:
        """Block-diagonal ``K(kappa)`` (``ne x nchi``)."""
        lengths = [len(c) for c in self.c_coeffs]
        K = np.zeros((len(lengths), sum(lengths)))
        off = 0
        for i, c in enumerate(self.c_coeffs):
            K[i, off:off + len(c)] = gain_row(len(c), c, self.kappa)
            off += len(c)
        return K


def control_law(cfg: StabilizerConfig, chi, zeta, eta1, w=None, x_star=None, C=None) -> np.ndarray:
    chi = np.asarray(chi, dtype=float)
    K = cfg.K()
    if C is None:
        C = chain_matrices(ChainStructure(0, len(cfg.c_coeffs), cfg.Lmat.shape[0],
                                          [len(c) for c in cfg.c_coeffs]))[0]
    ell = cfg.ell
    v = ell * (K @ chi) - ell * np.asarray(zeta, dtype=float) + ell * (K @ (C.T @ np.asarray(eta1, dtype=float)))
    if cfg.Kw is not None and cfg.nu is not None:
        v = v + cfg.Kw @ np.atleast_1d(np.asarray(cfg.nu(w, x_star), dtype=float))
    return cfg.Lmat @ v


@dataclass(frozen=True)
class GainSet:
    rho: float
    g: float
    kappa: float
    ell: float
    tuning_order_tag: str = "rho->g(rho)->kappa(g)->ell(g,kappa)"

    def __post_init__(self):
        for name in ("rho", "g", "kappa", "ell"):
            if not getattr(self, name) > 1:
                raise ValueError(f"{name} must be > 1")


def tuning_schedule(seed: GainSet, multipliers: Optional[dict] = None, kappa_per_g: float = 1.0,
                    ell_per_kappa: float = 1.0) -> GainSet:
    """Scale a seed gain set in dependency order.

    ``rho`` is scaled first, then ``g``; ``kappa`` is then floored at
    ``kappa_per_g * g`` and ``ell`` at ``ell_per_kappa * kappa`` before their
    own multipliers apply, so a larger ``g`` drags the later gains up but
    never the reverse. Both ratios must be at least 1.
    """
    if not (kappa_per_g >= 1 and ell_per_kappa >= 1):
        raise ValueError("floor ratios must be >= 1")
    m = {"rho": 1.0, "g": 1.0, "kappa": 1.0, "ell": 1.0}
    if multipliers:
        unknown = set(multipliers) - set(m)
        if unknown:
            raise ValueError(f"unknown gains {sorted(unknown)}")
        m.update(multipliers)
    rho = seed.rho * m["rho"]
    g = seed.g * m["g"]
    kappa = max(seed.kappa, kappa_per_g * g) * m["kappa"]
    ell = max(seed.ell, ell_per_kappa * kappa) * m["ell"]
    tag = (f"rho={rho:g} -> g={g:g} -> kappa={kappa:g} (floor {kappa_per_g:g}*g) "
           f"-> ell={ell:g} (floor {ell_per_kappa:g}*kappa)")
    return GainSet(rho=rho, g=g, kappa=kappa, ell=ell, tuning_order_tag=tag)


def sweep_gains(seed: GainSet, parameter: str, values, kappa_per_g: float = 1.0,
                ell_per_kappa: float = 1.0) -> list:
    """One scheduled :class:`GainSet` per value of ``parameter``."""
    return [tuning_schedule(replace(seed, **{parameter: float(v)}), None, kappa_per_g, ell_per_kappa)
            for v in values]


@dataclass
class RegulatorState:
    eta: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.eta), np.ravel(self.sigma1), np.ravel(self.sigma2),
                               np.ravel(self.xi1), np.ravel(self.xi2)])


@dataclass
class Regulator:
    """Internal model + identifier + observer + stabilizer for one plant structure."""

    structure: ChainStructure
    im: InternalModelConfig
    model: object
    ident: LsIdentifierConfig
    stab: StabilizerConfig
    _C: np.ndarray = field(init=False, repr=False)
    _K: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        st = self.structure
        if self.im.ne != st.ne:
            raise ShapeMismatch("internal model and plant disagree on ne")
        if self.model.ntheta != self.ident.ntheta:
            raise ShapeMismatch("prediction model and identifier disagree on ntheta")
        if tuple(len(c) for c in self.stab.c_coeffs) != st.chain_lengths:
            raise ShapeMismatch("stabilizer coefficients do not match the chain lengths")
        if self.stab.Lmat.shape != (st.nu, st.ne):
            raise ShapeMismatch(f"L must be {st.nu}x{st.ne}")
        self._C = chain_matrices(st)[0]
        self._K = self.stab.K()

    @property
    def size(self) -> int:
        nt, ne = self.ident.ntheta, self.structure.ne
        return self.im.d * ne + nt * nt + nt + 2 * ne

    def zeros(self) -> RegulatorState:
        nt, ne, d = self.ident.ntheta, self.structure.ne, self.im.d
        return RegulatorState(np.zeros(d * ne), np.zeros((nt, nt)), np.zeros(nt), np.zeros(ne), np.zeros(ne))

    def unpack(self, vec) -> RegulatorState:
        nt, ne, d = self.ident.ntheta, self.structure.ne, self.im.d
        vec = np.asarray(vec, dtype=float)
        a = d * ne
        b = a + nt * nt
        c = b + nt
        return RegulatorState(vec[:a], vec[a:b].reshape(nt, nt), vec[b:c], vec[c:c + ne], vec[c + ne:c + 2 * ne])

    def control(self, chi, zeta, eta1, w=None, x_star=None) -> np.ndarray:
        return control_law(self.stab, chi, zeta, eta1, w, x_star, C=self._C)

    def rhs(self, state: RegulatorState, e, chi, zeta, w=None, x_star=None):
        """One evaluation of the full regulator vector field.

        Returns ``(derivative, u, info)`` where ``info`` carries ``theta``,
        ``psi``, ``etad_dot`` and the prediction-error identity residual.
        """
        ne, d = self.structure.ne, self.im.d
        e = np.asarray(e, dtype=float)
        eta = state.eta
        theta = ls_output(self.ident, state.sigma1, state.sigma2)
        S = self.model.regressor_matrix(eta)
        psi = S.T @ theta
        # internal model
        eta_dot = np.empty(d * ne)
        eta_dot[: (d - 1) * ne] = eta[ne:]
        eta_dot[(d - 1) * ne:] = psi
        eta_dot += np.repeat(self.im.gains, ne) * np.tile(e, d)
        etad = eta[(d - 1) * ne:]
        etad_dot = eta_dot[(d - 1) * ne:]
        # least squares flow
        lam = self.ident.lam
        s1_dot = lam * (S @ S.T - state.sigma1)
        s2_dot = lam * (S @ state.xi2 - state.sigma2)
        # derivative observer with predicted psi-dot
        th_dot = theta_dot(self.ident, state.sigma1, state.sigma2, S, state.xi2, theta)
        phi = internal_drift(eta, psi, ne)
        raw = self.model.jacobian_eta(eta, theta) @ phi + S.T @ th_dot
        psidot = smooth_saturation(raw, self.ident.psidot_bound)
        innov = state.xi1 - etad
        xi1_dot = state.xi2 - self.ident.m1 * self.ident.rho * innov
        xi2_dot = psidot - self.ident.m2 * self.ident.rho ** 2 * innov
        u = self.control(chi, zeta, eta[:ne], w, x_star)
        deriv = RegulatorState(eta_dot, s1_dot, s2_dot, xi1_dot, xi2_dot)
        residual = self.im.top_gain * e - (etad_dot - psi)
        info = {"theta": theta, "psi": psi, "etad_dot": etad_dot, "eq8_residual": residual,
                "psidot": psidot, "theta_dot": th_dot}
        return deriv, u, info

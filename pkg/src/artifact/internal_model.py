"""Internal-model unit: a chain of ``d`` blocks closed by a prediction model.

    eta_i' = eta_{i+1} + g**i h_i e        (i < d)
    eta_d' = psi(eta, theta) + g**d h_d e

``eta`` is stored block-wise, ``eta = col(eta_1, ..., eta_d)`` with each
``eta_i`` of length ``ne``; channel ``j`` therefore owns ``eta[j::ne]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ShapeMismatch
from .numerics import Polynomial, is_hurwitz


@dataclass(frozen=True)
class InternalModelConfig:
    d: int
    ne: int
    g: float
    h: tuple

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(float(v) for v in self.h))
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if len(self.h) != self.d:
            raise ValueError(f"need {self.d} h coefficients, got {len(self.h)}")
        if not self.g > 0:
            raise ValueError("g must be > 0")
        if not is_hurwitz(Polynomial(tuple(reversed(self.h)))):
            raise ValueError(f"s^d + h_1 s^(d-1) + ... + h_d is not Hurwitz for h={self.h}")

    @property
    def gains(self) -> np.ndarray:
        """``(g h_1, g**2 h_2, ..., g**d h_d)``."""
        return np.array([self.g ** (i + 1) * hi for i, hi in enumerate(self.h)])

    @property
    def G(self) -> np.ndarray:
        """The stacked injection matrix ``col(g h_1 I, ..., g**d h_d I)``."""
        return np.kron(self.gains.reshape(-1, 1), np.eye(self.ne))

    @property
    def top_gain(self) -> float:
        """``h_d g**d``, the reciprocal of the error/prediction-error ratio."""
        return self.h[-1] * self.g ** self.d


def smooth_saturation(x, level):
    """Component-wise ``level * tanh(x / level)``; ``level=inf`` is the identity."""
    x = np.asarray(x, dtype=float)
    if np.isinf(level):
        return x
    return level * np.tanh(x / level)


def smooth_saturation_slope(x, level):
    x = np.asarray(x, dtype=float)
    if np.isinf(level):
        return np.ones_like(x)
    return 1.0 / np.cosh(x / level) ** 2


class LinearModel:
    """Linearly parametrised prediction model ``psi(eta, theta) = S(eta)^T theta``.

    Each error channel ``j`` has its own parameter block ``theta_j`` and
    regressor ``sigma(eta[j::ne])`` (saturated component-wise at
    ``saturation``), so ``ntheta = ne * p`` where ``p`` is the regressor
    length. With ``ne = 1`` this is the plain ``theta^T sigma_sat(eta)``.

    Parameters
    ----------
    regressor : callable or None
        Map ``R^d -> R^p``. ``None`` means the identity (``p = d``).
    ntheta_channel : int
        ``p``, the number of parameters per channel.
    saturation : float
        Level ``M`` of the ``M tanh(./M)`` saturation; ``inf`` disables it.
    regressor_jacobian : callable, optional
        ``R^d -> R^{p x d}``. Required when ``regressor`` is not the identity.
    d, ne : int
        Internal-model depth and number of error channels.
    """

    def __init__(self, regressor: Optional[Callable] = None, ntheta_channel: Optional[int] = None,
                 saturation: float = np.inf, regressor_jacobian: Optional[Callable] = None,
                 d: int = 2, ne: int = 1):
        if not saturation > 0:
            raise ValueError("saturation level must be positive")
        self.d = int(d)
        self.ne = int(ne)
        self.saturation = float(saturation)
        self.identity_regressor = regressor is None
        if regressor is None:
            self._sigma = lambda z: np.asarray(z, dtype=float)
            self._dsigma = lambda z: np.eye(self.d)
            p = self.d if ntheta_channel is None else int(ntheta_channel)
            if p != self.d:
                raise ValueError("identity regressor needs ntheta_channel == d")
        else:
            if regressor_jacobian is None:
                raise ValueError("a non-identity regressor needs its jacobian")
            if ntheta_channel is None:
                raise ValueError("ntheta_channel is required with a custom regressor")
            self._sigma = regressor
            self._dsigma = regressor_jacobian
            p = int(ntheta_channel)
        self.p = p
        self.ntheta = p * self.ne

    def _check(self, eta, theta=None):
        eta = np.asarray(eta, dtype=float)
        if eta.size != self.d * self.ne:
            raise ShapeMismatch(f"eta has {eta.size} entries, expected {self.d * self.ne}")
        if theta is not None:
            theta = np.asarray(theta, dtype=float)
            if theta.size != self.ntheta:
                raise ShapeMismatch(f"theta has {theta.size} entries, expected {self.ntheta}")
        return eta, theta

    def channel_regressor(self, eta_channel) -> np.ndarray:
        """``sigma_sat`` of one channel's ``d``-vector."""
        raw = np.asarray(self._sigma(eta_channel), dtype=float).reshape(self.p)
        return smooth_saturation(raw, self.saturation)

    def channel_regressor_jacobian(self, eta_channel) -> np.ndarray:
        raw = np.asarray(self._sigma(eta_channel), dtype=float).reshape(self.p)
        D = np.asarray(self._dsigma(eta_channel), dtype=float).reshape(self.p, self.d)
        return smooth_saturation_slope(raw, self.saturation)[:, None] * D

    def regressor_matrix(self, eta) -> np.ndarray:
        """``S(eta)``, an ``ntheta x ne`` block-diagonal stack of channel regressors."""
        eta, _ = self._check(eta)
        S = np.zeros((self.ntheta, self.ne))
        for j in range(self.ne):
            S[j * self.p:(j + 1) * self.p, j] = self.channel_regressor(eta[j::self.ne])
        return S

    def value(self, eta, theta) -> np.ndarray:
        eta, theta = self._check(eta, theta)
        return self.regressor_matrix(eta).T @ theta

    def jacobian_theta(self, eta, theta=None) -> np.ndarray:
        return self.regressor_matrix(eta).T

    def jacobian_eta(self, eta, theta) -> np.ndarray:
        eta, theta = self._check(eta, theta)
        J = np.zeros((self.ne, self.d * self.ne))
        for j in range(self.ne):
            th = theta[j * self.p:(j + 1) * self.p]
            J[j, j::self.ne] = th @ self.channel_regressor_jacobian(eta[j::self.ne])
        return J

    def lipschitz_bound(self, theta, slope_bound: float = 1.0) -> float:
        """Bound on the eta-Lipschitz constant of ``psi(., theta)``.

        ``slope_bound`` bounds ``|D sigma|``; the saturation slope is at most 1,
        so the result does not depend on any regulator gain.
        """
        theta = np.asarray(theta, dtype=float)
        return float(np.linalg.norm(theta)) * slope_bound


def linear_model(regressor=None, ntheta=None, saturation=np.inf, regressor_jacobian=None,
                 d: int = 2, ne: int = 1) -> LinearModel:
    """Build a :class:`LinearModel`; ``ntheta`` is the per-channel count."""
    return LinearModel(regressor, ntheta, saturation, regressor_jacobian, d=d, ne=ne)


def internal_model_rhs(cfg: InternalModelConfig, model, eta, theta, e) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    e = np.asarray(e, dtype=float)
    ne, d = cfg.ne, cfg.d
    if eta.size != d * ne:
        raise ShapeMismatch(f"eta has {eta.size} entries, expected {d * ne}")
    if e.size != ne:
        raise ShapeMismatch(f"e has {e.size} entries, expected {ne}")
    out = np.empty(d * ne)
    out[: (d - 1) * ne] = eta[ne:]
    out[(d - 1) * ne:] = model.value(eta, theta)
    out += np.repeat(cfg.gains, ne) * np.tile(e, d)
    return out


def prediction_error_from_error(cfg: InternalModelConfig, e) -> np.ndarray:
    """``h_d g**d e``, which equals ``eta_d' - psi(eta, theta)`` along solutions."""
    return cfg.top_gain * np.asarray(e, dtype=float)


def default_h(d: int) -> tuple:
    """``h_1..h_d`` of ``(s + 1)**d``."""
    from math import comb

    return tuple(float(comb(d, k)) for k in range(1, d + 1))

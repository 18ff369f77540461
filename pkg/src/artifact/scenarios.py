"""Concrete closed-loop problems: the VTOL lateral dynamics and a linear benchmark.

Each scenario supplies the plant maps, the exosystem, the prediction model,
default tunables, and closed-form ideal steady-state signals (the ``eta*``
chain, its last derivative and the friend input) for given gains.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial
from typing import Callable, Optional

import numpy as np

from .errors import SingularAttitude
from .identifier import LsIdentifierConfig
from .internal_model import InternalModelConfig, default_h, linear_model
from .plant import ChainStructure, PlantModel, PlantState, chain_matrices
from .regulator import GainSet, Regulator, StabilizerConfig, default_c


@dataclass(frozen=True)
class SteadyStateOracle:
    """Ideal error-zeroing signals for one choice of ``(kappa, ell)``."""

    eta_star: Callable
    etad_dot_star: Callable
    u_star: Callable
    x_star: Callable
    model: object
    joint: Optional[Callable] = None  # t -> full chain (eta*, etad_dot*), when cheaper in one go

    def epsilon_star(self, t, theta) -> np.ndarray:
        """Steady-state prediction error ``etad_dot*(t) - psi(eta*(t), theta)``."""
        return self.etad_dot_star(t) - self.model.value(self.eta_star(t), theta)

    def history(self, times):
        """Sample ``(etad_dot*, eta*)`` on a time grid."""
        times = np.asarray(times, dtype=float)
        if self.joint is not None:
            full = np.array([self.joint(t) for t in times])
            return full[:, -1:], full[:, :-1]
        ydot = np.array([np.atleast_1d(self.etad_dot_star(t)) for t in times])
        eta = np.array([self.eta_star(t) for t in times])
        return ydot, eta


def harmonic_exosystem(omega0: float) -> Callable:
    S = np.array([[0.0, omega0], [-omega0, 0.0]])
    return lambda w: S @ np.asarray(w, dtype=float)


def harmonic_state(t, amplitude, omega0, phase=0.0) -> np.ndarray:
    """Exosystem state whose first entry is ``amplitude * sin(omega0 t + phase)``."""
    arg = omega0 * t + phase
    return amplitude * np.array([np.sin(arg), np.cos(arg)])


# -- truncated Taylor series ("jets") used to differentiate closed forms in time --

def _jet_mul(a, b):
    return np.convolve(a, b)[: len(a)]


def _jet_div(a, b):
    out = np.zeros_like(a)
    for k in range(len(a)):
        out[k] = (a[k] - np.dot(b[1:k + 1], out[k - 1::-1][:k])) / b[0]
    return out


def _sine_jet(t, amplitude, omega0, phase, order):
    """Taylor coefficients of ``amplitude*sin(omega0 s + phase)`` about ``s=t``."""
    k = np.arange(order + 1)
    return amplitude * omega0 ** k * np.sin(omega0 * t + phase + k * np.pi / 2) / np.array(
        [factorial(int(i)) for i in k], dtype=float)


def _jet_derivatives(jet):
    return jet * np.array([factorial(i) for i in range(len(jet))], dtype=float)


class Scenario:
    """Common machinery; subclasses fill in the plant and the steady state."""

    name = "scenario"
    plant: PlantModel
    d: int
    lam: float
    gamma_scale: float
    m1: float
    m2: float
    psidot_factor: float
    sigma_factor: float
    default_gains: GainSet
    kappa_per_g: float
    ell_per_kappa: float
    h_coeffs: tuple
    chain_coeffs: tuple
    omega0: float
    x_offset: tuple

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega0

    # hooks -------------------------------------------------------------
    def c_coeffs(self) -> tuple:
        lengths = self.plant.structure.chain_lengths
        if self.chain_coeffs:
            if len(lengths) != 1 or len(self.chain_coeffs) != lengths[0]:
                raise ValueError(f"chain coefficients need {lengths[0]} entries for a single chain")
            return (tuple(self.chain_coeffs),)
        return tuple(default_c(n) for n in lengths)

    def h(self) -> tuple:
        return tuple(self.h_coeffs) if self.h_coeffs else default_h(self.d)

    def Lmat(self) -> np.ndarray:
        raise NotImplementedError

    def feedforward(self, gains: GainSet):
        return None, None

    def regressor_saturation(self, gains: GainSet) -> float:
        return np.inf

    def steady_state(self, gains: GainSet) -> SteadyStateOracle:
        raise NotImplementedError

    def initial_w(self) -> np.ndarray:
        raise NotImplementedError

    def omega_l_sup(self) -> float:
        raise NotImplementedError

    def etad_dot_sup(self, gains: GainSet) -> float:
        raise NotImplementedError

    def psidot_sup(self, gains: GainSet) -> float:
        """Sup of the steady-state second derivative of ``eta_d``, the quantity psi-dot predicts."""
        return self.etad_dot_sup(gains) * max(1.0, self.omega0)

    # assembly ----------------------------------------------------------
    def model(self, gains: GainSet):
        ne = self.plant.structure.ne
        return linear_model(None, self.d, self.regressor_saturation(gains), d=self.d, ne=ne)

    def ntheta(self) -> int:
        return self.d * self.plant.structure.ne

    def identifier_config(self, gains: GainSet) -> LsIdentifierConfig:
        nt = self.ntheta()
        return LsIdentifierConfig(
            ntheta=nt,
            lam=self.lam,
            Gamma=self.gamma_scale * np.eye(nt),
            m1=self.m1,
            m2=self.m2,
            rho=gains.rho,
            psidot_bound=self.psidot_factor * self.psidot_sup(gains),
        )

    def regulator(self, gains: GainSet) -> Regulator:
        st = self.plant.structure
        Kw, nu = self.feedforward(gains)
        stab = StabilizerConfig(gains.kappa, gains.ell, self.c_coeffs(), self.Lmat(), Kw, nu)
        im = InternalModelConfig(self.d, st.ne, gains.g, self.h())
        return Regulator(st, im, self.model(gains), self.identifier_config(gains), stab)

    def initial_plant(self, offset=None) -> PlantState:
        st = self.plant.structure
        x = np.zeros(st.nx) if offset is None else np.asarray(offset, dtype=float)
        if x.size != st.nx:
            raise ValueError(f"initial offset needs {st.nx} entries")
        n0, nchi = st.n0, st.nchi
        return PlantState(self.initial_w(), x[:n0], x[n0:n0 + nchi], x[n0 + nchi:])

    def sigma_bound(self, gains: GainSet) -> float:
        """Radius of the compact set S* that ``|sigma1| + |sigma2|`` should stay in."""
        nt = self.ntheta()
        s = self.sigma_factor_bound(gains)
        return 2.0 * (nt * s ** 2 + np.sqrt(nt) * s * self.etad_dot_sup(gains))

    def sigma_factor_bound(self, gains: GainSet) -> float:
        sat = self.regressor_saturation(gains)
        return sat if np.isfinite(sat) else self.eta_sup(gains)

    def eta_sup(self, gains: GainSet) -> float:
        raise NotImplementedError

    def with_params(self, **changes) -> "Scenario":
        return replace(self, **changes)


# --------------------------------------------------------------------------
# VTOL lateral/roll dynamics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VtolParams:
    """Physical data of the VTOL example (defaults are illustrative, not measured).

    ``amplitude``, ``omega0`` and ``phase`` describe the wind force
    ``d0 = amplitude*sin(omega0 t + phase)``; the lateral disturbance is
    ``d = d0 / M``. ``L`` is the (negative) scalar stabilizer direction.
    """

    varrho: float = 9.81
    B: float = 1.0
    M: float = 1.0
    amplitude: float = 1.0
    omega0: float = 1.0
    phase: float = 0.0
    L: float = -1.0
    v_amplitude: float = 0.0
    v_decay: float = 1.0

    def __post_init__(self):
        if not (self.varrho > 0 and self.B > 0 and self.M > 0 and self.omega0 > 0):
            raise ValueError("varrho, B, M and omega0 must be positive")
        if not self.L < 0:
            raise ValueError("L must be negative (Omega is negative)")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")

    def disturbance(self, w):
        """``d(w)``, ``L_s d(w)`` and ``L_s^2 d(w)``."""
        w1, w2 = w[0], w[1]
        return w1 / self.M, self.omega0 * w2 / self.M, -self.omega0 ** 2 * w1 / self.M

    def v(self, t):
        return self.v_amplitude * np.exp(-self.v_decay * t)


def vtol_plant(params: VtolParams) -> PlantModel:
    """Transformed VTOL model: one chain of three integrators, ``n0 = 0``."""
    vr, B = params.varrho, params.B
    structure = ChainStructure(n0=0, ne=1, nu=1, chain_lengths=(3,))

    def tan_p3(w, x):
        d, _, _ = params.disturbance(w)
        return (d - x[2]) / vr

    def q(w, x):
        _, ds, dss = params.disturbance(w)
        tp = tan_p3(w, x)
        return np.array([dss - 2.0 * tp * (ds - x[3]) ** 2 / (vr * (1.0 + tp ** 2))])

    def Omega(w, x):
        tp = tan_p3(w, x)
        return np.array([[-vr * B * (1.0 + tp ** 2)]])

    return PlantModel(
        structure=structure,
        f0=lambda w, x: np.zeros(0),
        b=lambda w, x: np.zeros((0, 1)),
        q=q,
        Omega=Omega,
        s=harmonic_exosystem(params.omega0),
        nw=2,
        name="vtol",
    )


def vtol_raw_rhs(params: VtolParams, p, w, u, t=0.0) -> np.ndarray:
    """Raw lateral/roll dynamics in the measured coordinates ``p1..p4``."""
    d, _, _ = params.disturbance(w)
    return np.array([p[1], d - params.varrho * np.tan(p[2]) + params.v(t), p[3], params.B * float(np.ravel(u)[0])])


def vtol_to_transformed(params: VtolParams, p, w) -> np.ndarray:
    d, ds, _ = params.disturbance(w)
    vr = params.varrho
    return np.array([p[0], p[1], -vr * np.tan(p[2]) + d, ds - vr * p[3] / np.cos(p[2]) ** 2])


def vtol_to_raw(params: VtolParams, x, w) -> np.ndarray:
    d, ds, _ = params.disturbance(w)
    vr = params.varrho
    p3 = np.arctan((d - x[2]) / vr)
    p4 = (ds - x[3]) * np.cos(p3) ** 2 / vr
    return np.array([x[0], x[1], p3, p4])


def vtol_control_law(params: VtolParams, p, eta1, kappa, ell, c_coeffs) -> float:
    """The VTOL stabilizer written in the measured coordinates."""
    p = np.asarray(p, dtype=float)
    if abs(p[2]) >= np.pi / 2:
        raise SingularAttitude(f"|p3| = {abs(p[2]):.6g} >= pi/2")
    c1, c2, c3 = c_coeffs
    vr = params.varrho
    eta1 = float(np.ravel(eta1)[0])
    return -params.L * (
        c1 * ell * kappa ** 3 * (p[0] + eta1)
        + c2 * ell * kappa ** 2 * p[1]
        + c3 * ell * kappa * (-vr * np.tan(p[2]))
        + ell * (-vr * p[3] / np.cos(p[2]) ** 2)
    )


def vtol_feedforward(params: VtolParams, kappa, ell, c_coeffs):
    """``(Kw, nu)`` that make the generic stabilizer equal the VTOL law."""
    c3 = c_coeffs[2]
    Kw = ell * np.array([[c3 * kappa, 1.0]])

    def nu(w, x_star=None):
        d, ds, _ = params.disturbance(w)
        return np.array([d, ds])

    return Kw, nu


def vtol_friend_jet(params: VtolParams, t, order):
    """Taylor jet of ``u*(t)`` about ``t`` up to ``order``.

    ``u* = -q(w,0)/Omega(w,0) = varrho (d'' - 2 d d'^2 / P) / (B P)`` with
    ``P = varrho^2 + d^2``.
    """
    vr, B = params.varrho, params.B
    A = params.amplitude / params.M
    n = order + 3
    d = _sine_jet(t, A, params.omega0, params.phase, n)
    dd = np.append(d[1:] * np.arange(1, n + 1), 0.0)
    ddd = np.append(dd[1:] * np.arange(1, n + 1), 0.0)
    d, dd, ddd = d[: order + 1], dd[: order + 1], ddd[: order + 1]
    P = _jet_mul(d, d)
    P[0] += vr ** 2
    num = ddd - 2.0 * _jet_div(_jet_mul(d, _jet_mul(dd, dd)), P)
    return (vr / B) * _jet_div(num, P)


def vtol_steady_state(params: VtolParams, kappa, ell, depth, c_coeffs, L, model) -> SteadyStateOracle:
    """Closed-form ideal signals for a single-harmonic wind.

    ``eta_i* = Q . L_s^(i-1) D`` with ``D = col(d, L_s d, u*)`` and
    ``Q = (c3/(c1 kappa^2), 1/(c1 kappa^3), -1/(c1 ell L kappa^3))``.
    """
    c1, _, c3 = c_coeffs
    Q = np.array([c3 / (c1 * kappa ** 2), 1.0 / (c1 * kappa ** 3), -1.0 / (c1 * ell * L * kappa ** 3)])
    A = params.amplitude / params.M
    om, ph = params.omega0, params.phase

    def chain(t):
        # derivatives 0..depth of each entry of D
        ds = _jet_derivatives(_sine_jet(t, A, om, ph, depth + 1))
        uj = _jet_derivatives(vtol_friend_jet(params, t, depth))
        D = np.stack([ds[: depth + 1], ds[1: depth + 2], uj[: depth + 1]])
        return Q @ D

    def eta_star(t):
        return chain(t)[:depth]

    def etad_dot_star(t):
        return np.array([chain(t)[depth]])

    def u_star(t):
        return np.array([vtol_friend_jet(params, t, 0)[0]])

    def x_star(t):
        return PlantState(harmonic_state(t, params.amplitude, om, ph), np.zeros(0), np.zeros(3), np.zeros(1))

    return SteadyStateOracle(eta_star, etad_dot_star, u_star, x_star, model, chain)


@dataclass(frozen=True)
class VtolScenario(Scenario):
    params: VtolParams = field(default_factory=VtolParams)
    d: int = 2
    lam: float = 1.0
    gamma_scale: float = 1e-4
    m1: float = 1.0
    m2: float = 1.0
    psidot_factor: float = 2.0
    sigma_factor: float = 2.0
    default_gains: GainSet = field(default_factory=lambda: GainSet(rho=30.0, g=2.0, kappa=8.0, ell=10.0))
    kappa_per_g: float = 4.0
    ell_per_kappa: float = 1.25
    h_coeffs: tuple = ()
    chain_coeffs: tuple = ()
    x_offset: tuple = (0.1, 0.0, 0.0, 0.0)
    name: str = "vtol"

    def __post_init__(self):
        object.__setattr__(self, "plant", vtol_plant(self.params))

    @property
    def omega0(self) -> float:
        return self.params.omega0

    def Lmat(self):
        return np.array([[self.params.L]])

    def feedforward(self, gains):
        return vtol_feedforward(self.params, gains.kappa, gains.ell, self.c_coeffs()[0])

    def _dominant_scale(self, gains):
        c1, _, c3 = self.c_coeffs()[0]
        return c3 / (c1 * gains.kappa ** 2)

    def _wind_sup(self):
        # max over t of |col(d, L_s d)|
        return self.params.amplitude / self.params.M * max(1.0, self.params.omega0)

    def regressor_saturation(self, gains):
        if self.params.amplitude == 0:
            return np.inf
        return self.sigma_factor * self._wind_sup() * self._dominant_scale(gains)

    def eta_sup(self, gains):
        return self._wind_sup() * self._dominant_scale(gains) * max(1.0, self.params.omega0) ** self.d

    def etad_dot_sup(self, gains):
        sup = self._dominant_scale(gains) * self.params.amplitude / self.params.M * self.params.omega0 ** self.d
        return sup if sup > 0 else 1.0

    def omega_l_sup(self):
        p = self.params
        dmax = p.amplitude / p.M
        return p.varrho * p.B * (1.0 + (dmax / p.varrho) ** 2) * abs(p.L)

    def initial_w(self):
        return harmonic_state(0.0, self.params.amplitude, self.params.omega0, self.params.phase)

    def steady_state(self, gains):
        return vtol_steady_state(self.params, gains.kappa, gains.ell, self.d, self.c_coeffs()[0],
                                 self.params.L, self.model(gains))


# --------------------------------------------------------------------------
# linear benchmark
# --------------------------------------------------------------------------

def linear_benchmark_plant(omega0: float) -> PlantModel:
    """Double integrator ``e'' = d(w) + u`` with ``d = w_1``."""
    structure = ChainStructure(n0=0, ne=1, nu=1, chain_lengths=(1,))
    return PlantModel(
        structure=structure,
        f0=lambda w, x: np.zeros(0),
        b=lambda w, x: np.zeros((0, 1)),
        q=lambda w, x: np.array([w[0]]),
        Omega=lambda w, x: np.array([[1.0]]),
        s=harmonic_exosystem(omega0),
        nw=2,
        name="linear",
    )


@dataclass(frozen=True)
class LinearBenchmark(Scenario):
    omega0_: float = np.pi
    amplitude: float = 1000.0
    phase: float = np.pi / 2
    d: int = 2
    lam: float = 1.0
    gamma_scale: float = 1e-8
    m1: float = 1.0
    m2: float = 1.0
    psidot_factor: float = 100.0
    sigma_factor: float = np.inf
    default_gains: GainSet = field(default_factory=lambda: GainSet(rho=30.0, g=10.0, kappa=50.0, ell=250.0))
    kappa_per_g: float = 5.0
    ell_per_kappa: float = 5.0
    h_coeffs: tuple = ()
    chain_coeffs: tuple = ()
    x_offset: tuple = (0.1, 0.0)
    name: str = "linear"

    def __post_init__(self):
        if not self.omega0_ > 0:
            raise ValueError("omega0 must be positive")
        object.__setattr__(self, "plant", linear_benchmark_plant(self.omega0_))

    @property
    def omega0(self) -> float:
        return self.omega0_

    def Lmat(self):
        return np.array([[1.0]])

    def _scale(self, gains):
        c1 = self.c_coeffs()[0][0]
        return 1.0 / (gains.ell * c1 * gains.kappa)

    def eta_sup(self, gains):
        return self.amplitude * self._scale(gains) * max(1.0, self.omega0) ** self.d

    def etad_dot_sup(self, gains):
        sup = self.amplitude * self._scale(gains) * self.omega0 ** self.d
        return sup if sup > 0 else 1.0

    def omega_l_sup(self):
        return 1.0

    def initial_w(self):
        return harmonic_state(0.0, self.amplitude, self.omega0, self.phase)

    def theta_true(self) -> np.ndarray:
        return np.array([-self.omega0 ** 2, 0.0])

    def steady_state(self, gains):
        k = self._scale(gains)
        om, A, ph, depth = self.omega0, self.amplitude, self.phase, self.d

        def derivs(t):
            return _jet_derivatives(_sine_jet(t, A, om, ph, depth)) * k

        return SteadyStateOracle(
            eta_star=lambda t: derivs(t)[:depth],
            etad_dot_star=lambda t: derivs(t)[depth:depth + 1],
            u_star=lambda t: -np.array([A * np.sin(om * t + ph)]),
            x_star=lambda t: PlantState(harmonic_state(t, A, om, ph), np.zeros(0), np.zeros(1), np.zeros(1)),
            model=self.model(gains),
        )


def linear_benchmark(omega0: float = np.pi, amplitude: float = 1000.0, **kw) -> LinearBenchmark:
    return LinearBenchmark(omega0_=omega0, amplitude=amplitude, **kw)


SCENARIOS = {"vtol": VtolScenario, "linear": LinearBenchmark}

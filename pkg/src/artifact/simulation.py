"""Closed-loop simulation of plant + regulator, recorded series and metrics."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    CorruptedState,
    DivergedRun,
    IntegrationBlowup,
    ModelEvaluationError,
    RegulatorError,
)
from .plant import PlantState, evaluate_maps, omega_l_min_eig
from .regulator import GainSet, RegulatorState, tuning_schedule

log = logging.getLogger(__name__)

DT_FLOOR = 1e-7
SWEEP_PARAMETERS = ("g", "kappa", "ell", "rho", "lam", "gamma_scale")


@dataclass
class ClosedLoopState:
    plant: PlantState
    regulator: RegulatorState
    t: float = 0.0


@dataclass
class RunRecord:
    times: np.ndarray
    e: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    eps_star: np.ndarray
    eta: np.ndarray
    sigma1: np.ndarray
    xi1: np.ndarray
    etad: np.ndarray
    w: np.ndarray
    diagnostics: dict
    dt: float
    diverged: bool = False
    divergence_time: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def series(self, name: str) -> np.ndarray:
        """A recorded series as a 2-D (steps x components) array."""
        if name in self.diagnostics:
            arr = self.diagnostics[name]
        else:
            arr = getattr(self, name)
        arr = np.asarray(arr, dtype=float)
        return arr.reshape(len(arr), -1)


def default_dt(scenario, gains: GainSet) -> float:
    """``min(1e-3, 0.1 / Lambda)`` with Lambda the fastest closed-loop rate estimate."""
    h = scenario.h()
    rates = [
        gains.g ** scenario.d * h[-1],
        gains.ell * scenario.omega_l_sup(),
        scenario.m2 * gains.rho ** 2,
    ]
    for c in scenario.c_coeffs():
        rates.append(gains.kappa ** len(c) * max(c))
    fastest = max(rates)
    dt = min(1e-3, 0.1 / fastest)
    if dt < DT_FLOOR:
        raise ValueError(f"gains demand dt={dt:.3g} below the floor {DT_FLOOR:g}")
    return dt


class ClosedLoop:
    """Vector field of the interconnection, on a flat state vector."""

    def __init__(self, scenario, gains: GainSet):
        self.scenario = scenario
        self.gains = gains
        self.plant = scenario.plant
        self.regulator = scenario.regulator(gains)
        st = self.plant.structure
        self.nw = self.plant.nw
        self.n_plant = self.nw + st.nx
        self.C = self.plant.C
        self.F = self.plant.F
        self.H = self.plant.H
        nt = self.regulator.ident.ntheta
        off = self.n_plant + self.regulator.im.d * st.ne
        self._s1 = slice(off, off + nt * nt)
        self._nt = nt

    def pack(self, state: ClosedLoopState) -> np.ndarray:
        return np.concatenate([state.plant.pack(), state.regulator.pack()])

    def unpack(self, y, t=0.0) -> ClosedLoopState:
        st = self.plant.structure
        return ClosedLoopState(PlantState.unpack(y[: self.n_plant], st, self.nw),
                               self.regulator.unpack(y[self.n_plant:]), t)

    def evaluate(self, t, y):
        """Return ``(ydot, u, e, info, Omega)`` for one state."""
        st = self.plant.structure
        nw, n0, nchi, ne = self.nw, st.n0, st.nchi, st.ne
        w = y[:nw]
        x = y[nw:self.n_plant]
        chi = x[n0:n0 + nchi]
        zeta = x[n0 + nchi:]
        e = self.C @ chi
        reg = self.regulator.unpack(y[self.n_plant:])
        deriv, u, info = self.regulator.rhs(reg, e, chi, zeta, w, None)
        f0, b, q, Om = evaluate_maps(self.plant, w, x)
        wdot = self.plant.s(w)
        ydot = np.concatenate([
            wdot,
            f0 + b @ u,
            self.F @ chi + self.H @ zeta,
            q + Om @ u,
            deriv.pack(),
        ])
        return ydot, u, e, info, Om

    def __call__(self, t, y):
        return self.evaluate(t, y)[0]

    def symmetrize(self, y):
        nt = self._nt
        s1 = y[self._s1].reshape(nt, nt)
        y[self._s1] = (0.5 * (s1 + s1.T)).ravel()
        return y


def initial_state(scenario, loop: ClosedLoop, offset=None) -> ClosedLoopState:
    """Plant at the scenario's offset, regulator at rest (``sigma1(0) = 0``)."""
    off = scenario.x_offset if offset is None else offset
    return ClosedLoopState(scenario.initial_plant(off), loop.regulator.zeros(), 0.0)


def _rk4(f, t, y, dt):
    half = 0.5 * dt
    k1 = f(t, y)
    k2 = f(t + half, y + half * k1)
    k3 = f(t + half, y + half * k2)
    k4 = f(t + dt, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationBlowup(t + dt)
    return out


def simulate(scenario, gains: GainSet, initial: Optional[ClosedLoopState] = None, tfinal: float = 100.0,
             dt: Optional[float] = None, record_dt: Optional[float] = 0.01) -> RunRecord:
    """Integrate the closed loop with fixed-step RK4 and record the series.

    A state is recorded every ``record_dt`` (rounded to a whole number of
    steps; ``None`` records every step). A non-finite state ends the run
    early and the record is flagged ``diverged``.
    """
    if not tfinal > 0:
        raise ValueError("tfinal must be positive")
    loop = ClosedLoop(scenario, gains)
    if dt is None:
        dt = default_dt(scenario, gains)
    if not dt >= DT_FLOOR:
        raise ValueError(f"dt={dt:g} is below the floor {DT_FLOOR:g}")
    if initial is None:
        initial = initial_state(scenario, loop)
    oracle = scenario.steady_state(gains)
    sigma_bound = scenario.sigma_bound(gains)
    field_fn = _FusedKernel(loop) if _FusedKernel.supports(loop) else loop
    nsteps = int(round(tfinal / dt))
    stride = 1 if record_dt is None else max(1, int(round(record_dt / dt)))
    y = loop.pack(initial).astype(float)
    t0 = float(initial.t)

    rows = []
    diverged = False
    t_div = None

    def record(k, y):
        t = t0 + k * dt
        _, u, e, info, Om = loop.evaluate(t, y)
        st = loop.unpack(y, t)
        reg = st.regulator
        theta = info["theta"]
        eps = oracle.epsilon_star(t, theta)
        s_norm = float(np.linalg.norm(reg.sigma1) + np.linalg.norm(reg.sigma2))
        rows.append((
            t, e, u, theta, eps, reg.eta.copy(), reg.sigma1.copy(), reg.xi1.copy(),
            reg.eta[(loop.regulator.im.d - 1) * loop.plant.structure.ne:].copy(), st.plant.w.copy(),
            float(np.max(np.abs(info["eq8_residual"]))),
            omega_l_min_eig(Om, loop.regulator.stab.Lmat),
            s_norm,
        ))

    try:
        record(0, y)
        for k in range(1, nsteps + 1):
            y = loop.symmetrize(_rk4(field_fn, t0 + (k - 1) * dt, y, dt))
            if k % stride == 0 or k == nsteps:
                record(k, y)
    except (IntegrationBlowup, CorruptedState, ModelEvaluationError, FloatingPointError,
            OverflowError, ZeroDivisionError) as exc:
        diverged = True
        t_div = getattr(exc, "t", None)
        if t_div is None:
            t_div = t0 + k * dt
        log.warning("run diverged at t=%.6g: %s", t_div, exc)
    except RegulatorError as exc:
        diverged = True
        t_div = t0 + k * dt
        log.warning("run stopped at t=%.6g: %s", t_div, exc)

    cols = list(zip(*rows)) if rows else [[]] * 13
    arr = [np.array(c, dtype=float) for c in cols]
    n = len(rows)
    ne = loop.plant.structure.ne
    rec = RunRecord(
        times=arr[0],
        e=arr[1].reshape(n, ne),
        u=arr[2].reshape(n, -1) if n else arr[2],
        theta=arr[3].reshape(n, -1) if n else arr[3],
        eps_star=arr[4].reshape(n, ne),
        eta=arr[5].reshape(n, -1) if n else arr[5],
        sigma1=arr[6],
        xi1=arr[7].reshape(n, ne),
        etad=arr[8].reshape(n, ne),
        w=arr[9],
        diagnostics={
            "eq8_residual": arr[10],
            "minEig_OmegaL": arr[11],
            "sigma_norm": arr[12],
            "sigma_excursion": arr[12] > sigma_bound,
        },
        dt=dt,
        diverged=diverged,
        divergence_time=t_div,
        meta={"scenario": scenario.name, "gains": gains, "sigma_bound": sigma_bound,
              "top_gain": loop.regulator.im.top_gain, "tfinal": tfinal},
    )
    return rec


def tail_sup(record: RunRecord, series: str = "e", fraction: float = 0.2) -> float:
    """Sup of the series norm over the final ``fraction`` of the time window."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    if record.diverged:
        raise DivergedRun(f"run diverged at t={record.divergence_time}")
    t = record.times
    start = t[-1] - fraction * (t[-1] - t[0])
    vals = record.series(series)
    mask = t >= start - 1e-12 * max(1.0, abs(start))
    return float(np.max(np.linalg.norm(vals[mask], axis=1)))


@dataclass(frozen=True)
class Theorem1Ratio:
    ratio: Optional[float]
    asymptotic: bool
    e_tail: float
    eps_tail: float


def theorem1_ratio(record: RunRecord, fraction: float = 0.2, eps_floor: float = 1e-7) -> Theorem1Ratio:
    """``tail_sup|e| / tail_sup|eps*|``, or an asymptotic-regulation flag.

    When the prediction-error tail is below ``eps_floor`` the ratio is
    meaningless and ``asymptotic`` is set instead.
    """
    e_tail = tail_sup(record, "e", fraction)
    eps_tail = tail_sup(record, "eps_star", fraction)
    if eps_tail <= eps_floor:
        return Theorem1Ratio(None, True, e_tail, eps_tail)
    return Theorem1Ratio(e_tail / eps_tail, False, e_tail, eps_tail)


@dataclass
class RunSummary:
    value: float
    gains: GainSet
    e_tail: Optional[float]
    eps_tail: Optional[float]
    theta_tail_mean: Optional[np.ndarray]
    diverged: bool
    divergence_time: Optional[float]
    record: Optional[RunRecord] = None


def summarize(record: RunRecord, value=float("nan"), fraction: float = 0.2, keep_record: bool = True) -> RunSummary:
    gains = record.meta.get("gains")
    if record.diverged:
        return RunSummary(value, gains, None, None, None, True, record.divergence_time,
                          record if keep_record else None)
    t = record.times
    mask = t >= t[-1] - fraction * (t[-1] - t[0])
    return RunSummary(
        value, gains, tail_sup(record, "e", fraction), tail_sup(record, "eps_star", fraction),
        record.theta[mask].mean(axis=0), False, None, record if keep_record else None,
    )


def _variant(scenario, gains: GainSet, parameter: str, value: float):
    if parameter in ("lam", "gamma_scale"):
        return scenario.with_params(**{parameter: float(value)}), gains
    seed = replace(gains, **{parameter: float(value)})
    return scenario, tuning_schedule(seed, None, scenario.kappa_per_g, scenario.ell_per_kappa)


def sweep(scenario, base_gains: GainSet, parameter: str, values, tfinal: float = 100.0,
          dt: Optional[float] = None, fraction: float = 0.2, workers: int = 1,
          record_dt: Optional[float] = 0.01, keep_records: bool = True) -> list:
    """Independent runs, one per value; results keep the order of ``values``.

    Gain parameters go through :func:`tuning_schedule`, so ``kappa`` and
    ``ell`` are re-floored after ``g`` changes.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMETERS}")
    values = [float(v) for v in values]
    if any(not v > 0 for v in values):
        raise ValueError("sweep values must be positive")

    def one(v):
        scen, gains = _variant(scenario, base_gains, parameter, v)
        rec = simulate(scen, gains, tfinal=tfinal, dt=dt, record_dt=record_dt)
        return summarize(rec, v, fraction, keep_records)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, values))
    return [one(v) for v in values]


class _FusedKernel:
    """Fast closed-loop vector field for identity-regressor linear models.

    Plant maps are evaluated here; everything else runs in a compiled core.
    """

    def __init__(self, loop: ClosedLoop):
        from ._fused import closed_loop_field

        self._core = closed_loop_field
        reg = loop.regulator
        st = loop.plant.structure
        ident, stab = reg.ident, reg.stab
        self.plant = loop.plant
        self.nw, self.n_plant, self.ne, self.nu = loop.nw, loop.n_plant, st.ne, st.nu
        self.ip = np.array([loop.nw, st.n0, st.nchi, st.ne, st.nu, reg.im.d, reg.model.p, ident.ntheta],
                           dtype=np.int64)
        self.fp = np.array([ident.lam, ident.m1 * ident.rho, ident.m2 * ident.rho ** 2,
                            reg.model.saturation, ident.psidot_bound, stab.ell])
        self.gains = np.asarray(reg.im.gains, dtype=float)
        self.Gamma = np.ascontiguousarray(ident.Gamma, dtype=float)
        self.K = np.ascontiguousarray(reg._K, dtype=float)
        self.L = np.ascontiguousarray(stab.Lmat, dtype=float)
        self.heads = np.array([int(np.argmax(reg._C[j])) for j in range(st.ne)], dtype=np.int64)
        self.offsets = np.array(st.chain_offsets(), dtype=np.int64)
        self.lengths = np.array(st.chain_lengths, dtype=np.int64)
        self.Kw = None if stab.Kw is None or stab.nu is None else stab.Kw
        self.nu_fn = stab.nu
        self._zero_ne = np.zeros(st.ne)
        self._empty1 = np.zeros(0)
        self._empty2 = np.zeros((0, st.nu))

    @staticmethod
    def supports(loop: ClosedLoop) -> bool:
        from .internal_model import LinearModel

        model = loop.regulator.model
        return isinstance(model, LinearModel) and model.identity_regressor

    def __call__(self, t, y):
        plant = self.plant
        w = y[:self.nw]
        x = y[self.nw:self.n_plant]
        wdot = np.asarray(plant.s(w), dtype=float).reshape(-1)
        q = np.asarray(plant.q(w, x), dtype=float).reshape(self.ne)
        Om = np.asarray(plant.Omega(w, x), dtype=float).reshape(self.ne, self.nu)
        if plant.structure.n0:
            f0 = np.asarray(plant.f0(w, x), dtype=float).reshape(-1)
            b = np.asarray(plant.b(w, x), dtype=float).reshape(-1, self.nu)
        else:
            f0, b = self._empty1, self._empty2
        if self.Kw is None:
            ffw = self._zero_ne
        else:
            ffw = self.Kw @ np.atleast_1d(np.asarray(self.nu_fn(w, None), dtype=float))
        out, _, ok = self._core(y, wdot, f0, b, q, Om, ffw, self.ip, self.fp, self.gains, self.Gamma,
                                self.K, self.L, self.heads, self.offsets, self.lengths)
        if not ok:
            raise CorruptedState("sigma1 + Gamma is not positive definite")
        return out

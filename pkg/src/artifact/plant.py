"""Normal-form plants: chains of integrators driven by a high-frequency matrix.

A plant has state ``x = col(x0, chi, zeta)`` with

    x0'   = f0(w, x) + b(w, x) u
    chi'  = F chi + H zeta
    zeta' = q(w, x) + Omega(w, x) u
    e     = C chi

and is driven by an autonomous exosystem ``w' = s(w)``. All plant maps are
plain callables taking ``(w, x)`` with ``x`` the flat ``col(x0, chi, zeta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ModelEvaluationError, NotPositiveDefinite, ShapeMismatch, SingularGram
from .numerics import min_eigenvalue, solve_spd


@dataclass(frozen=True)
class ChainStructure:
    n0: int
    ne: int
    nu: int
    chain_lengths: tuple

    def __post_init__(self):
        object.__setattr__(self, "chain_lengths", tuple(int(n) for n in self.chain_lengths))
        if self.n0 < 0:
            raise ValueError("n0 must be >= 0")
        if self.ne < 1 or len(self.chain_lengths) != self.ne:
            raise ValueError("need exactly one chain length per error channel")
        if self.nu < self.ne:
            raise ValueError(f"nu ({self.nu}) must be >= ne ({self.ne})")
        if any(n < 1 for n in self.chain_lengths):
            raise ValueError("every chain length must be >= 1")

    @property
    def nchi(self) -> int:
        return sum(self.chain_lengths)

    @property
    def nx(self) -> int:
        return self.n0 + self.nchi + self.ne

    def chain_offsets(self) -> list:
        """Index of the first component of every chain inside ``chi``."""
        return list(np.cumsum((0,) + self.chain_lengths[:-1]).astype(int))


def chain_matrices(structure: ChainStructure):
    """Block matrices ``(C, F, H)`` of the integrator chains.

    ``C`` picks the head of each chain, ``F`` shifts every chain up by one and
    ``H`` injects ``zeta_i`` at the bottom of chain ``i``.
    """
    ne, nchi = structure.ne, structure.nchi
    C = np.zeros((ne, nchi))
    F = np.zeros((nchi, nchi))
    H = np.zeros((nchi, ne))
    for i, (off, n) in enumerate(zip(structure.chain_offsets(), structure.chain_lengths)):
        C[i, off] = 1.0
        for j in range(n - 1):
            F[off + j, off + j + 1] = 1.0
        H[off + n - 1, i] = 1.0
    return C, F, H


@dataclass(frozen=True)
class PlantModel:
    """One normal-form plant together with its exosystem."""

    structure: ChainStructure
    f0: Callable
    b: Callable
    q: Callable
    Omega: Callable
    s: Callable
    nw: int
    name: str = "plant"
    _mats: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_mats", chain_matrices(self.structure))

    @property
    def C(self):
        return self._mats[0]

    @property
    def F(self):
        return self._mats[1]

    @property
    def H(self):
        return self._mats[2]


@dataclass
class PlantState:
    w: np.ndarray
    x0: np.ndarray
    chi: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).ravel()
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        self.chi = np.asarray(self.chi, dtype=float).ravel()
        self.zeta = np.asarray(self.zeta, dtype=float).ravel()

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.x0, self.chi, self.zeta])

    def pack(self) -> np.ndarray:
        return np.concatenate([self.w, self.x0, self.chi, self.zeta])

    @classmethod
    def unpack(cls, vec, structure: ChainStructure, nw: int) -> "PlantState":
        vec = np.asarray(vec, dtype=float)
        i = nw
        j = i + structure.n0
        k = j + structure.nchi
        return cls(vec[:i], vec[i:j], vec[j:k], vec[k:k + structure.ne])

    @classmethod
    def zeros(cls, structure: ChainStructure, nw: int) -> "PlantState":
        return cls(np.zeros(nw), np.zeros(structure.n0), np.zeros(structure.nchi), np.zeros(structure.ne))

    def check(self, structure: ChainStructure, nw: int):
        dims = (self.w.size, self.x0.size, self.chi.size, self.zeta.size)
        want = (nw, structure.n0, structure.nchi, structure.ne)
        if dims != want:
            raise ShapeMismatch(f"plant state dimensions {dims} do not match {want}")


def _finite(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        raise ModelEvaluationError(name, idx, arr[idx])
    return arr


def evaluate_maps(model: PlantModel, w, x):
    """Return ``(f0, b, q, Omega)`` at ``(w, x)`` as arrays of the right shape."""
    st = model.structure
    f0 = _finite("f0", model.f0(w, x)).reshape(st.n0)
    b = _finite("b", model.b(w, x)).reshape(st.n0, st.nu)
    q = _finite("q", model.q(w, x)).reshape(st.ne)
    Om = _finite("Omega", model.Omega(w, x)).reshape(st.ne, st.nu)
    return f0, b, q, Om


def plant_rhs(model: PlantModel, state: PlantState, u) -> PlantState:
    """Time derivative of the plant (and its exosystem) under input ``u``."""
    st = model.structure
    u = np.asarray(u, dtype=float).reshape(st.nu)
    w = state.w
    x = state.x
    f0, b, q, Om = evaluate_maps(model, w, x)
    wdot = _finite("s", model.s(w)).reshape(model.nw)
    return PlantState(
        wdot,
        f0 + b @ u,
        model.F @ state.chi + model.H @ state.zeta,
        q + Om @ u,
    )


def friend(model: PlantModel, w, x_star: PlantState) -> np.ndarray:
    """Input ``u*`` that zeroes ``zeta'`` on the ideal steady state.

    Uses the minimum-norm solution ``-Omega^T (Omega Omega^T)^-1 q``.
    """
    x = x_star.x if isinstance(x_star, PlantState) else np.asarray(x_star, dtype=float)
    _, _, q, Om = evaluate_maps(model, w, x)
    gram = Om @ Om.T
    # Cholesky can succeed on a rounding-level pivot, so test conditioning first
    if min_eigenvalue(gram) <= 1e-12 * max(np.trace(gram), np.finfo(float).tiny):
        raise SingularGram("Omega(w, x*) is not full row rank")
    try:
        y = solve_spd(gram, q)
    except NotPositiveDefinite:
        raise SingularGram("Omega(w, x*) is not full row rank") from None
    return -Om.T @ y


def omega_l_min_eig(Omega, L) -> float:
    """Smallest eigenvalue of ``L^T Omega^T + Omega L`` (should stay >= 1)."""
    M = np.atleast_2d(Omega) @ np.atleast_2d(L)
    return min_eigenvalue(M + M.T)

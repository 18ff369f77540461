"""Small numerical kernels: fixed-step RK4, SPD solves, Routh-Hurwitz, quadrature.

Everything here works on tiny dense problems (dimensions below ~20), so no
attempt is made to exploit sparsity or structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import IntegrationBlowup, NotPositiveDefinite

__all__ = [
    "DenseMatrix",
    "Polynomial",
    "rk4_step",
    "solve_spd",
    "is_hurwitz",
    "routh_first_column",
    "trapezoid_integral",
    "min_eigenvalue",
    "binomial_coefficients",
]


@dataclass(frozen=True)
class DenseMatrix:
    """Row-major real matrix.

    Most of the package passes plain ``numpy`` arrays around; this wrapper
    exists for callers (config parsing, serialization) that want the shape
    and the finiteness invariant checked at construction.
    """

    rows: int
    cols: int
    entries: tuple

    def __post_init__(self):
        if len(self.entries) != self.rows * self.cols:
            raise ValueError(f"expected {self.rows * self.cols} entries, got {len(self.entries)}")
        if not all(np.isfinite(v) for v in self.entries):
            raise ValueError("matrix entries must be finite")

    @classmethod
    def from_array(cls, a) -> "DenseMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return cls(a.shape[0], a.shape[1], tuple(float(v) for v in a.ravel()))

    def to_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=float).reshape(self.rows, self.cols)


@dataclass(frozen=True)
class Polynomial:
    """Monic polynomial ``s**n + coeffs[n-1]*s**(n-1) + ... + coeffs[0]``.

    ``coeffs`` holds the non-leading coefficients from the constant term up;
    the leading 1 is implied, so the degree equals ``len(coeffs)``.
    """

    coeffs: tuple

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise ValueError("polynomial must have degree >= 1")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs)

    def descending(self) -> list:
        """Full coefficient list, highest power first (leading 1 included)."""
        return [1.0] + list(reversed(self.coeffs))


def rk4_step(rhs: Callable, state, t: float, dt: float) -> np.ndarray:
    """Advance ``state`` by one classical Runge-Kutta step of size ``dt``.

    ``rhs`` is called as ``rhs(t, y)``. Raises :class:`IntegrationBlowup`
    if any stage is non-finite.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    y = np.asarray(state, dtype=float)
    half = 0.5 * dt
    k1 = np.asarray(rhs(t, y), dtype=float)
    if not np.all(np.isfinite(k1)):
        raise IntegrationBlowup(t)
    k2 = np.asarray(rhs(t + half, y + half * k1), dtype=float)
    if not np.all(np.isfinite(k2)):
        raise IntegrationBlowup(t + half)
    k3 = np.asarray(rhs(t + half, y + half * k2), dtype=float)
    if not np.all(np.isfinite(k3)):
        raise IntegrationBlowup(t + half)
    k4 = np.asarray(rhs(t + dt, y + dt * k3), dtype=float)
    if not np.all(np.isfinite(k4)):
        raise IntegrationBlowup(t + dt)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def solve_spd(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` via Cholesky.

    Raises
    ------
    NotPositiveDefinite
        If ``A`` is not symmetric (1e-10 relative) or the factorization fails.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    scale = np.max(np.abs(A)) if A.size else 0.0
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10 * max(scale, 1.0):
        raise NotPositiveDefinite("matrix is not symmetric")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    y = _forward_substitute(L, b)
    return _back_substitute(L.T, y)


def _forward_substitute(L, b):
    n = L.shape[0]
    y = np.empty(n)
    for i in range(n):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def _back_substitute(U, y):
    n = U.shape[0]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x


def routh_first_column(p: Polynomial) -> list:
    """First column of the Routh array of a monic polynomial.

    Returns ``None`` if a zero pivot appears while lower rows are still
    nonzero (the marginal case; no epsilon perturbation is attempted).
    """
    desc = p.descending()
    n = len(desc) - 1
    row0 = desc[0::2]
    row1 = desc[1::2]
    width = len(row0)
    row1 = row1 + [0.0] * (width - len(row1))
    rows = [row0, row1]
    for _ in range(n - 1):
        upper, lower = rows[-2], rows[-1]
        pivot = lower[0]
        if pivot == 0.0:
            return None
        new = [(pivot * upper[j + 1] - upper[0] * lower[j + 1]) / pivot for j in range(width - 1)]
        rows.append(new + [0.0])
    return [r[0] for r in rows[: n + 1]]


def is_hurwitz(p: Polynomial) -> bool:
    """True iff every root of ``p`` has strictly negative real part."""
    if not isinstance(p, Polynomial):
        p = Polynomial(tuple(p))
    column = routh_first_column(p)
    if column is None:
        return False
    return all(c > 0.0 for c in column)


def trapezoid_integral(samples: Sequence[float], dt: float) -> float:
    """Composite trapezoid rule on uniformly spaced samples."""
    y = np.asarray(samples, dtype=float)
    if y.shape[0] < 2:
        raise ValueError("need at least two samples")
    if not dt > 0:
        raise ValueError("dt must be positive")
    return float(np.trapezoid(y, dx=dt, axis=0))


def min_eigenvalue(A, tol: float = 1e-12) -> float:
    """Smallest eigenvalue of a symmetric matrix by Cholesky-shift bisection.

    ``A - mu*I`` is positive definite iff ``mu`` is below the smallest
    eigenvalue, so bisection on ``mu`` between the Gershgorin bounds
    brackets it using only factorization attempts.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0])
    radius = np.sum(np.abs(A), axis=1) - np.abs(np.diag(A))
    lo = float(np.min(np.diag(A) - radius))
    hi = float(np.min(np.diag(A)))
    eye = np.eye(n)
    width = max(hi - lo, 1.0)
    while hi - lo > tol * width:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        try:
            np.linalg.cholesky(A - mid * eye)
            lo = mid
        except np.linalg.LinAlgError:
            hi = mid
    return 0.5 * (lo + hi)


def binomial_coefficients(n: int) -> tuple:
    """Non-leading coefficients of ``(s + 1)**n``, constant term first.

    This is ``(C(n,0), ..., C(n,n-1))``; for ``n=3`` it gives ``(1, 3, 3)``.
    Reverse it for the ``h_1..h_d`` (highest power first) convention.
    """
    from math import comb

    return tuple(float(comb(n, k)) for k in range(n))

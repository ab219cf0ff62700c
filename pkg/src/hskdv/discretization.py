"""Uniform grids, trapezoidal norms, interval masks and banded solves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .errors import ConfigurationError, NumericError

MIN_INTERIOR = 8


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of (0, L) with ``N`` interior nodes and both end nodes."""

    L: float
    N: int

    @property
    def dx(self) -> float:
        return self.L / (self.N + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 2) * self.dx

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dt

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights c_k * dt with c_0 = c_M = 1/2."""
        c = np.full(self.M + 1, self.dt)
        c[0] *= 0.5
        c[-1] *= 0.5
        return c


def make_grid(L: float, N: int) -> Grid1D:
    if not np.isfinite(L) or L <= 0:
        raise ConfigurationError(f"L must be positive, got {L}")
    if int(N) != N or N < MIN_INTERIOR:
        raise ConfigurationError(f"N must be an integer >= {MIN_INTERIOR}, got {N}")
    return Grid1D(float(L), int(N))


def make_time_grid(T: float, M: int) -> TimeGrid:
    if not np.isfinite(T) or T <= 0:
        raise ConfigurationError(f"T must be positive, got {T}")
    if int(M) != M or M < 1:
        raise ConfigurationError(f"M must be a positive integer, got {M}")
    return TimeGrid(float(T), int(M))


def space_weights(grid: Grid1D) -> np.ndarray:
    w = np.full(grid.N + 2, grid.dx)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def l2_norm(f: np.ndarray, grid: Grid1D) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.N + 2,):
        raise ConfigurationError(f"slice must have length {grid.N + 2}, got {f.shape}")
    return float(np.sqrt(np.dot(space_weights(grid), f * f)))


def inner(f: np.ndarray, g: np.ndarray, grid: Grid1D) -> float:
    return float(np.dot(space_weights(grid), np.asarray(f) * np.asarray(g)))


def spacetime_inner(f: np.ndarray, g: np.ndarray, grid: Grid1D, tgrid: TimeGrid) -> float:
    """Trapezoid-in-time, trapezoid-in-space pairing of two (M+1, N+2) fields."""
    return float(tgrid.trapezoid_weights() @ (np.asarray(f) * np.asarray(g)) @ space_weights(grid))


def indicator_mask(interval, grid: Grid1D) -> np.ndarray:
    """0/1 weights, one at nodes strictly inside ``interval``."""
    a, b = (float(v) for v in interval)
    if not (0.0 <= a < b <= grid.L):
        raise ConfigurationError(f"interval ({a}, {b}) must satisfy 0 <= a < b <= L={grid.L}")
    x = grid.nodes
    tol = 1e-9 * grid.dx
    return ((x > a + tol) & (x < b - tol)).astype(float)


def zeros_field(grid: Grid1D, tgrid: TimeGrid) -> np.ndarray:
    return np.zeros((tgrid.M + 1, grid.N + 2))


@dataclass
class BandedMatrix:
    """Square band matrix in LAPACK layout: ``ab[upper + i - j, j] = A[i, j]``."""

    lower: int
    upper: int
    ab: np.ndarray
    _lu: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.ab.shape[1]

    @classmethod
    def from_dense(cls, A: np.ndarray, lower: int, upper: int) -> "BandedMatrix":
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        ab = np.zeros((lower + upper + 1, n))
        for i in range(n):
            for j in range(max(0, i - lower), min(n, i + upper + 1)):
                ab[upper + i - j, j] = A[i, j]
        return cls(lower, upper, ab)

    def to_dense(self) -> np.ndarray:
        n = self.n
        A = np.zeros((n, n))
        for d in range(-self.lower, self.upper + 1):
            row = self.ab[self.upper - d]
            if d >= 0:
                A[np.arange(n - d), np.arange(d, n)] = row[d:]
            else:
                A[np.arange(-d, n), np.arange(n + d)] = row[: n + d]
        return A

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.n
        y = np.zeros_like(x)
        for d in range(-self.lower, self.upper + 1):
            row = self.ab[self.upper - d]
            if d >= 0:
                y[: n - d] += row[d:] * x[d:]
            else:
                y[-d:] += row[: n + d] * x[: n + d]
        return y

    def transpose(self) -> "BandedMatrix":
        return BandedMatrix.from_dense(self.to_dense().T, self.upper, self.lower)

    def factor(self) -> tuple:
        if self._lu is None:
            ab2 = np.zeros((2 * self.lower + self.upper + 1, self.n))
            ab2[self.lower :] = self.ab
            lu, piv, info = lapack.dgbtrf(ab2, self.lower, self.upper)
            row_max = np.abs(self.to_dense()).max(axis=1)
            pivots = np.abs(lu[self.lower + self.upper])
            if info != 0 or np.any(row_max == 0):
                raise NumericError(f"banded factorization failed (info={info}); zero pivot or zero row")
            ratio = pivots / row_max
            if ratio.min() <= 1e-14:
                k = int(np.argmin(ratio))
                raise NumericError(
                    f"banded factorization ill-conditioned: pivot {k} has |u_kk|={pivots[k]:.3e}, "
                    f"ratio to row max {ratio[k]:.3e}"
                )
            self._lu = (lu, piv)
        return self._lu

    def solve(self, rhs: np.ndarray, trans: bool = False) -> np.ndarray:
        lu, piv = self.factor()
        x, info = lapack.dgbtrs(lu, self.lower, self.upper, np.asarray(rhs, dtype=float), piv,
                                trans=1 if trans else 0)
        if info != 0:
            raise NumericError(f"banded solve failed (info={info})")
        return x


def solve_banded(A: BandedMatrix, rhs: np.ndarray) -> np.ndarray:
    return A.solve(rhs)

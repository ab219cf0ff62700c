"""Implicit θ-scheme solvers for scalar linear third-order equations.

Forward equations read ``y_t + a y_xxx = f`` and march k -> k+1 from an
initial datum. Backward equations read ``-y_t + a y_xxx = f`` and march
k -> k-1 from a terminal datum; after the substitution s = T - t they are
forward equations with the same ``a``.

Boundary variants: LEFT means y(0) = y(L) = y_x(0) = 0, RIGHT means
y(0) = y(L) = y_x(L) = 0. The third difference uses a mirror ghost at the
Neumann end and an odd ghost at the free end. That closure makes the
symmetric part of ``a D`` positive semidefinite whenever a < 0 with LEFT or
a > 0 with RIGHT, so Crank-Nicolson never increases the discrete L2 norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .discretization import BandedMatrix, Grid1D, TimeGrid, MIN_INTERIOR
from .errors import ConfigurationError, NumericError


class BC(str, Enum):
    LEFT = "left"
    RIGHT = "right"

    def flipped(self) -> "BC":
        return BC.RIGHT if self is BC.LEFT else BC.LEFT


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True)
class KdvOperatorSpec:
    a: float
    bc: BC
    direction: Direction = Direction.FORWARD

    def __post_init__(self):
        if abs(self.a) not in (0.5, 1.0):
            raise ConfigurationError(f"|a| must be 1/2 or 1, got {self.a}")
        object.__setattr__(self, "bc", BC(self.bc))
        object.__setattr__(self, "direction", Direction(self.direction))


def third_difference_dense(grid: Grid1D, bc: BC) -> np.ndarray:
    """N x N matrix of the closed third difference acting on interior values."""
    N = grid.N
    if N < MIN_INTERIOR:
        raise ConfigurationError(f"grid too small for the third-difference stencil (N={N})")
    c = 1.0 / (2.0 * grid.dx**3)
    D = c * (np.diag(np.full(N - 2, 1.0), 2) - 2 * np.diag(np.full(N - 1, 1.0), 1)
             + 2 * np.diag(np.full(N - 1, 1.0), -1) - np.diag(np.full(N - 2, 1.0), -2))
    # ghosts: y_{-1} = ±y_1 at x=0, y_{N+2} = ±y_N at x=L
    sign = -1.0 if BC(bc) is BC.LEFT else 1.0
    D[0, 0] += sign * c
    D[-1, -1] += sign * c
    return D


def third_difference(grid: Grid1D, bc: BC) -> BandedMatrix:
    return BandedMatrix.from_dense(third_difference_dense(grid, bc), 2, 2)


def d3_interior(samples: np.ndarray, dx: float) -> np.ndarray:
    """Raw five-point third difference at nodes 2..N-1 of a full-length sample vector."""
    y = np.asarray(samples, dtype=float)
    return (y[4:] - 2 * y[3:-1] + 2 * y[1:-3] - y[:-4]) / (2 * dx**3)


def first_difference(y: np.ndarray, dx: float) -> np.ndarray:
    """Centered first difference along the last axis; end columns are zero."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    out[..., 1:-1] = (y[..., 2:] - y[..., :-2]) / (2 * dx)
    return out


def first_difference_transpose(y: np.ndarray, dx: float) -> np.ndarray:
    """Transpose of ``first_difference`` restricted to interior nodes (equals its negative)."""
    y = np.asarray(y, dtype=float).copy()
    y[..., 0] = 0.0
    y[..., -1] = 0.0
    return -first_difference(y, dx)


def assemble_operator(spec: KdvOperatorSpec, grid: Grid1D, dt: float, theta: float = 0.5):
    """Return the θ-scheme pair (I/dt + θ a D, I/dt - (1-θ) a D) as band matrices."""
    if not 0.5 <= theta <= 1.0:
        raise ConfigurationError(f"theta must lie in [1/2, 1], got {theta}")
    A = spec.a * third_difference_dense(grid, spec.bc)
    eye = np.eye(grid.N) / dt
    return (BandedMatrix.from_dense(eye + theta * A, 2, 2),
            BandedMatrix.from_dense(eye - (1 - theta) * A, 2, 2))


def _check_field(arr, grid: Grid1D, tgrid: TimeGrid, name: str) -> np.ndarray:
    if arr is None:
        return np.zeros((tgrid.M + 1, grid.N + 2))
    arr = np.asarray(arr, dtype=float)
    if arr.shape != (tgrid.M + 1, grid.N + 2):
        raise ConfigurationError(f"{name} must have shape {(tgrid.M + 1, grid.N + 2)}, got {arr.shape}")
    return arr


class KdvStepper:
    """Factorized θ-scheme for one (a, bc) pair on fixed grids.

    ``march`` runs the scheme in the operator's own direction. ``dual`` runs the
    exact transpose of the forward scheme whose operator is the transpose of
    this one; it is what the cascade uses for backward unknowns.
    """

    def __init__(self, spec: KdvOperatorSpec, grid: Grid1D, tgrid: TimeGrid, theta: float = 0.5):
        self.spec, self.grid, self.tgrid, self.theta = spec, grid, tgrid, theta
        self.B, C = assemble_operator(spec, grid, tgrid.dt, theta)
        self.C = C.to_dense()
        self.B.factor()

    def _blend(self, f: np.ndarray) -> np.ndarray:
        th = self.theta
        return th * f[1:, 1:-1] + (1 - th) * f[:-1, 1:-1]

    def march(self, datum, source=None) -> np.ndarray:
        g, tg = self.grid, self.tgrid
        f = _check_field(source, g, tg, "source")
        datum = np.asarray(datum, dtype=float)
        if datum.shape != (g.N + 2,):
            raise ConfigurationError(f"datum must have length {g.N + 2}")
        backward = self.spec.direction is Direction.BACKWARD
        if backward:
            f = f[::-1]
        S = self._blend(f)
        out = np.zeros((tg.M + 1, g.N + 2))
        y = datum[1:-1].copy()
        out[0, 1:-1] = y
        for k in range(tg.M):
            y = self.B.solve(self.C @ y + S[k])
            out[k + 1, 1:-1] = y
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite values in θ-scheme march")
        return out[::-1] if backward else out

    def dual(self, source=None, terminal=None):
        """Transpose march for a backward equation.

        Returns ``(values, rep)``. ``rep[k]`` is the Riesz representer of the
        linear functional  sum_k c_k dt <source_k, y_k>  with respect to the
        forward source at level k, ``values`` equals ``rep`` except
        ``values[0]`` (the representer with respect to the initial datum) and
        ``values[M]`` (the terminal datum, zero by default).
        """
        g, tg = self.grid, self.tgrid
        z = _check_field(source, g, tg, "source")[:, 1:-1]
        w = tg.trapezoid_weights()
        th, M = self.theta, tg.M
        mu = np.zeros((M + 2, g.N))
        lam = w[M] * z[M]
        if terminal is not None:
            lam = lam + np.asarray(terminal, dtype=float)[1:-1]
        for k in range(M, 0, -1):
            mu[k] = self.B.solve(lam)
            lam = w[k - 1] * z[k - 1] + self.C @ mu[k]
        rep = np.zeros((M + 1, g.N + 2))
        rep[:, 1:-1] = (th * mu[: M + 1] + (1 - th) * mu[1:]) / w[:, None]
        values = rep.copy()
        values[0, 1:-1] = lam
        values[M] = 0.0 if terminal is None else terminal
        values[M, [0, -1]] = 0.0
        if not np.all(np.isfinite(rep)) or not np.all(np.isfinite(values)):
            raise NumericError("non-finite values in transpose march")
        return values, rep


def solve_linear_kdv(spec: KdvOperatorSpec, grid: Grid1D, tgrid: TimeGrid, init, source=None,
                     theta: float = 0.5) -> np.ndarray:
    """Single scalar solve; ``init`` is the terminal datum for backward specs."""
    return KdvStepper(spec, grid, tgrid, theta).march(init, source)


def nonlinear_term(y1: np.ndarray, y2: np.ndarray, coeff: float, dx: float) -> np.ndarray:
    """coeff * y1 * D1 y2 with centered differences and zero boundary columns."""
    out = coeff * np.asarray(y1, dtype=float) * first_difference(y2, dx)
    out[..., 0] = 0.0
    out[..., -1] = 0.0
    return out

"""Linear forward-backward cascade and its adjoint.

State system::

    u_t - 1/2 u_xxx = h1 1_w + f1      (LEFT)       forward
    v_t +     v_xxx = h2 1_w + f2      (RIGHT)      forward
   -p_t + 1/2 p_xxx = u 1_O + f3       (RIGHT)      backward, p(T) = 0
   -q_t -     q_xxx = v 1_O + f4       (LEFT)       backward, q(T) = 0

Adjoint system::

    zeta_t  - 1/2 zeta_xxx  = g3       (LEFT)       forward
    theta_t +     theta_xxx = g4       (RIGHT)      forward
   -eta_t   + 1/2 eta_xxx   = zeta 1_O + g1   (RIGHT)   backward
   -psi_t   -     psi_xxx   = theta 1_O + g2  (LEFT)    backward

With the default ``scheme="dual"`` every backward unknown is produced by the
exact transpose of the forward march it pairs with, so

    <(p(0), q(0)), (zeta0, theta0)> = <(h1 1_w + f1, h2 1_w + f2), (eta, psi)>_Q
                                      + <(f3, f4), (zeta, theta)>_Q

holds to roundoff under trapezoidal pairings. Backward unknowns carry two
arrays: ``p`` (the field, with p(T) = 0 and p(0) the representer of the
initial datum) and ``p_rep`` (the representer with respect to sources,
which is what gets paired with source fields).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .discretization import Grid1D, TimeGrid, indicator_mask, inner, spacetime_inner, space_weights
from .errors import ConfigurationError
from .kdv import BC, Direction, KdvOperatorSpec, KdvStepper

SPEC_U = KdvOperatorSpec(-0.5, BC.LEFT, Direction.FORWARD)
SPEC_V = KdvOperatorSpec(1.0, BC.RIGHT, Direction.FORWARD)
SPEC_P = KdvOperatorSpec(0.5, BC.RIGHT, Direction.BACKWARD)
SPEC_Q = KdvOperatorSpec(-1.0, BC.LEFT, Direction.BACKWARD)


@dataclass(frozen=True)
class Geometry:
    omega: tuple
    obs: tuple
    omega0: tuple
    L: float = 1.0

    def validate(self) -> "Geometry":
        """Check 0 < a < b < L for each interval, O ∩ ω ≠ ∅ and ω0 ⊂⊂ O ∩ ω."""
        for name in ("omega", "obs", "omega0"):
            a, b = getattr(self, name)
            if not (0 <= a < b <= self.L):
                raise ConfigurationError(f"{name}=({a}, {b}) must satisfy 0 <= a < b <= L={self.L}")
        a0, b0 = self.omega0
        if not (0 < a0 and b0 < self.L):
            raise ConfigurationError(f"omega0=({a0}, {b0}) must lie strictly inside (0, L)")
        lo = max(self.omega[0], self.obs[0])
        hi = min(self.omega[1], self.obs[1])
        if not lo < hi:
            raise ConfigurationError(
                f"obs={self.obs} and omega={self.omega} do not intersect; the observation set "
                "must meet the control set (hypothesis: O ∩ ω nonempty)"
            )
        if not (lo < a0 and b0 < hi):
            raise ConfigurationError(
                f"omega0={self.omega0} is not compactly contained in O ∩ ω = ({lo}, {hi}) "
                "(hypothesis: omega0 ⊂⊂ O ∩ ω)"
            )
        return self


@dataclass
class CascadeState:
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray
    p_rep: np.ndarray = field(default=None, repr=False)
    q_rep: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.p_rep is None:
            self.p_rep = self.p
        if self.q_rep is None:
            self.q_rep = self.q

    def fields(self):
        return {"u": self.u, "v": self.v, "p": self.p, "q": self.q}


@dataclass
class AdjointState:
    eta: np.ndarray
    psi: np.ndarray
    zeta: np.ndarray
    theta: np.ndarray
    eta_rep: np.ndarray = field(default=None, repr=False)
    psi_rep: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.eta_rep is None:
            self.eta_rep = self.eta
        if self.psi_rep is None:
            self.psi_rep = self.psi

    def fields(self):
        return {"eta": self.eta, "psi": self.psi, "zeta": self.zeta, "theta": self.theta}


class CascadeSolver:
    """Pre-factorized scalar marches plus masks for one geometry and grid pair."""

    def __init__(self, grid: Grid1D, tgrid: TimeGrid, geometry: Geometry, theta: float = 0.5,
                 scheme: str = "dual"):
        if scheme not in ("dual", "direct"):
            raise ConfigurationError(f"scheme must be 'dual' or 'direct', got {scheme!r}")
        self.grid, self.tgrid, self.geometry, self.theta, self.scheme = grid, tgrid, geometry, theta, scheme
        self.m_omega = indicator_mask(geometry.omega, grid)
        self.m_obs = indicator_mask(geometry.obs, grid)
        self.m_omega0 = indicator_mask(geometry.omega0, grid)
        self.step_u = KdvStepper(SPEC_U, grid, tgrid, theta)
        self.step_v = KdvStepper(SPEC_V, grid, tgrid, theta)
        self.step_p = KdvStepper(SPEC_P, grid, tgrid, theta)
        self.step_q = KdvStepper(SPEC_Q, grid, tgrid, theta)

    def with_obs_mask(self, mask: np.ndarray) -> "CascadeSolver":
        other = copy.copy(self)
        other.m_obs = np.asarray(mask, dtype=float)
        return other

    @property
    def shape(self):
        return (self.tgrid.M + 1, self.grid.N + 2)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def _z(self, a):
        return self.zeros() if a is None else np.asarray(a, dtype=float)

    def _zv(self, a):
        return np.zeros(self.grid.N + 2) if a is None else np.asarray(a, dtype=float)

    def _backward(self, stepper: KdvStepper, source):
        if self.scheme == "dual":
            return stepper.dual(source)
        vals = stepper.march(np.zeros(self.grid.N + 2), source)
        return vals, vals

    def solve_extended_linear(self, u0=None, v0=None, h1=None, h2=None,
                              f1=None, f2=None, f3=None, f4=None) -> CascadeState:
        mw = self.m_omega
        u = self.step_u.march(self._zv(u0), self._z(h1) * mw + self._z(f1))
        v = self.step_v.march(self._zv(v0), self._z(h2) * mw + self._z(f2))
        p, p_rep = self._backward(self.step_p, u * self.m_obs + self._z(f3))
        q, q_rep = self._backward(self.step_q, v * self.m_obs + self._z(f4))
        return CascadeState(u, v, p, q, p_rep, q_rep)

    def solve_adjoint(self, zeta0=None, theta0=None, g1=None, g2=None, g3=None, g4=None) -> AdjointState:
        zeta = self.step_u.march(self._zv(zeta0), self._z(g3))
        theta = self.step_v.march(self._zv(theta0), self._z(g4))
        eta, eta_rep = self._backward(self.step_p, zeta * self.m_obs + self._z(g1))
        psi, psi_rep = self._backward(self.step_q, theta * self.m_obs + self._z(g2))
        return AdjointState(eta, psi, zeta, theta, eta_rep, psi_rep)

    def controls_from_adjoint(self, adj: AdjointState):
        """Masked observation of (eta, psi) on omega: the control shape."""
        return adj.eta_rep * self.m_omega, adj.psi_rep * self.m_omega

    # pairings
    def pair_space(self, a, b) -> float:
        return inner(a, b, self.grid)

    def pair_spacetime(self, a, b) -> float:
        return spacetime_inner(a, b, self.grid, self.tgrid)


def random_smooth_profile(rng: np.random.Generator, grid: Grid1D, bc: BC | None = None, modes: int = 4,
                          support=None) -> np.ndarray:
    """Random combination of low sine modes that meets the boundary conditions of ``bc``."""
    x = grid.nodes / grid.L
    coeffs = rng.normal(size=modes) / np.arange(1, modes + 1)
    y = sum(c * np.sin((m + 1) * np.pi * x) for m, c in enumerate(coeffs))
    if bc is not None:
        y = y * (x if BC(bc) is BC.LEFT else (1 - x))
    if support is not None:
        a, b = support
        xs = grid.nodes
        inside = (xs > a) & (xs < b)
        bump = np.zeros_like(xs)
        r = (xs[inside] - a) / (b - a)
        bump[inside] = np.sin(np.pi * r) ** 2
        y = y * bump
    y[0] = y[-1] = 0.0
    return y


def random_smooth_field(rng: np.random.Generator, grid: Grid1D, tgrid: TimeGrid, modes: int = 3,
                        support=None) -> np.ndarray:
    t = tgrid.times / tgrid.T
    out = np.zeros((tgrid.M + 1, grid.N + 2))
    for _ in range(modes):
        prof = random_smooth_profile(rng, grid, modes=modes, support=support)
        tprof = np.cos(np.pi * rng.uniform(0.5, 2.5) * t + rng.uniform(0, 2 * np.pi))
        out += tprof[:, None] * prof[None, :]
    return out


def duality_pairing_check(solver: CascadeSolver, trials: int = 5, rng=None,
                          quadrature: str = "trapezoid") -> float:
    """Max relative defect of the state/adjoint pairing over random controls and adjoint data.

    ``quadrature="rectangle"`` pairs the space-time side with unit end weights,
    the perturbation the identity is supposed to detect.
    """
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    g, tg = solver.grid, solver.tgrid
    wt = tg.trapezoid_weights()
    if quadrature == "rectangle":
        wt = np.full_like(wt, tg.dt)
    elif quadrature != "trapezoid":
        raise ConfigurationError(f"unknown quadrature {quadrature!r}")
    ws = space_weights(g)
    worst = 0.0
    for _ in range(trials):
        h1 = random_smooth_field(rng, g, tg)
        h2 = random_smooth_field(rng, g, tg)
        zeta0 = random_smooth_profile(rng, g, BC.LEFT)
        theta0 = random_smooth_profile(rng, g, BC.RIGHT)
        st = solver.solve_extended_linear(h1=h1, h2=h2)
        adj = solver.solve_adjoint(zeta0, theta0)
        lhs = solver.pair_space(st.p[0], zeta0) + solver.pair_space(st.q[0], theta0)
        mw = solver.m_omega
        rhs = float(wt @ ((h1 * mw) * adj.eta_rep + (h2 * mw) * adj.psi_rep) @ ws)
        scale = max(abs(lhs), abs(rhs))
        if scale == 0.0:
            continue
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst

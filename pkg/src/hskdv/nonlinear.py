"""Picard iteration for the nonlinear cascade and the outer null-control loop.

Nonlinear state equations::

    u_t - 1/2 u_xxx = h1 1_w + xi1 + 3 u u_x - 6 v v_x
    v_t +     v_xxx = h2 1_w + xi2 - 3 u v_x

The backward pair carries the first-order coupling of the linearization
around (u, v). Two variants are available:

``coupling="adjoint"`` (default) uses the exact transpose of the discrete
tangent of the forward scheme, the continuous analogue being

    -p_t + 1/2 p_xxx + 3 u p_x + 3 v_x q   = u 1_O
    -q_t -     q_xxx - 6 v p_x - 3 (u q)_x = v 1_O

``coupling="literal"`` uses -3 p u_x + 3 q v_x on the p line and +6 p v_x on
the q line, moved to the right-hand side. Only the first makes (p(0), q(0))
the exact derivative of the sentinel along initial-data perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cascade import CascadeSolver, CascadeState
from .control import ControlPair, HumConfig, Sources, synthesize_null_control, uncontrolled_baseline
from .discretization import space_weights
from .errors import ConfigurationError, ConvergenceError
from .kdv import first_difference, first_difference_transpose, nonlinear_term

COUPLINGS = ("adjoint", "literal")


@dataclass(frozen=True)
class PicardConfig:
    R: float = 1.0
    tol: float = 1e-12
    max_outer: int = 60
    coupling: str = "adjoint"

    def __post_init__(self):
        if not self.R > 0:
            raise ConfigurationError(f"R must be positive, got {self.R}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if self.coupling not in COUPLINGS:
            raise ConfigurationError(f"coupling must be one of {COUPLINGS}, got {self.coupling!r}")


def state_norm(state: CascadeState, solver: CascadeSolver) -> float:
    """Surrogate for the solution-space norm: max over components of L-inf(L2) + L2(H1)."""
    ws = space_weights(solver.grid)
    wt = solver.tgrid.trapezoid_weights()
    dx = solver.grid.dx
    best = 0.0
    for y in (state.u, state.v, state.p_rep, state.q_rep):
        l2 = (y**2) @ ws
        h1 = l2 + np.sum(np.diff(y, axis=-1) ** 2, axis=-1) / dx
        best = max(best, float(np.sqrt(l2.max()) + np.sqrt(wt @ h1)))
    return best


def difference_norm(a: CascadeState, b: CascadeState, solver: CascadeSolver) -> float:
    d = CascadeState(a.u - b.u, a.v - b.v, a.p - b.p, a.q - b.q, a.p_rep - b.p_rep, a.q_rep - b.q_rep)
    return state_norm(d, solver)


def forward_nonlinearity(u, v, dx):
    """(3 u u_x - 6 v v_x, -3 u v_x)."""
    return nonlinear_term(u, u, 3.0, dx) + nonlinear_term(v, v, -6.0, dx), nonlinear_term(u, v, -3.0, dx)


def backward_coupling(state: CascadeState, dx: float, coupling: str = "adjoint"):
    u, v, p, q = state.u, state.v, state.p_rep, state.q_rep
    ux, vx = first_difference(u, dx), first_difference(v, dx)
    if coupling == "adjoint":
        f3 = 3 * ux * p + 3 * first_difference_transpose(u * p, dx) - 3 * vx * q
        f4 = -6 * vx * p - 6 * first_difference_transpose(v * p, dx) - 3 * first_difference_transpose(u * q, dx)
    elif coupling == "literal":
        f3 = 3 * p * ux - 3 * q * vx
        f4 = -6 * p * vx
    else:
        raise ConfigurationError(f"unknown coupling {coupling!r}")
    for f in (f3, f4):
        f[..., 0] = 0.0
        f[..., -1] = 0.0
    return f3, f4


def frozen_sources(state: CascadeState, xi1, xi2, dx: float, coupling: str) -> Sources:
    n1, n2 = forward_nonlinearity(state.u, state.v, dx)
    f3, f4 = backward_coupling(state, dx, coupling)
    return Sources(n1 + (0 if xi1 is None else xi1), n2 + (0 if xi2 is None else xi2), f3, f4)


@dataclass
class PicardHistory:
    increments: list = field(default_factory=list)
    norms: list = field(default_factory=list)

    @property
    def ratios(self):
        inc = self.increments
        return [inc[i + 1] / inc[i] for i in range(len(inc) - 1) if inc[i] > 0]

    def resolved_ratios(self, floor: float = 1e3 * np.finfo(float).eps):
        """Ratios among increments still above round-off, i.e. larger than ``floor`` times the iterate norm."""
        inc = [d for d, n in zip(self.increments, self.norms) if d > floor * n]
        return [inc[i + 1] / inc[i] for i in range(len(inc) - 1)]

    def as_rows(self):
        return [{"iteration": i + 1, "increment": d, "norm": n}
                for i, (d, n) in enumerate(zip(self.increments, self.norms))]


def picard_solve_nonlinear(solver: CascadeSolver, u0=None, v0=None, h: ControlPair | None = None,
                           xi1=None, xi2=None, cfg: PicardConfig = PicardConfig(), initial=None):
    """Iterate the frozen-source map until the increment is at most ``tol`` times the iterate norm.

    Raises ConvergenceError (carrying the history) when an iterate leaves the
    ball of radius 2R, turns non-finite, or ``max_outer`` is exhausted.
    """
    dx = solver.grid.dx
    h1 = None if h is None else h.h1
    h2 = None if h is None else h.h2
    zero = solver.zeros()
    current = initial if initial is not None else CascadeState(zero, zero, zero, zero)
    hist = PicardHistory()
    for it in range(1, int(cfg.max_outer) + 1):
        src = frozen_sources(current, xi1, xi2, dx, cfg.coupling)
        new = solver.solve_extended_linear(u0, v0, h1, h2, **src.as_kwargs())
        inc = difference_norm(new, current, solver)
        nrm = state_norm(new, solver)
        hist.increments.append(inc)
        hist.norms.append(nrm)
        if not (np.isfinite(inc) and np.isfinite(nrm)):
            raise ConvergenceError("Picard iterate became non-finite", hist.as_rows())
        if nrm > 2 * cfg.R:
            raise ConvergenceError(
                f"Picard iterate left the ball: norm {nrm:.3e} > 2R = {2 * cfg.R:.3e}", hist.as_rows()
            )
        current = new
        if inc <= cfg.tol * nrm:
            return current, hist
    raise ConvergenceError(f"Picard did not converge in {cfg.max_outer} iterations", hist.as_rows())


def amplitude_bisection(solve_at, lo: float, hi: float, steps: int = 12) -> float:
    """Largest amplitude in [lo, hi] at which ``solve_at(amplitude)`` succeeds (bisection on failure)."""
    ok_lo = True
    try:
        solve_at(lo)
    except ConvergenceError:
        ok_lo = False
    if not ok_lo:
        return 0.0
    try:
        solve_at(hi)
        return hi
    except ConvergenceError:
        pass
    for _ in range(steps):
        mid = np.sqrt(lo * hi)
        try:
            solve_at(mid)
            lo = mid
        except ConvergenceError:
            hi = mid
    return lo


@dataclass(frozen=True)
class OuterConfig:
    target_ratio: float = 1e-3
    control_tol: float = 1e-6
    max_rounds: int = 10


def nonlinear_null_control(solver: CascadeSolver, xi1, xi2, hum_cfg: HumConfig,
                           pic_cfg: PicardConfig = PicardConfig(), outer: OuterConfig = OuterConfig()):
    """Freeze nonlinear terms, solve the linear control problem, re-solve the nonlinear cascade, repeat.

    Returns (ControlPair, CascadeState, history rows). Each row records the
    round, ‖(p(0), q(0))‖, the relative control increment and CG iterations.
    """
    ws = space_weights(solver.grid)
    free, _ = picard_solve_nonlinear(solver, xi1=xi1, xi2=xi2, cfg=pic_cfg)
    baseline = uncontrolled_baseline(free, solver)
    target = outer.target_ratio * baseline
    rows = [{"round": 0, "pq0_norm": float(np.sqrt((free.p[0] ** 2 + free.q[0] ** 2) @ ws)),
             "baseline": baseline, "control_increment": float("nan"), "cg_iterations": 0}]
    zero = solver.zeros()
    h = ControlPair(zero, zero)
    state = free
    for rnd in range(1, int(outer.max_rounds) + 1):
        src = frozen_sources(state, xi1, xi2, solver.grid.dx, pic_cfg.coupling)
        h_new, _, rep = synthesize_null_control(solver, src, hum_cfg)
        state, _ = picard_solve_nonlinear(solver, h=h_new, xi1=xi1, xi2=xi2, cfg=pic_cfg, initial=state)
        hn = np.sqrt(solver.pair_spacetime(h_new.h1, h_new.h1) + solver.pair_spacetime(h_new.h2, h_new.h2))
        dh = np.sqrt(solver.pair_spacetime(h_new.h1 - h.h1, h_new.h1 - h.h1)
                     + solver.pair_spacetime(h_new.h2 - h.h2, h_new.h2 - h.h2))
        rel = float(dh / hn) if hn > 0 else 0.0
        h = h_new
        pq0 = float(np.sqrt((state.p[0] ** 2 + state.q[0] ** 2) @ ws))
        rows.append({"round": rnd, "pq0_norm": pq0, "baseline": baseline,
                     "control_increment": rel, "cg_iterations": rep.iterations})
        if not np.isfinite(pq0):
            raise ConvergenceError("outer control iteration produced non-finite norms", rows)
        if pq0 <= target and rel <= outer.control_tol:
            return h, state, rows
    raise ConvergenceError(
        f"outer control iteration did not reach ‖(p(0),q(0))‖ <= {target:.3e} with control increment "
        f"<= {outer.control_tol:.1e} in {outer.max_rounds} rounds", rows)


def residual_Y(solver: CascadeSolver, state: CascadeState, h: ControlPair | None = None, xi1=None, xi2=None,
               coupling: str = "adjoint") -> dict:
    """Discrete residuals of the four nonlinear cascade equations, in equation units.

    Forward components use the θ-scheme residual at each step. Backward
    components invert the representer averaging to recover the transpose-march
    multipliers and report the defect of each transposed step.
    """
    dx, dt, th = solver.grid.dx, solver.tgrid.dt, solver.theta
    zero = solver.zeros()
    h1 = zero if h is None else h.h1
    h2 = zero if h is None else h.h2
    src = frozen_sources(state, xi1, xi2, dx, coupling)
    out = {}
    for name, y, step, s in (("u", state.u, solver.step_u, h1 * solver.m_omega + src.f1),
                             ("v", state.v, solver.step_v, h2 * solver.m_omega + src.f2)):
        r = np.zeros_like(y)
        Y = y[:, 1:-1]
        lhs = Y[1:] @ step.B.to_dense().T - Y[:-1] @ step.C.T
        rhs = th * s[1:, 1:-1] + (1 - th) * s[:-1, 1:-1]
        r[1:, 1:-1] = lhs - rhs
        out[name] = r
    for name, y, rep, step, z in (("p", state.p, state.p_rep, solver.step_p, state.u * solver.m_obs + src.f3),
                                  ("q", state.q, state.q_rep, solver.step_q, state.v * solver.m_obs + src.f4)):
        r = np.zeros_like(y)
        if solver.scheme == "direct":
            Y = y[:, 1:-1]
            lhs = Y[:-1] @ step.B.to_dense().T - Y[1:] @ step.C.T
            rhs = th * z[:-1, 1:-1] + (1 - th) * z[1:, 1:-1]
            r[:-1, 1:-1] = lhs - rhs
        else:
            w = solver.tgrid.trapezoid_weights()
            M = solver.tgrid.M
            mu = np.zeros((M + 2, solver.grid.N))
            R = rep[:, 1:-1] * w[:, None]
            for k in range(M, 0, -1):
                mu[k] = (R[k] - (1 - th) * mu[k + 1]) / th
            Z = z[:, 1:-1] * w[:, None]
            for k in range(M, 0, -1):
                r[k, 1:-1] = (step.B.matvec(mu[k]) - Z[k] - step.C @ mu[k + 1]) / dt
            r[0, 1:-1] = (y[0, 1:-1] - Z[0] - step.C @ mu[1]) / dt
        out[name] = r
    return out


def residual_norms(solver: CascadeSolver, residuals: dict) -> dict:
    return {k: float(np.sqrt(solver.pair_spacetime(r, r))) for k, r in residuals.items()}


def admissible_decay(s: float, beta_max: float, T: float, margin: float = 1.25) -> float:
    """Rate a in exp(-a/t) that keeps exp(s frakS_hat) frakZ^{-1/2} exp(-a/t) bounded near t = 0."""
    return margin * s * beta_max / T


def admissible_source(grid, tgrid, amplitude: float, center: float, width: float, decay: float) -> np.ndarray:
    """amplitude * exp(-decay/t) * cos^2 bump of half-width ``width`` centred at ``center``."""
    x, t = grid.nodes, tgrid.times
    r = np.abs(x - center)
    prof = np.where(r < width, np.cos(0.5 * np.pi * r / width) ** 2, 0.0)
    prof[0] = prof[-1] = 0.0
    tp = np.zeros_like(t)
    tp[1:] = np.exp(-decay / t[1:])
    return amplitude * tp[:, None] * prof[None, :]

"""Penalized HUM synthesis of localized null controls for the linear cascade.

The unknown is the adjoint datum phi = (zeta0, theta0). Writing
Lam phi = (p(0), q(0)) for the cascade driven by the controls
(eta 1_w, psi 1_w) that phi generates, and b = (p(0), q(0)) for the cascade
driven by the sources alone, the functional

    J_eps(phi) = 1/2 |(eta, psi) 1_w|_Q^2 + eps/2 |phi|^2 + <f, (eta, psi, zeta, theta)>_Q

equals 1/2 <Lam phi, phi> + eps/2 |phi|^2 + <b, phi> by discrete duality.
Its minimizer solves (Lam + eps) phi = -b, and the controlled run ends with
(p(0), q(0)) = -eps phi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cascade import CascadeSolver, CascadeState
from .discretization import space_weights
from .errors import ConfigurationError, ConvergenceError
from .weights import WeightRecipe, WeightSet, eval_weight_expr


@dataclass(frozen=True)
class HumConfig:
    eps: float = 1e-6
    cg_tol: float = 1e-10
    cg_max: int = 2000
    s: float = 1.0
    precondition: bool = False

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        if not 0 < self.cg_tol < 1:
            raise ConfigurationError(f"cg_tol must lie in (0, 1), got {self.cg_tol}")
        if int(self.cg_max) < 1:
            raise ConfigurationError("cg_max must be >= 1")


@dataclass
class Sources:
    f1: np.ndarray | None = None
    f2: np.ndarray | None = None
    f3: np.ndarray | None = None
    f4: np.ndarray | None = None

    def as_kwargs(self):
        return {"f1": self.f1, "f2": self.f2, "f3": self.f3, "f4": self.f4}

    def is_zero(self) -> bool:
        return all(a is None or not np.any(a) for a in (self.f1, self.f2, self.f3, self.f4))


@dataclass
class ControlPair:
    h1: np.ndarray
    h2: np.ndarray

    def support_violation(self, mask: np.ndarray) -> float:
        off = mask == 0
        return float(max(np.abs(self.h1[:, off]).max(initial=0.0), np.abs(self.h2[:, off]).max(initial=0.0)))


@dataclass
class HumReport:
    pq0_norm: float
    baseline: float
    iterations: int
    residual: float
    functional_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)

    def as_dict(self):
        return {
            "pq0_norm": self.pq0_norm,
            "baseline": self.baseline,
            "ratio": self.pq0_norm / self.baseline if self.baseline > 0 else 0.0,
            "iterations": self.iterations,
            "residual": self.residual,
        }


def pq_norm_profile(state: CascadeState, solver: CascadeSolver) -> np.ndarray:
    """Discrete L2 norm of (p, q) at every time level."""
    ws = space_weights(solver.grid)
    return np.sqrt((state.p**2 + state.q**2) @ ws)


def uncontrolled_baseline(state: CascadeState, solver: CascadeSolver) -> float:
    return float(pq_norm_profile(state, solver).max())


class HumProblem:
    """Quadratic HUM functional and its Gram operator on one cascade solver."""

    def __init__(self, solver: CascadeSolver, sources: Sources, eps: float):
        self.solver, self.sources, self.eps = solver, sources, eps
        self.ws = space_weights(solver.grid)
        free = solver.solve_extended_linear(**sources.as_kwargs())
        self.free_state = free
        self.b = np.stack([free.p[0], free.q[0]])

    def dot(self, a, b) -> float:
        return float(np.sum((a * b) @ self.ws))

    def adjoint(self, phi):
        return self.solver.solve_adjoint(phi[0], phi[1])

    def controls(self, phi) -> ControlPair:
        h1, h2 = self.solver.controls_from_adjoint(self.adjoint(phi))
        return ControlPair(h1, h2)

    def gram(self, phi) -> np.ndarray:
        h = self.controls(phi)
        st = self.solver.solve_extended_linear(h1=h.h1, h2=h.h2)
        return np.stack([st.p[0], st.q[0]])

    def functional(self, phi) -> float:
        """Direct evaluation through one adjoint solve (no forward cascade involved)."""
        adj = self.adjoint(phi)
        s = self.solver
        h1, h2 = s.controls_from_adjoint(adj)
        val = 0.5 * (s.pair_spacetime(h1, h1) + s.pair_spacetime(h2, h2)) + 0.5 * self.eps * self.dot(phi, phi)
        src = self.sources
        for f, y in ((src.f1, adj.eta_rep), (src.f2, adj.psi_rep), (src.f3, adj.zeta), (src.f4, adj.theta)):
            if f is not None:
                val += s.pair_spacetime(f, y)
        return val

    def gradient(self, phi) -> np.ndarray:
        return self.gram(phi) + self.eps * phi + self.b


def conjugate_gradient(problem: HumProblem, cfg: HumConfig):
    """CG on (Lam + eps) phi = -b in the trapezoidal inner product."""
    shape = problem.b.shape
    phi = np.zeros(shape)
    r = -problem.b.copy()
    bnorm = np.sqrt(problem.dot(problem.b, problem.b))
    hist_J, hist_r = [0.0], [bnorm]
    if bnorm == 0.0:
        return phi, 0, 0.0, hist_J, hist_r
    precond = np.ones(shape)
    if cfg.precondition:
        # diagonal mass scaling; the trapezoid weights are uniform on interior nodes so
        # this only normalizes by dx
        precond = np.full(shape, 1.0 / problem.solver.grid.dx)
    z = precond * r
    d = z.copy()
    rz = problem.dot(r, z)
    for it in range(1, int(cfg.cg_max) + 1):
        Ad = problem.gram(d) + problem.eps * d
        alpha = rz / problem.dot(d, Ad)
        phi = phi + alpha * d
        r = r - alpha * Ad
        rnorm = np.sqrt(problem.dot(r, r))
        hist_r.append(rnorm)
        hist_J.append(0.5 * problem.dot(problem.b, phi) - 0.5 * problem.dot(phi, r))
        if not np.isfinite(rnorm):
            raise ConvergenceError("CG produced non-finite residual", hist_r)
        if rnorm <= cfg.cg_tol * bnorm:
            return phi, it, rnorm / bnorm, hist_J, hist_r
        z = precond * r
        rz_new = problem.dot(r, z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise ConvergenceError(
        f"CG stagnated: relative residual {hist_r[-1] / bnorm:.3e} > {cfg.cg_tol:.1e} after {cfg.cg_max} iterations",
        [h / bnorm for h in hist_r],
    )


def synthesize_null_control(solver: CascadeSolver, sources: Sources, cfg: HumConfig):
    """Return (ControlPair, controlled CascadeState, HumReport)."""
    problem = HumProblem(solver, sources, cfg.eps)
    baseline = uncontrolled_baseline(problem.free_state, solver)
    phi, its, rel, hist_J, hist_r = conjugate_gradient(problem, cfg)
    h = problem.controls(phi)
    state = solver.solve_extended_linear(h1=h.h1, h2=h.h2, **sources.as_kwargs())
    pq0 = float(np.sqrt(problem.dot(np.stack([state.p[0], state.q[0]]), np.stack([state.p[0], state.q[0]]))))
    report = HumReport(pq0, baseline, its, rel, hist_J, hist_r)
    report.phi = phi
    return h, state, report


def _h1_seminorm_sq(y: np.ndarray, dx: float) -> np.ndarray:
    return np.sum(np.diff(y, axis=-1) ** 2, axis=-1) / dx


def _hminus1_sq(y: np.ndarray, dx: float) -> np.ndarray:
    """Squared H^-1 surrogate per time slice: <y, (-Lap_h)^{-1} y> with Dirichlet ends."""
    from scipy.linalg import solve_banded

    n = y.shape[-1] - 2
    ab = np.zeros((3, n))
    ab[0, 1:] = -1.0 / dx**2
    ab[1, :] = 2.0 / dx**2
    ab[2, :-1] = -1.0 / dx**2
    rhs = y[..., 1:-1].T
    sol = solve_banded((1, 1), ab, rhs)
    return dx * np.sum(rhs * sol, axis=0)


def _scaled(weight: np.ndarray, sq: np.ndarray) -> np.ndarray:
    """weight * sqrt(sq) without forming weight**2 (which overflows); 0 where sq == 0."""
    with np.errstate(invalid="ignore", over="ignore"):
        amp = weight * np.sqrt(np.maximum(sq, 0.0))
    return np.where(sq > 0, amp, 0.0)


def _weighted_time_l2(wt: np.ndarray, weight: np.ndarray, sq: np.ndarray) -> float:
    amp = _scaled(weight, sq)
    top = float(np.max(amp, initial=0.0))
    if top == 0.0 or not np.isfinite(top):
        return top
    return top * float(np.sqrt(wt @ (amp / top) ** 2))


E_RECIPES = {
    "state_L2Hm1": WeightRecipe(star=6, hat=-5, power=-13 / 2),
    "control_L2": WeightRecipe(star=18, hat=-17, power=-57 / 2),
    "state_LinfL2_and_L2H1": WeightRecipe(star=18, hat=-17, power=-61 / 2),
    "residual": WeightRecipe(hat=1, power=-1 / 2),
}


def space_E_report(state: CascadeState, h: ControlPair, w: WeightSet, solver: CascadeSolver,
                   residuals: dict | None = None) -> dict:
    """Weighted norms that define membership in the solution space.

    All weights grow like exp(c/t) near t = 0, so they are evaluated at
    t_1..t_M only; the t_0 sample has no finite weight. A norm whose
    maximal weighted contribution sits at t_1 is flagged as non-decaying.
    """
    dx = solver.grid.dx
    wt = solver.tgrid.trapezoid_weights().copy()
    ws = space_weights(solver.grid)
    wt[0] = 0.0
    sl = slice(1, None)
    out = {}

    def weight(key):
        r = eval_weight_expr(w, E_RECIPES[key], allow_growth=True)
        r = r.copy()
        r[0] = 0.0
        return r

    def flag(per_time):
        return bool(np.any(per_time[sl] > 0) and int(np.argmax(per_time[sl])) == 0)

    w1 = weight("state_L2Hm1")
    w3 = weight("state_LinfL2_and_L2H1")
    for name, y in state.fields().items():
        out[f"{name}_L2Hm1"] = _weighted_time_l2(wt, w1, _hminus1_sq(y, dx))
        amp = _scaled(w3, (y**2) @ ws)
        out[f"{name}_LinfL2"] = float(amp[sl].max())
        out[f"{name}_LinfL2_nondecay"] = flag(amp)
        out[f"{name}_L2H1"] = _weighted_time_l2(wt, w3, _h1_seminorm_sq(y, dx) + (y**2) @ ws)
    w2 = weight("control_L2")
    for name, y in (("h1", h.h1), ("h2", h.h2)):
        out[f"{name}_L2"] = _weighted_time_l2(wt, w2, (y**2) @ ws)
    if residuals is not None:
        wr = weight("residual")
        for name, y in residuals.items():
            out[f"{name}_residual"] = _weighted_time_l2(wt, wr, (y**2) @ ws)
    return out

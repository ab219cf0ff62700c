"""Sentinel functional, insensitivity diagnostics and weighted-estimate audits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .cascade import CascadeSolver, random_smooth_field, random_smooth_profile
from .control import ControlPair
from .discretization import Grid1D, TimeGrid, l2_norm, space_weights
from .errors import ConfigurationError
from .kdv import BC, third_difference_dense
from .nonlinear import PicardConfig, picard_solve_nonlinear
from .weights import WeightRecipe, WeightSet, eval_weight_expr


def sentinel_value(u, v, obs_mask, grid: Grid1D, tgrid: TimeGrid) -> float:
    """J = 1/2 ∬_O u^2 + 1/2 ∬_O v^2, trapezoidal in time and space."""
    ws = space_weights(grid) * np.asarray(obs_mask, dtype=float)
    wt = tgrid.trapezoid_weights()
    u, v = np.asarray(u), np.asarray(v)
    return 0.5 * float(wt @ ((u * u + v * v) @ ws))


@dataclass(frozen=True)
class PerturbationSpec:
    uhat0: np.ndarray
    vhat0: np.ndarray
    tau: float

    @classmethod
    def build(cls, uhat0, vhat0, tau: float, grid: Grid1D) -> "PerturbationSpec":
        """Zero the Dirichlet entries and normalize both profiles to unit discrete L2 norm.

        The Neumann-type conditions are enforced by the solver's ghost closure,
        so no further projection is needed.
        """
        out = []
        for name, f in (("uhat0", uhat0), ("vhat0", vhat0)):
            f = np.asarray(f, dtype=float).copy()
            f[0] = f[-1] = 0.0
            n = l2_norm(f, grid)
            if n == 0:
                raise ConfigurationError(f"{name} vanishes after projection")
            out.append(f / n)
        if not tau > 0:
            raise ConfigurationError(f"tau must be positive, got {tau}")
        return cls(out[0], out[1], float(tau))

    def swapped_sign(self) -> "PerturbationSpec":
        return PerturbationSpec(-self.uhat0, -self.vhat0, self.tau)

    def with_tau(self, tau: float) -> "PerturbationSpec":
        return PerturbationSpec(self.uhat0, self.vhat0, float(tau))


def random_perturbation(rng: np.random.Generator, grid: Grid1D, tau: float = 1e-3) -> PerturbationSpec:
    return PerturbationSpec.build(random_smooth_profile(rng, grid, BC.LEFT),
                                  random_smooth_profile(rng, grid, BC.RIGHT), tau, grid)


def _sentinel_at(solver: CascadeSolver, h, xi1, xi2, u0, v0, pic_cfg, linear: bool) -> float:
    if linear:
        st = solver.solve_extended_linear(u0, v0, None if h is None else h.h1, None if h is None else h.h2,
                                          f1=xi1, f2=xi2)
    else:
        st, _ = picard_solve_nonlinear(solver, u0, v0, h, xi1, xi2, pic_cfg)
    return sentinel_value(st.u, st.v, solver.m_obs, solver.grid, solver.tgrid)


def insensitivity_derivative(solver: CascadeSolver, h: ControlPair | None, xi1, xi2, pert: PerturbationSpec,
                             pic_cfg: PicardConfig = PicardConfig(), linear: bool = False) -> float:
    """Centered difference (J(+tau) - J(-tau)) / (2 tau) around zero initial data."""
    tau = pert.tau
    jp = _sentinel_at(solver, h, xi1, xi2, tau * pert.uhat0, tau * pert.vhat0, pic_cfg, linear)
    jm = _sentinel_at(solver, h, xi1, xi2, -tau * pert.uhat0, -tau * pert.vhat0, pic_cfg, linear)
    return (jp - jm) / (2 * tau)


def duality_identity_check(solver: CascadeSolver, h: ControlPair | None, xi1, xi2, pert: PerturbationSpec,
                           pic_cfg: PicardConfig = PicardConfig(), linear: bool = False):
    """Compare the finite-difference derivative with ∫ p(0) uhat0 + q(0) vhat0.

    Returns (lhs, rhs, |lhs - rhs|).
    """
    lhs = insensitivity_derivative(solver, h, xi1, xi2, pert, pic_cfg, linear)
    if linear:
        st = solver.solve_extended_linear(None, None, None if h is None else h.h1,
                                          None if h is None else h.h2, f1=xi1, f2=xi2)
    else:
        st, _ = picard_solve_nonlinear(solver, None, None, h, xi1, xi2, pic_cfg)
    rhs = solver.pair_space(st.p[0], pert.uhat0) + solver.pair_space(st.q[0], pert.vhat0)
    return lhs, rhs, abs(lhs - rhs)


# --- weighted-estimate audits -------------------------------------------------

ADJOINT_BC = {"eta": BC.RIGHT, "psi": BC.LEFT, "zeta": BC.LEFT, "theta": BC.RIGHT}


def _derivatives(z: np.ndarray, dx: float, bc: BC):
    zx = np.gradient(z, dx, axis=-1)
    zxx = np.zeros_like(z)
    zxx[:, 1:-1] = (z[:, 2:] - 2 * z[:, 1:-1] + z[:, :-2]) / dx**2
    zxx[:, 0] = (2 * z[:, 0] - 5 * z[:, 1] + 4 * z[:, 2] - z[:, 3]) / dx**2
    zxx[:, -1] = (2 * z[:, -1] - 5 * z[:, -2] + 4 * z[:, -3] - z[:, -4]) / dx**2
    zxxx = np.zeros_like(z)
    zxxx[:, 1:-1] = z[:, 1:-1] @ third_difference_dense_cached(z.shape[-1] - 2, dx, bc).T
    return zx, zxx, zxxx


_D3_CACHE: dict = {}


def third_difference_dense_cached(N: int, dx: float, bc: BC) -> np.ndarray:
    key = (N, dx, bc)
    if key not in _D3_CACHE:
        _D3_CACHE[key] = third_difference_dense(Grid1D(dx * (N + 1), N), bc)
    return _D3_CACHE[key]


def carleman_I(z: np.ndarray, w: WeightSet, bc: BC) -> float:
    """Discrete I(z, s): weighted L2 norms of z, z_x, z_xx plus the H^3 term."""
    s, dx = w.s, w.grid.dx
    ws = space_weights(w.grid)
    wt = w.tgrid.trapezoid_weights()
    zx, zxx, zxxx = _derivatives(z, dx, bc)
    total = 0.0
    for power, sp, f in ((5, 5, z), (3, 3, zx), (1, 1, zxx)):
        W = eval_weight_expr(w, WeightRecipe(field=-2, power=power, family="phi"))
        total += s**sp * float(wt @ ((W * f * f) @ ws))
    Wh = eval_weight_expr(w, WeightRecipe(hat=-2, power=-3, family="phi"))
    h3 = (z * z + zx * zx + zxx * zxx + zxxx * zxxx) @ ws
    total += s * float(wt @ (Wh * h3))
    return total


def _random_adjoint_member(solver: CascadeSolver, rng: np.random.Generator):
    g, tg = solver.grid, solver.tgrid
    zeta0 = random_smooth_profile(rng, g, BC.LEFT)
    theta0 = random_smooth_profile(rng, g, BC.RIGHT)
    gs = [random_smooth_field(rng, g, tg) for _ in range(4)]
    return zeta0, theta0, gs


def _stats(ratios, skipped):
    r = np.asarray(ratios, dtype=float)
    return {
        "count": int(r.size),
        "skipped": int(skipped),
        "max": float(r.max()) if r.size else float("nan"),
        "median": float(np.median(r)) if r.size else float("nan"),
        "all_finite": bool(np.all(np.isfinite(r))),
        "ratios": r.tolist(),
    }


def carleman_ratio_audit(solver: CascadeSolver, w: WeightSet, ensemble: int = 20, rng=None,
                         members=None, omega0_mask=None) -> dict:
    """LHS/RHS of the main weighted estimate over a random ensemble of adjoint data and sources."""
    rng = np.random.default_rng(0) if rng is None else rng
    s, dx = w.s, w.grid.dx
    ws = space_weights(w.grid)
    wt = w.tgrid.trapezoid_weights()
    m0 = solver.m_omega0 if omega0_mask is None else omega0_mask
    Wg = eval_weight_expr(w, WeightRecipe(star=-12, hat=10, power=13, family="phi"))
    Wo = eval_weight_expr(w, WeightRecipe(star=-36, hat=34, power=57, family="phi"))
    ratios, skipped, rows = [], 0, []
    members = members if members is not None else [_random_adjoint_member(solver, rng) for _ in range(ensemble)]
    for zeta0, theta0, gs in members:
        adj = solver.solve_adjoint(zeta0, theta0, *gs)
        lhs = sum(carleman_I(f, w, ADJOINT_BC[name]) for name, f in adj.fields().items())
        gx2 = sum(np.gradient(gi, dx, axis=-1) ** 2 for gi in gs)
        rhs = s**5 * float(wt @ (Wg * (gx2 @ ws)))
        rhs += s**25 * float(wt @ (Wo * ((adj.eta**2 + adj.psi**2) @ (ws * m0))))
        if rhs == 0.0 and lhs == 0.0:
            skipped += 1
            continue
        ratios.append(lhs / rhs)
        rows.append({"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs})
    out = _stats(ratios, skipped)
    out["rows"] = rows
    return out


def observability_ratio_audit(solver: CascadeSolver, w: WeightSet, ensemble: int = 20, rng=None,
                              members=None, omega0_mask=None) -> dict:
    """LHS/RHS of the observability estimate with the modified weights."""
    rng = np.random.default_rng(0) if rng is None else rng
    dx = w.grid.dx
    ws = space_weights(w.grid)
    wt = w.tgrid.trapezoid_weights()
    m0 = solver.m_omega0 if omega0_mask is None else omega0_mask
    W_inf = eval_weight_expr(w, WeightRecipe(hat=-2, power=1))
    W_grad = eval_weight_expr(w, WeightRecipe(hat=-2, power=3))
    Wg = eval_weight_expr(w, WeightRecipe(star=-12, hat=10, power=13))
    Wo = eval_weight_expr(w, WeightRecipe(star=-36, hat=34, power=57))
    ratios, skipped, rows = [], 0, []
    members = members if members is not None else [_random_adjoint_member(solver, rng) for _ in range(ensemble)]
    for zeta0, theta0, gs in members:
        adj = solver.solve_adjoint(zeta0, theta0, *gs)
        f = adj.fields()
        lhs = float(f["zeta"][-1] ** 2 @ ws + f["theta"][-1] ** 2 @ ws)
        for y in f.values():
            lhs += float(np.max(W_inf * ((y * y) @ ws)))
            lhs += float(wt @ (W_grad * (np.gradient(y, dx, axis=-1) ** 2 @ ws)))
        gx2 = sum(np.gradient(gi, dx, axis=-1) ** 2 for gi in gs)
        rhs = float(wt @ (Wg * (gx2 @ ws)))
        rhs += float(wt @ (Wo * ((adj.eta**2 + adj.psi**2) @ (ws * m0))))
        if rhs == 0.0 and lhs == 0.0:
            skipped += 1
            continue
        ratios.append(lhs / rhs)
        rows.append({"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs})
    out = _stats(ratios, skipped)
    out["rows"] = rows
    return out


def observability_trend(solver: CascadeSolver, w: WeightSet, intervals, ensemble: int = 5, seed: int = 0):
    """Max observability ratio as the observation window omega0 shrinks (weights held fixed)."""
    from .discretization import indicator_mask

    rng = np.random.default_rng(seed)
    members = [_random_adjoint_member(solver, rng) for _ in range(ensemble)]
    table = []
    for iv in intervals:
        m0 = indicator_mask(iv, solver.grid)
        st = observability_ratio_audit(solver, w, members=members, omega0_mask=m0)
        table.append({"omega0": tuple(iv), "nodes": int(m0.sum()), "max_ratio": st["max"]})
    return table


BASELINE_FILE = "audit_baseline.json"


def baseline_path() -> Path:
    return Path(str(resources.files("hskdv") / "data" / BASELINE_FILE))


def load_baseline(path: Path | None = None) -> dict | None:
    p = baseline_path() if path is None else Path(path)
    if not p.exists():
        return None
    return json.loads(p.read_text())


def store_baseline(values: dict, path: Path | None = None) -> Path:
    p = baseline_path() if path is None else Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(values, indent=2, sort_keys=True) + "\n")
    return p


def regression_check(current: dict, baseline: dict, factor: float = 2.0) -> dict:
    """Each stored max ratio must not be exceeded by more than ``factor``."""
    out = {}
    for key, ref in baseline.items():
        if key in current:
            out[key] = bool(np.isfinite(current[key]) and current[key] <= factor * ref)
    return out

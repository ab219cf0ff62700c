"""Shared oracles for the solver tests (manufactured solutions, dissipativity runs)."""

import numpy as np

from hskdv.cascade import random_smooth_profile
from hskdv.discretization import l2_norm, make_grid, make_time_grid
from hskdv.kdv import BC, Direction, KdvOperatorSpec, solve_linear_kdv

# the eight scalar equations of the state, cascade and adjoint systems
EQUATIONS = {
    "state u": KdvOperatorSpec(-0.5, BC.LEFT, Direction.FORWARD),
    "state v": KdvOperatorSpec(1.0, BC.RIGHT, Direction.FORWARD),
    "cascade p": KdvOperatorSpec(0.5, BC.RIGHT, Direction.BACKWARD),
    "cascade q": KdvOperatorSpec(-1.0, BC.LEFT, Direction.BACKWARD),
    "adjoint eta": KdvOperatorSpec(0.5, BC.RIGHT, Direction.BACKWARD),
    "adjoint psi": KdvOperatorSpec(-1.0, BC.LEFT, Direction.BACKWARD),
    "adjoint zeta": KdvOperatorSpec(-0.5, BC.LEFT, Direction.FORWARD),
    "adjoint theta": KdvOperatorSpec(1.0, BC.RIGHT, Direction.FORWARD),
}


def _profile(x, bc):
    S, C, pi = np.sin(np.pi * x), np.cos(np.pi * x), np.pi
    if BC(bc) is BC.LEFT:
        return x * S, -3 * pi**2 * S - x * pi**3 * C
    return (1 - x) * S, 3 * pi**2 * S - (1 - x) * pi**3 * C


def manufactured_error(spec: KdvOperatorSpec, N: int, M: int, T: float = 0.5) -> float:
    """max_k L2 error against y = cos(t) s(x) with s meeting the boundary conditions of ``spec``."""
    g, tg = make_grid(1.0, N), make_time_grid(T, M)
    s, s3 = _profile(g.nodes, spec.bc)
    t = tg.times[:, None]
    sign = 1.0 if spec.direction is Direction.FORWARD else -1.0
    exact = np.cos(t) * s
    f = sign * (-np.sin(t)) * s + spec.a * np.cos(t) * s3
    f[:, [0, -1]] = 0.0
    datum = exact[0] if spec.direction is Direction.FORWARD else exact[-1]
    y = solve_linear_kdv(spec, g, tg, datum, f)
    return max(l2_norm(r, g) for r in y - exact)


def dissipation_drift(spec: KdvOperatorSpec, rng, N=64, M=128, T=0.5) -> float:
    """Largest per-step increase of the L2 norm along the direction of integration."""
    g, tg = make_grid(1.0, N), make_time_grid(T, M)
    y = solve_linear_kdv(spec, g, tg, random_smooth_profile(rng, g, spec.bc))
    norms = np.array([l2_norm(r, g) for r in y])
    if spec.direction is Direction.BACKWARD:
        norms = norms[::-1]
    return float(np.max(np.diff(norms)))

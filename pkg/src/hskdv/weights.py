"""Carleman weight functions on the discrete grids.

Two families share the spatial profile beta:

* the singular family  xi = 1/(t(T-t)),  phi = xi * beta,
* the modified family  frakZ = xi on (0, T/2], 4/T^2 afterwards,  frakS = frakZ * beta.

Starred and hatted profiles are beta(l_half) = 1 and max(beta(0), beta(L))
times the temporal factor. Endpoint samples where the temporal factor is
infinite are stored as ``inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import Grid1D, TimeGrid
from .errors import ConfigurationError


@dataclass(frozen=True)
class WeightConfig:
    omega0: tuple
    s: float
    T: float

    def __post_init__(self):
        l0, l1 = (float(v) for v in self.omega0)
        if not l0 < l1:
            raise ConfigurationError(f"omega0 must satisfy l0 < l1, got {self.omega0}")
        if not self.s > 0:
            raise ConfigurationError(f"s must be positive, got {self.s}")
        if not self.T > 0:
            raise ConfigurationError(f"T must be positive, got {self.T}")
        object.__setattr__(self, "omega0", (l0, l1))

    @property
    def l_half(self) -> float:
        return 0.5 * (self.omega0[0] + self.omega0[1])


@dataclass(frozen=True)
class WeightSet:
    s: float
    K1: float
    K2: float
    M_const: float
    l_half: float
    beta: np.ndarray
    beta_max: float
    xi: np.ndarray
    frakZ: np.ndarray
    phi: np.ndarray
    frakS: np.ndarray
    phi_star: np.ndarray
    phi_hat: np.ndarray
    frakS_star: np.ndarray
    frakS_hat: np.ndarray
    grid: Grid1D
    tgrid: TimeGrid

    def beta_fn(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 + self.K1 * (1.0 - np.exp(-self.K2 * (x - self.l_half) ** 2))


def build_weights(cfg: WeightConfig, grid: Grid1D, tgrid: TimeGrid, K1: float | None = None) -> WeightSet:
    """Sample every weight; ``K1`` defaults to 1/(70 M)."""
    l0, l1 = cfg.omega0
    L = grid.L
    if not (0 < l0 and l1 < L):
        raise ConfigurationError(f"omega0=({l0}, {l1}) must lie strictly inside (0, {L})")
    if abs(cfg.T - tgrid.T) > 1e-12 * tgrid.T:
        raise ConfigurationError("weight horizon T differs from the time grid")
    lh = cfg.l_half
    K2 = 4.0 / (l1 - l0) ** 2
    M_const = max(1 - np.exp(-K2 * lh**2), 1 - np.exp(-K2 * (L - lh) ** 2))
    if K1 is None:
        K1 = 1.0 / (70.0 * M_const)
    x, t, T = grid.nodes, tgrid.times, tgrid.T
    beta = 1.0 + K1 * (1.0 - np.exp(-K2 * (x - lh) ** 2))
    beta_max = max(1.0 + K1 * (1 - np.exp(-K2 * lh**2)), 1.0 + K1 * (1 - np.exp(-K2 * (L - lh) ** 2)))

    xi = np.full(t.shape, np.inf)
    inner = (t > 0) & (t < T)
    xi[inner] = 1.0 / (t[inner] * (T - t[inner]))
    frakZ = np.where(t <= T / 2, xi, 4.0 / T**2)
    with np.errstate(invalid="ignore"):
        phi = xi[:, None] * beta[None, :]
        frakS = frakZ[:, None] * beta[None, :]
    return WeightSet(
        s=cfg.s, K1=float(K1), K2=K2, M_const=float(M_const), l_half=lh,
        beta=beta, beta_max=float(beta_max), xi=xi, frakZ=frakZ, phi=phi, frakS=frakS,
        phi_star=xi.copy(), phi_hat=xi * beta_max,
        frakS_star=frakZ.copy(), frakS_hat=frakZ * beta_max,
        grid=grid, tgrid=tgrid,
    )


def weight_gap_check(w: WeightSet):
    """Minimal (36 phi* - 35 phi_hat)/xi over interior times and whether it is positive."""
    inner = np.isfinite(w.xi)
    ratio = (36.0 * w.phi_star[inner] - 35.0 * w.phi_hat[inner]) / w.xi[inner]
    c0 = float(ratio.min())
    return c0, c0 > 0


def beta_derivative_checks(w: WeightSet) -> dict:
    """Sign diagnostics for beta: slopes at the ends and curvature off omega0.

    Discrete differences are reported, but the signs are judged on the closed
    form derivatives: with the default K2 the profile is flat to ~1e-70 near
    the ends, so one-sided differences round to exactly zero.
    """
    b, dx, x = w.beta, w.grid.dx, w.grid.nodes
    K1, K2, lh = w.K1, w.K2, w.l_half
    r = x - lh
    g = np.exp(-K2 * r**2)
    bx = 2 * K1 * K2 * r * g
    bxx = 2 * K1 * K2 * g * (1 - 2 * K2 * r**2)
    outside = np.abs(r) > 1.0 / np.sqrt(K2)  # closure of omega0 has half-width (l1 - l0)/2
    d2 = np.full_like(b, np.nan)
    d2[1:-1] = (b[2:] - 2 * b[1:-1] + b[:-2]) / dx**2
    return {
        "beta_x_0": float(bx[0]),
        "beta_x_L": float(bx[-1]),
        "max_beta_xx_outside": float(bxx[outside].max()),
        "min_abs_beta_x_outside": float(np.abs(bx[outside]).min()),
        "discrete_beta_x_0": float((b[1] - b[0]) / dx),
        "discrete_beta_x_L": float((b[-1] - b[-2]) / dx),
        "discrete_max_beta_xx_outside": float(np.nanmax(d2[outside])),
        "signs_ok": bool(bx[0] < 0 < bx[-1] and bxx[outside].max() < 0),
    }


@dataclass(frozen=True)
class WeightRecipe:
    """exp(s (star X* + hat X_hat + field X(t,x))) * Z**power.

    ``family`` selects (X, Z) = (frakS, frakZ) with "S" or (phi, xi) with "phi".
    """

    star: float = 0.0
    hat: float = 0.0
    power: float = 0.0
    field: float = 0.0
    family: str = "S"


def _net_rate(w: WeightSet, r: WeightRecipe) -> float:
    # worst-case coefficient of s*Z in the exponent as Z -> infinity
    field_term = r.field * (w.beta_max if r.field > 0 else 1.0)
    return r.star + r.hat * w.beta_max + field_term


def eval_weight_expr(w: WeightSet, recipe: WeightRecipe, allow_growth: bool = False) -> np.ndarray:
    """Evaluate a composite weight on the time grid (or the space-time grid if ``field`` != 0).

    Samples where the temporal factor is infinite take the continuous limit:
    0 for decaying recipes, ``inf`` for growing ones. A growing recipe raises
    unless ``allow_growth`` is set.
    """
    if recipe.family == "S":
        Z, Xs, Xh, X = w.frakZ, w.frakS_star, w.frakS_hat, w.frakS
    elif recipe.family == "phi":
        Z, Xs, Xh, X = w.xi, w.phi_star, w.phi_hat, w.phi
    else:
        raise ConfigurationError(f"unknown weight family {recipe.family!r}")
    net = _net_rate(w, recipe)
    grows = net > 0 or (net == 0 and recipe.power > 0)
    if grows and not allow_growth:
        raise ConfigurationError(
            f"weight recipe {recipe} grows without bound as the temporal factor blows up (net rate {net:.4g})"
        )
    finite = np.isfinite(Z)
    s = w.s
    if recipe.field == 0.0:
        out = np.empty(Z.shape)
        logw = s * (recipe.star * Xs[finite] + recipe.hat * Xh[finite]) + recipe.power * np.log(Z[finite])
        out[finite] = np.exp(logw)
    else:
        out = np.empty(X.shape)
        Zf = Z[finite][:, None]
        logw = (s * (recipe.star * Xs[finite][:, None] + recipe.hat * Xh[finite][:, None]
                     + recipe.field * X[finite]) + recipe.power * np.log(Zf))
        out[finite] = np.exp(logw)
    if grows:
        out[~finite] = np.inf
    elif net == 0 and recipe.power == 0:
        out[~finite] = 1.0
    else:
        out[~finite] = 0.0
    return out

import numpy as np
import pytest

from hskdv.cascade import BC, CascadeState, random_smooth_profile
from hskdv.control import HumConfig
from hskdv.errors import ConfigurationError, ConvergenceError
from hskdv.nonlinear import (OuterConfig, PicardConfig, admissible_decay, admissible_source, amplitude_bisection,
                             backward_coupling, nonlinear_null_control, picard_solve_nonlinear, residual_norms,
                             residual_Y, state_norm)
from hskdv.sentinel import sentinel_value


@pytest.mark.parametrize("kw", [{"R": 0}, {"tol": 0}, {"coupling": "other"}])
def test_picard_config_validation(kw):
    with pytest.raises(ConfigurationError):
        PicardConfig(**kw)


def test_zero_data_converges_in_one_iteration(small):
    st, hist = picard_solve_nonlinear(small["solver"])
    assert hist.increments == [0.0]
    assert state_norm(st, small["solver"]) == 0.0


def test_contraction_at_small_amplitude(desk):
    st, hist = picard_solve_nonlinear(desk["solver"], xi1=desk["xi1"], xi2=desk["xi2"])
    assert all(r < 1 for r in hist.ratios)
    resolved = hist.resolved_ratios()
    assert len(resolved) >= 1 and all(r < 1e-3 for r in resolved)


def test_picard_fixed_point_has_tiny_residual(desk):
    st, _ = picard_solve_nonlinear(desk["solver"], xi1=desk["xi1"], xi2=desk["xi2"])
    res = residual_norms(desk["solver"], residual_Y(desk["solver"], st, None, desk["xi1"], desk["xi2"]))
    scale = state_norm(st, desk["solver"])
    assert max(res.values()) < 1e-10 * scale


def test_residual_detects_perturbed_state(desk):
    s = desk["solver"]
    st, _ = picard_solve_nonlinear(s, xi1=desk["xi1"], xi2=desk["xi2"])
    bump = 1e-3 * state_norm(st, s) * np.outer(np.sin(np.pi * s.tgrid.times / s.tgrid.T), np.sin(np.pi * s.grid.nodes))
    bad = CascadeState(st.u + bump, st.v, st.p, st.q, st.p_rep, st.q_rep)
    base = residual_norms(s, residual_Y(s, st, None, desk["xi1"], desk["xi2"]))
    pert = residual_norms(s, residual_Y(s, bad, None, desk["xi1"], desk["xi2"]))
    assert pert["u"] > 1e6 * base["u"]


def test_leaving_the_ball_raises_with_history(small):
    with pytest.raises(ConvergenceError) as exc:
        unit = small["xi1"] / np.abs(small["xi1"]).max()
        picard_solve_nonlinear(small["solver"], xi1=1e6 * unit, cfg=PicardConfig(R=1.0))
    assert exc.value.history and "increment" in exc.value.history[0]


def test_amplitude_bisection_brackets_divergence(small):
    s = small["solver"]
    unit = small["xi1"] / np.abs(small["xi1"]).max()

    def solve_at(a):
        picard_solve_nonlinear(s, xi1=a * unit, cfg=PicardConfig(R=1.0, max_outer=40))

    a_star = amplitude_bisection(solve_at, 1e-3, 1e6, steps=10)
    assert 1e-3 <= a_star < 1e6
    with pytest.raises(ConvergenceError):
        solve_at(1e6)


def test_admissible_source_decays_at_zero(desk):
    w = desk["w"]
    a = admissible_decay(1.0, w.beta_max, 0.5)
    assert a == pytest.approx(1.25 * w.beta_max / 0.5)
    src = admissible_source(desk["grid"], desk["tgrid"], 1.0, 0.4, 0.1, a)
    assert not np.any(src[0]) and not np.any(src[:, [0, -1]])
    assert np.abs(src[1]).max() < 1e-100
    assert np.all(np.abs(src[:, np.abs(desk["grid"].nodes - 0.4) >= 0.1]) == 0)


def test_couplings_differ_only_in_backward_terms(small, rng):
    g = small["grid"]
    st = small["solver"].solve_extended_linear(random_smooth_profile(rng, g, BC.LEFT),
                                               random_smooth_profile(rng, g, BC.RIGHT))
    a3, a4 = backward_coupling(st, g.dx, "adjoint")
    p3, p4 = backward_coupling(st, g.dx, "literal")
    assert not np.allclose(a3, p3)
    with pytest.raises(ConfigurationError):
        backward_coupling(st, g.dx, "neither")


def _first_variation_defect(solver, xi1, xi2, coupling, uhat, taus):
    cfg = PicardConfig(coupling=coupling)
    base, _ = picard_solve_nonlinear(solver, xi1=xi1, xi2=xi2, cfg=cfg)
    rhs = solver.pair_space(base.p[0], uhat)
    out = []
    for tau in taus:
        j = []
        for sgn in (1, -1):
            st, _ = picard_solve_nonlinear(solver, sgn * tau * uhat, None, None, xi1, xi2, cfg)
            j.append(sentinel_value(st.u, st.v, solver.m_obs, solver.grid, solver.tgrid))
        out.append(abs((j[0] - j[1]) / (2 * tau) - rhs) / abs(rhs))
    return out


def test_adjoint_coupling_gives_exact_first_variation(small, rng):
    """p(0) is the sentinel derivative only with the transposed-tangent coupling."""
    s, g, tg = small["solver"], small["grid"], small["tgrid"]
    # strong, non-decaying sources so the background state is far from zero
    xi1 = admissible_source(g, tg, 20.0, 0.3, 0.1, 0.0)
    xi2 = admissible_source(g, tg, 20.0, 0.6, 0.1, 0.0)
    uhat = random_smooth_profile(rng, g, BC.LEFT)
    adj = _first_variation_defect(s, xi1, xi2, "adjoint", uhat, (1e-1, 1e-2))
    pap = _first_variation_defect(s, xi1, xi2, "literal", uhat, (1e-1, 1e-2))
    assert adj[1] < 0.05 * adj[0]           # O(tau^2)
    assert pap[1] > 0.5 * pap[0] > 1e-3     # saturates at the coupling mismatch
    assert adj[1] < 1e-2 * pap[1]


def test_nonlinear_null_control_small(small):
    # on the coarse grid eps = 1e-6 leaves p(0) almost untouched; a smaller penalty reaches the target
    h, st, rows = nonlinear_null_control(small["solver"], small["xi1"], small["xi2"],
                                         HumConfig(eps=1e-10, cg_tol=1e-12, cg_max=3000), PicardConfig(),
                                         OuterConfig(target_ratio=1e-2, control_tol=1e-6, max_rounds=10))
    assert rows[-1]["pq0_norm"] <= 1e-2 * rows[0]["baseline"]
    assert rows[-1]["pq0_norm"] < rows[0]["pq0_norm"]
    assert len(rows) - 1 <= 10


def test_outer_loop_reports_unreachable_target(small):
    with pytest.raises(ConvergenceError) as exc:
        nonlinear_null_control(small["solver"], small["xi1"], small["xi2"], HumConfig(eps=1e-6, cg_tol=1e-12),
                               PicardConfig(), OuterConfig(target_ratio=1e-6, max_rounds=3))
    assert len(exc.value.history) == 4 and exc.value.history[-1]["round"] == 3

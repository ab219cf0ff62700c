import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hskdv.discretization import make_grid, make_time_grid
from hskdv.errors import ConfigurationError
from hskdv.weights import (WeightConfig, WeightRecipe, beta_derivative_checks, build_weights, eval_weight_expr,
                           weight_gap_check)

G, TG = make_grid(1.0, 64), make_time_grid(0.5, 128)
CFG = WeightConfig((0.48, 0.56), 1.0, 0.5)


def test_desk_constants():
    w = build_weights(CFG, G, TG)
    assert w.K2 == pytest.approx(625.0)
    assert w.M_const == pytest.approx(1.0)
    assert w.K1 == pytest.approx(1 / 70)


def test_gap_constant_is_one_half():
    c0, ok = weight_gap_check(build_weights(CFG, G, TG))
    assert ok and c0 == pytest.approx(0.5, abs=1e-12)


def test_gap_vanishes_at_double_K1():
    w = build_weights(CFG, G, TG)
    c0, ok = weight_gap_check(build_weights(CFG, G, TG, K1=1 / (35 * w.M_const)))
    assert c0 == pytest.approx(0.0, abs=1e-12)


def test_gap_is_one_without_spatial_variation():
    c0, ok = weight_gap_check(build_weights(CFG, G, TG, K1=0.0))
    assert ok and c0 == pytest.approx(1.0)


def test_xi_midpoint_and_endpoints():
    w = build_weights(CFG, G, TG)
    assert w.xi[64] == pytest.approx(16.0)
    assert np.isinf(w.xi[0]) and np.isinf(w.xi[-1])
    # frakZ is frozen at 4/T^2 on the second half
    np.testing.assert_allclose(w.frakZ[64:], 16.0)


def test_beta_shape():
    w = build_weights(CFG, G, TG)
    assert w.beta_fn(w.l_half) == pytest.approx(1.0)
    assert w.beta.min() >= 1.0 and w.beta.max() <= w.beta_max + 1e-15
    np.testing.assert_allclose(w.phi_star[1:-1], w.xi[1:-1])
    np.testing.assert_allclose(w.phi_hat[1:-1], w.beta_max * w.xi[1:-1])


def test_beta_derivative_signs():
    chk = beta_derivative_checks(build_weights(CFG, G, TG))
    assert chk["signs_ok"]
    assert chk["beta_x_0"] < 0 < chk["beta_x_L"]


def test_growing_recipe_is_rejected():
    w = build_weights(CFG, G, TG)
    with pytest.raises(ConfigurationError):
        eval_weight_expr(w, WeightRecipe(star=6, hat=-5, power=-13 / 2))
    grown = eval_weight_expr(w, WeightRecipe(star=6, hat=-5, power=-13 / 2), allow_growth=True)
    assert np.isinf(grown[0])


@pytest.mark.parametrize("recipe", [WeightRecipe(hat=-2, power=1), WeightRecipe(star=-12, hat=10, power=13),
                                    WeightRecipe(star=-36, hat=34, power=57),
                                    WeightRecipe(star=-12, hat=10, power=13, family="phi")])
def test_decaying_recipes_are_finite(recipe):
    v = eval_weight_expr(build_weights(CFG, G, TG), recipe)
    assert np.all(np.isfinite(v)) and v[0] == 0.0


def test_bad_configs():
    with pytest.raises(ConfigurationError):
        WeightConfig((0.6, 0.5), 1.0, 0.5)
    with pytest.raises(ConfigurationError):
        WeightConfig((0.4, 0.5), 0.0, 0.5)
    with pytest.raises(ConfigurationError):
        build_weights(WeightConfig((0.0, 0.5), 1.0, 0.5), G, TG)
    with pytest.raises(ConfigurationError):
        build_weights(WeightConfig((0.4, 0.5), 1.0, 0.7), G, TG)


@settings(max_examples=40, deadline=None)
@given(l0=st.floats(0.05, 0.8), width=st.floats(0.02, 0.15))
def test_gap_matches_closed_form(l0, width):
    """(36 phi* - 35 phi_hat)/xi is the constant 36 - 35 beta_max = 1/2 whenever M_const is attained."""
    cfg = WeightConfig((l0, min(l0 + width, 0.95)), 1.0, 0.5)
    w = build_weights(cfg, make_grid(1.0, 32), make_time_grid(0.5, 16))
    c0, _ = weight_gap_check(w)
    assert c0 == pytest.approx(36 - 35 * w.beta_max, abs=1e-12)
    assert c0 == pytest.approx(0.5, abs=1e-12)

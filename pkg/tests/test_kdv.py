import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hskdv.discretization import make_grid, make_time_grid
from hskdv.errors import ConfigurationError
from hskdv.kdv import (BC, Direction, KdvOperatorSpec, KdvStepper, d3_interior, first_difference,
                       first_difference_transpose, nonlinear_term, third_difference_dense)

from helpers import EQUATIONS, dissipation_drift, manufactured_error


def test_d3_exact_on_cubic():
    g = make_grid(1.0, 20)
    np.testing.assert_allclose(d3_interior(g.nodes**3, g.dx), 6.0, rtol=1e-8)


def test_d3_of_sine_vanishes_at_midpoint():
    g = make_grid(1.0, 99)
    d3 = d3_interior(np.sin(np.pi * g.nodes), g.dx)
    mid = np.argmin(np.abs(g.nodes[2:-2] - 0.5))
    assert abs(d3[mid]) < 1e-3


def test_right_closure_is_minus_transpose_of_left():
    g = make_grid(1.0, 16)
    np.testing.assert_allclose(third_difference_dense(g, BC.RIGHT), -third_difference_dense(g, BC.LEFT).T)


@pytest.mark.parametrize("a,bc", [(-0.5, BC.LEFT), (-1.0, BC.LEFT), (0.5, BC.RIGHT), (1.0, BC.RIGHT)])
def test_operator_is_dissipative(a, bc):
    g = make_grid(1.0, 20)
    A = a * third_difference_dense(g, bc)
    sym = np.linalg.eigvalsh(A + A.T)
    assert sym.min() >= -1e-9 * np.abs(sym).max() and sym.max() > 0


def test_spec_rejects_unsupported_coefficient():
    with pytest.raises(ConfigurationError):
        KdvOperatorSpec(0.7, BC.LEFT)


def test_spec_accepts_strings():
    s = KdvOperatorSpec(1.0, "right", "backward")
    assert s.bc is BC.RIGHT and s.direction is Direction.BACKWARD


def test_theta_range():
    g, tg = make_grid(1.0, 16), make_time_grid(0.5, 8)
    with pytest.raises(ConfigurationError):
        KdvStepper(EQUATIONS["state u"], g, tg, theta=0.3)


@pytest.mark.parametrize("name", list(EQUATIONS))
def test_zero_source_norm_non_increasing(name, rng):
    assert dissipation_drift(EQUATIONS[name], rng) <= 1e-8


@pytest.mark.parametrize("name", ["state u", "state v", "cascade p", "cascade q"])
def test_manufactured_solution_second_order(name):
    errs = [manufactured_error(EQUATIONS[name], N, 2 * (N + 1)) for N in (15, 31, 63)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8), (errs, orders)


@pytest.mark.parametrize("name", ["cascade p", "cascade q"])
def test_dual_march_is_exact_transpose(name, rng):
    """<z, march(y0, f)>_Q == <values[0], y0> + <rep, f>_Q for the forward twin of a backward spec.

    The twin carries the transposed operator: (a, bc) -> (-a, flipped bc).
    """
    spec = EQUATIONS[name]
    g, tg = make_grid(1.0, 20), make_time_grid(0.5, 16)
    fwd = KdvOperatorSpec(-spec.a, spec.bc.flipped(), Direction.FORWARD)
    y0 = rng.normal(size=g.N + 2)
    y0[[0, -1]] = 0
    f, z = rng.normal(size=(2, tg.M + 1, g.N + 2))
    f[:, [0, -1]] = z[:, [0, -1]] = 0
    y = KdvStepper(fwd, g, tg).march(y0, f)
    values, rep = KdvStepper(spec, g, tg).dual(z)
    wt = tg.trapezoid_weights()
    lhs = wt @ np.sum(z * y, axis=1)
    rhs = values[0] @ y0 + wt @ np.sum(rep * f, axis=1)
    assert lhs == pytest.approx(rhs, rel=1e-11)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_first_difference_transpose(seed):
    g = make_grid(1.0, 12)
    r = np.random.default_rng(seed)
    a, b = r.normal(size=(2, g.N + 2))
    a[[0, -1]] = b[[0, -1]] = 0
    assert first_difference(a, g.dx) @ b == pytest.approx(a @ first_difference_transpose(b, g.dx), abs=1e-9)


def test_nonlinear_term_boundary_and_value():
    g = make_grid(1.0, 50)
    y = np.sin(np.pi * g.nodes)
    n = nonlinear_term(y, y, 3.0, g.dx)
    assert n[0] == 0 and n[-1] == 0
    exact = 3 * y * np.pi * np.cos(np.pi * g.nodes)
    np.testing.assert_allclose(n[1:-1], exact[1:-1], atol=5e-3)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hskdv.discretization import (BandedMatrix, indicator_mask, inner, l2_norm, make_grid, make_time_grid,
                                  solve_banded, spacetime_inner, space_weights)
from hskdv.errors import ConfigurationError, NumericError


def test_grid_spacing_and_nodes():
    g = make_grid(1.0, 9)
    assert g.dx == pytest.approx(0.1)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == pytest.approx(1.0)
    assert g.interior.shape == (9,)


@pytest.mark.parametrize("L,N", [(0.0, 10), (-1.0, 10), (1.0, 7), (1.0, 9.5)])
def test_grid_rejects_bad_input(L, N):
    with pytest.raises(ConfigurationError):
        make_grid(L, N)


def test_time_grid_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        make_time_grid(0.5, 0)


def test_l2_norm_of_sine():
    g = make_grid(1.0, 199)
    assert l2_norm(np.sin(np.pi * g.nodes), g) == pytest.approx(1 / np.sqrt(2), abs=1e-10)


def test_l2_norm_shape_check():
    with pytest.raises(ConfigurationError):
        l2_norm(np.zeros(5), make_grid(1.0, 9))


def test_trapezoid_weights_sum_to_length():
    g, tg = make_grid(2.0, 30), make_time_grid(0.5, 17)
    assert space_weights(g).sum() == pytest.approx(2.0)
    assert tg.trapezoid_weights().sum() == pytest.approx(0.5)
    one = np.ones((tg.M + 1, g.N + 2))
    assert spacetime_inner(one, one, g, tg) == pytest.approx(1.0)


def test_indicator_mask_strict_interior():
    g = make_grid(1.0, 19)
    m = indicator_mask((0.45, 0.8), g)
    np.testing.assert_allclose(g.nodes[m == 1], [0.5, 0.55, 0.6, 0.65, 0.7, 0.75])


def test_indicator_mask_rejects_bad_interval():
    with pytest.raises(ConfigurationError):
        indicator_mask((0.6, 0.4), make_grid(1.0, 19))


def test_tridiagonal_solve():
    A = np.array([[2.0, -1, 0], [-1, 2, -1], [0, -1, 2]])
    x = solve_banded(BandedMatrix.from_dense(A, 1, 1), np.array([1.5, 0.5, 1.5]))
    np.testing.assert_allclose(A @ x, [1.5, 0.5, 1.5], atol=1e-14)


def test_singular_banded_raises():
    A = np.array([[1.0, 1, 0], [1, 1, 0], [0, 0, 1]])
    with pytest.raises(NumericError):
        BandedMatrix.from_dense(A, 1, 1).factor()


@settings(max_examples=30, deadline=None)
@given(n=st.integers(5, 25), kl=st.integers(0, 3), ku=st.integers(0, 3), seed=st.integers(0, 10_000))
def test_banded_roundtrip_and_solve(n, kl, ku, seed):
    r = np.random.default_rng(seed)
    A = np.triu(np.tril(r.normal(size=(n, n)), ku), -kl) + 10 * np.eye(n)
    B = BandedMatrix.from_dense(A, kl, ku)
    np.testing.assert_allclose(B.to_dense(), A)
    x = r.normal(size=n)
    np.testing.assert_allclose(B.matvec(x), A @ x, atol=1e-12)
    np.testing.assert_allclose(B.transpose().to_dense(), A.T)
    np.testing.assert_allclose(solve_banded(B, A @ x), x, atol=1e-10)
    B.factor()
    np.testing.assert_allclose(B.solve(A.T @ x, trans=True), x, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_inner_is_bilinear_and_symmetric(seed, a, b):
    g = make_grid(1.0, 20)
    r = np.random.default_rng(seed)
    f, h, k = r.normal(size=(3, g.N + 2))
    assert inner(f, h, g) == pytest.approx(inner(h, f, g))
    assert inner(a * f + b * h, k, g) == pytest.approx(a * inner(f, k, g) + b * inner(h, k, g), abs=1e-10)
    assert l2_norm(f, g) ** 2 == pytest.approx(inner(f, f, g))

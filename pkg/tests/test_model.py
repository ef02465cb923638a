import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from klreg.model import (
    DenseOperator,
    DiagonalOperator,
    NormWeights,
    make_noisy,
    operator_from_dict,
    polynomial_operator,
    x_norm,
)

finite = st.floats(-10, 10, allow_nan=False)


def test_diagonal_apply():
    A = DiagonalOperator([1.0, 0.5])
    assert np.array_equal(A.apply([1.0, 1.0]), [1.0, 0.5])
    assert np.array_equal(A @ np.array([1.0, 1.0]), [1.0, 0.5])


def test_identity_apply():
    A = DiagonalOperator(np.ones(5))
    x = np.arange(5.0)
    assert np.array_equal(A.apply(x), x)
    assert np.array_equal(A.adjoint(x), x)


def test_dense_permutation():
    A = DenseOperator([[0, 1], [1, 0]])
    assert np.array_equal(A.apply([2.0, 3.0]), [3.0, 2.0])


def test_power_examples():
    A = DiagonalOperator([1.0, 0.5])
    w = np.array([1.0, 1.0])
    assert np.array_equal(A.power_AstarA(0.0, w), w)
    assert np.allclose(A.power_AstarA(0.5, w), [1.0, 0.5], rtol=1e-15)
    assert np.allclose(A.power_AstarA(1.0, w), [1.0, 0.25], rtol=1e-15)


def test_dense_power_matches_matrix_power():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((6, 4))
    A = DenseOperator(M)
    w = rng.standard_normal(4)
    assert np.allclose(A.power_AstarA(1.0, w), M.T @ M @ w, rtol=1e-12)
    half = A.power_AstarA(0.5, A.power_AstarA(0.5, w))
    assert np.allclose(half, M.T @ M @ w, rtol=1e-10)


def test_dense_power_annihilates_null_space():
    A = DenseOperator([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    assert np.allclose(A.power_AstarA(0.25, [0.0, 0.0, 1.0]), 0.0)


def test_diagonal_validation():
    with pytest.raises(ValueError):
        DiagonalOperator([1.0, 0.0])
    with pytest.raises(ValueError):
        DiagonalOperator([0.5, 1.0])
    with pytest.raises(ValueError):
        DiagonalOperator([])
    with pytest.raises(ValueError):
        DiagonalOperator([1.0, 0.5]).apply([1.0, 2.0, 3.0])


def test_polynomial_operator():
    A = polynomial_operator(5, 2.0)
    assert np.allclose(A.singular_values, 1.0 / np.arange(1, 6) ** 2)
    assert A.injective
    with pytest.raises(ValueError):
        polynomial_operator(0)


def test_operator_dict_round_trip():
    for A in (DiagonalOperator([1.0, 0.25]), DenseOperator([[1.0, 2.0], [3.0, 4.0]])):
        B = operator_from_dict(A.to_dict())
        x = np.array([0.3, -1.1])
        assert np.array_equal(A.apply(x), B.apply(x))


@given(st.integers(0, 2**32 - 1))
def test_adjoint_pairing(seed):
    rng = np.random.default_rng(seed)
    for A in (polynomial_operator(30, 1.0), DenseOperator(rng.standard_normal((7, 5)))):
        n, m = A.shape
        x, y = rng.standard_normal(m), rng.standard_normal(n)
        lhs, rhs = np.dot(A.apply(x), y), np.dot(x, A.adjoint(y))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_x_norm_examples():
    assert x_norm(NormWeights(0.0), [3.0, 4.0]) == 5.0
    assert x_norm(NormWeights(1.0), [0.0, 2.0]) == pytest.approx(1.0, rel=1e-15)


def test_weights_validation_and_monotone():
    with pytest.raises(ValueError):
        NormWeights(-0.1)
    w = NormWeights(0.7).weights(20)
    assert np.all(np.diff(w) < 0)


def test_interpolation_inequality_weak_norm():
    A = polynomial_operator(50, 1.0)
    W = NormWeights(0.5)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.standard_normal(50)
        lhs = W.norm(x)
        rhs = np.sqrt(np.linalg.norm(A.apply(x)) * np.linalg.norm(x))
        assert lhs <= rhs * (1 + 1e-12)


def test_dual_norm_pairs_with_norm():
    W = NormWeights(1.0)
    rng = np.random.default_rng(1)
    g, x = rng.standard_normal(10), rng.standard_normal(10)
    assert abs(np.dot(g, x)) <= W.dual_norm(g) * W.norm(x) * (1 + 1e-12)


@given(st.floats(0, 1.0), st.integers(0, 2**32 - 1))
def test_operator_power_bound(mu, seed):
    A = polynomial_operator(40, 1.5)
    w = np.random.default_rng(seed).standard_normal(40)
    w /= np.linalg.norm(w)
    assert np.linalg.norm(A.power_AstarA(mu, w)) <= A.singular_values[0] ** (2 * mu) * (1 + 1e-12)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_interpolation_inequality(r, q, seed):
    r, q = min(r, q), max(r, q)
    if q - r < 1e-3:
        return
    A = polynomial_operator(40, 1.0)
    x = np.random.default_rng(seed).standard_normal(40)
    lhs = np.linalg.norm(A.power_AstarA(r, x))
    rhs = np.linalg.norm(A.power_AstarA(q, x)) ** (r / q) * np.linalg.norm(x) ** (1 - r / q)
    assert lhs <= rhs * (1 + 1e-10)


def test_make_noisy_examples():
    y = np.array([1.0, 0.0])
    assert np.array_equal(make_noisy(y, 0.0), y)
    assert np.allclose(make_noisy(y, 0.1, direction=[0.0, 1.0]), [1.0, 0.1], rtol=1e-15)


@given(st.integers(0, 2**32 - 1), st.floats(1e-8, 10.0))
def test_make_noisy_exact_norm(seed, delta):
    y = np.linspace(-1, 1, 33)
    yd = make_noisy(y, delta, seed=seed, envelope=np.arange(1, 34) ** -0.5)
    assert np.linalg.norm(yd - y) == pytest.approx(delta, rel=1e-14)


def test_make_noisy_deterministic_and_validated():
    y = np.zeros(8)
    assert np.array_equal(make_noisy(y, 0.1, seed=4), make_noisy(y, 0.1, seed=4))
    with pytest.raises(ValueError):
        make_noisy(y, 0.1)
    with pytest.raises(ValueError):
        make_noisy(y, -1.0, seed=0)
    with pytest.raises(ValueError):
        make_noisy(y, 0.1, direction=np.zeros(8))

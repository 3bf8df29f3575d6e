import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gyropower import matcore
from gyropower.errors import DimensionMismatch, NotPositiveDefinite, NotStable

import oracles


def test_lyapunov_sym_identity():
    np.testing.assert_allclose(matcore.solve_lyapunov_sym(np.eye(2), 2 * np.eye(2)), np.eye(2))


def test_lyapunov_sym_diagonal():
    Y = matcore.solve_lyapunov_sym(np.diag([1.0, 3.0]), np.array([[2.0, 4.0], [4.0, 6.0]]))
    np.testing.assert_allclose(Y, np.ones((2, 2)), atol=1e-15)


def test_lyapunov_sym_worked():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    Q = np.diag([2.0, 4.0])
    Y = matcore.solve_lyapunov_sym(A, Q)
    expected = np.array([[0.75, -0.5], [-0.5, 1.25]])
    np.testing.assert_allclose(Y, expected, atol=1e-14)
    np.testing.assert_allclose(oracles.lyapunov_by_basis(A, Q), expected, atol=1e-14)


def test_lyapunov_sym_errors():
    with pytest.raises(NotPositiveDefinite):
        matcore.solve_lyapunov_sym(np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(NotPositiveDefinite):
        matcore.solve_lyapunov_sym(np.diag([1.0, 1e-12]), np.eye(2))
    with pytest.raises(DimensionMismatch):
        matcore.solve_lyapunov_sym(np.eye(2), np.eye(3))


def test_lyapunov_sym_skew_rhs(rng):
    A = oracles.random_spd(rng, 4)
    Q = oracles.random_skew(rng, 4)
    Y = matcore.solve_lyapunov_sym(A, Q)
    assert np.abs(Y + Y.T).max() <= 1e-13
    assert np.linalg.norm(A @ Y + Y @ A - Q) <= 1e-12 * np.linalg.norm(Q)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 6), seed=st.integers(0, 2**32 - 1))
def test_lyapunov_sym_residual_and_linearity(n, seed):
    rng = np.random.default_rng(seed)
    A = oracles.random_spd(rng, n, cond=50.0)
    Q1 = rng.standard_normal((n, n))
    Q1 = Q1 + Q1.T
    Q2 = rng.standard_normal((n, n))
    Q2 = Q2 + Q2.T
    Y1 = matcore.solve_lyapunov_sym(A, Q1)
    Y2 = matcore.solve_lyapunov_sym(A, Q2)
    assert np.linalg.norm(A @ Y1 + Y1 @ A - Q1) <= 1e-12 * np.linalg.norm(Q1)
    np.testing.assert_array_equal(Y1, Y1.T)
    Y12 = matcore.solve_lyapunov_sym(A, 2.5 * Q1 - Q2)
    np.testing.assert_allclose(Y12, 2.5 * Y1 - Y2, atol=1e-12 * (1 + np.abs(Y12).max()))


def test_lyapunov_general_diagonal():
    T1, T2, kB = 1.5, 3.0, 2.0
    Y = matcore.solve_lyapunov_general(np.eye(2), 2 * kB * np.diag([T1, T2]))
    np.testing.assert_allclose(Y, kB * np.diag([T1, T2]))


def test_lyapunov_general_matches_symmetric(rng):
    A = oracles.random_spd(rng, 3)
    Q = oracles.random_spd(rng, 3)
    np.testing.assert_allclose(matcore.solve_lyapunov_general(A, Q),
                               matcore.solve_lyapunov_sym(A, Q), atol=1e-12)


def test_lyapunov_general_random_stable(rng):
    for _ in range(20):
        A = rng.standard_normal((3, 3))
        A = A + (abs(np.linalg.eigvals(A).real).max() + 0.5) * np.eye(3)
        Y = matcore.solve_lyapunov_general(A, np.eye(3))
        np.testing.assert_allclose(Y, oracles.lyapunov_by_basis(A, np.eye(3)), atol=1e-12)
        assert matcore.residual_norm(A, Y, np.eye(3)) <= 1e-12 * np.sqrt(3)


def test_lyapunov_general_rejects_unstable():
    with pytest.raises(NotStable):
        matcore.solve_lyapunov_general(np.array([[1.0, 5.0], [0.0, -0.1]]), np.eye(2))
    with pytest.raises(DimensionMismatch):
        matcore.solve_lyapunov_general(np.eye(9), np.eye(9))


def test_commutator():
    assert not matcore.commutator(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])).any()
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    B = np.array([[0.75, -0.5], [-0.5, 1.25]])
    np.testing.assert_allclose(matcore.commutator(A, B), [[0.0, 0.5], [-0.5, 0.0]], atol=1e-15)


def test_commutator_antisymmetry(rng):
    A, B = rng.standard_normal((2, 4, 4))
    np.testing.assert_allclose(matcore.commutator(A, B), -matcore.commutator(B, A))
    S1, S2 = A + A.T, B + B.T
    C = matcore.commutator(S1, S2)
    np.testing.assert_allclose(C, -C.T, atol=1e-13)
    with pytest.raises(DimensionMismatch):
        matcore.commutator(np.eye(2), np.eye(3))


def test_matrix_exponential():
    np.testing.assert_allclose(matcore.matrix_exponential(np.zeros((3, 3))), np.eye(3))
    np.testing.assert_allclose(matcore.matrix_exponential(np.diag([1.0, 2.0]), 1.0),
                               np.diag([np.e, np.e ** 2]), rtol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_quadrature_oracle(n, rng):
    K = oracles.random_spd(rng, n, cond=5.0)
    T = np.diag(rng.uniform(0.5, 3.0, n))
    Y = matcore.solve_lyapunov_sym(K, 2.0 * T)
    np.testing.assert_allclose(2.0 * oracles.lyapunov_quadrature(K, T), Y, atol=1e-8)


def test_quadrature_oracle_with_package_expm():
    K = np.array([[2.0, 1.0], [1.0, 2.0]])
    T = np.diag([1.0, 2.0])
    taus = np.linspace(0.0, 40.0, 40001)
    vals = np.array([matcore.matrix_exponential(-K, t) @ T @ matcore.matrix_exponential(-K, t)
                     for t in taus])
    from scipy.integrate import simpson
    integral = simpson(vals, x=taus, axis=0)
    np.testing.assert_allclose(2 * integral, matcore.solve_lyapunov_sym(K, 2 * T), atol=1e-8)

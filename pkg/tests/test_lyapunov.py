import numpy as np
import pytest

from src.core.kronalg import KronVector, apply_kway_lyapunov_transpose, kway_lyapunov_matrix
from src.core.lyapunov import KwaySolver, are_residual, lqr_gain, solve_are, solve_kway
from src.utils.exceptions import AreError, DimensionError, SingularSystemError

SQRT2 = np.sqrt(2.0)


def test_scalar_riccati():
    sol = solve_are([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert abs(sol.V2[0, 0] - (SQRT2 - 1)) <= 1e-12
    assert abs(sol.Acl[0, 0] + SQRT2) <= 1e-12
    assert sol.residual_norm <= 1e-10


def test_scalar_riccati_without_input_is_lyapunov():
    sol = solve_are([[-1.0]], [[0.0]], [[1.0]], [[1.0]])
    assert abs(sol.V2[0, 0] - 0.5) <= 1e-12


def test_unstable_double_integrator():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    sol = solve_are(A, B, np.eye(2), np.eye(1))
    expected = np.array([[np.sqrt(3.0), 1.0], [1.0, np.sqrt(3.0)]])
    assert np.allclose(sol.V2, expected, atol=1e-10)
    assert np.max(np.linalg.eigvals(sol.Acl).real) < 0
    assert np.allclose(sol.gain, lqr_gain(B, np.eye(1), sol.V2))


def test_random_riccati_residuals():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n, m = 4, 2
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        L = rng.standard_normal((n, n))
        Q = L @ L.T + 0.01 * np.eye(n)
        sol = solve_are(A, B, Q, np.eye(m))
        assert are_residual(A, B, Q, np.eye(m), sol.V2) <= 1e-10
        assert np.allclose(sol.V2, sol.V2.T)
        assert np.max(np.linalg.eigvals(sol.Acl).real) < 0


def test_unstabilizable_pair_raises():
    with pytest.raises(AreError):
        solve_are([[1.0]], [[0.0]], [[1.0]], [[1.0]])


def test_indefinite_input_weight_raises():
    with pytest.raises(AreError):
        solve_are([[-1.0]], [[1.0]], [[1.0]], [[-1.0]])


def test_kway_scalar():
    out = solve_kway(np.array([[-2.0]]), 3, KronVector([6.0], 1, 3))
    assert np.allclose(out.data, [-1.0])


@pytest.mark.parametrize("n, k", [(2, 2), (3, 3), (3, 4), (2, 5), (4, 3)])
def test_kway_solver_matches_dense_solve(n, k):
    rng = np.random.default_rng(8 + 10 * n + k)
    M = rng.standard_normal((n, n))
    Acl = M - (np.linalg.eigvals(M).real.max() + 1.0) * np.eye(n)
    b = KronVector(rng.standard_normal(n ** k), n, k)
    x = KwaySolver(Acl).solve(k, b)
    L = kway_lyapunov_matrix(Acl, k)
    assert L.shape == (n ** k, n ** k)
    dense = np.linalg.solve(L.T, b.data)
    assert np.allclose(x.data, dense, rtol=1e-9, atol=1e-12)
    r = b.data - apply_kway_lyapunov_transpose(Acl, k, x).data
    assert np.linalg.norm(r) <= 1e-10 * max(1.0, np.linalg.norm(b.data))


def test_kway_solver_complex_spectrum():
    Acl = np.array([[-0.5, 3.0, 0.0], [-3.0, -0.5, 0.0], [0.0, 1.0, -1.0]])
    b = KronVector(np.arange(27.0), 3, 3)
    x = KwaySolver(Acl).solve(3, b)
    assert np.isrealobj(x.data)
    assert np.allclose(apply_kway_lyapunov_transpose(Acl, 3, x).data, b.data, atol=1e-9)


def test_kway_zero_rhs():
    x = solve_kway(-np.eye(2), 3, KronVector(np.zeros(8), 2, 3))
    assert not np.any(x.data)


def test_kway_not_hurwitz():
    with pytest.raises(SingularSystemError):
        KwaySolver(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_kway_rhs_shape_checked():
    with pytest.raises(DimensionError):
        KwaySolver(-np.eye(2)).solve(3, KronVector(np.zeros(4), 2, 2))

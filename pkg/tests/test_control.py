import numpy as np
import pytest

from src.core.control import (
    PolyController,
    eval_controller,
    eval_value,
    eval_value_gradient,
    extract_gains,
    hjb_residual,
    optimal_feedback,
)
from src.core.kronalg import KronVector
from src.core.lyapunov import solve_are
from src.core.ppr_core import synthesize
from src.core.problem import ValueFunction
from src.utils.exceptions import DimensionError
from tests.oracles import random_problem

SQRT2 = np.sqrt(2.0)
P = SQRT2 - 1


def _fd_gradient(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def test_scalar_value_evaluation():
    value = ValueFunction(1, [KronVector([P], 1, 2), KronVector([(2 - SQRT2) / 3], 1, 3)])
    assert eval_value(value, [0.1]) == pytest.approx(0.0021687, abs=1e-7)


def test_gradient_matches_finite_differences():
    dyn, cost = random_problem(2, n=3, ell=2, lam=4)
    value = synthesize(dyn, cost, d=4)
    x = np.array([0.3, -0.2, 0.5])
    grad = eval_value_gradient(value, x)
    fd = _fd_gradient(lambda y: eval_value(value, y), x)
    assert np.allclose(grad, fd, rtol=1e-6, atol=1e-8)


def test_linear_gain_is_lqr(scalar_quadratic_drift):
    dyn, cost = scalar_quadratic_drift
    ctrl = extract_gains(synthesize(dyn, cost, d=4), dyn, cost.R)
    assert ctrl.degree == 3
    assert ctrl.gains[0][0, 0] == pytest.approx(-P, abs=1e-12)


def test_linear_gain_matches_riccati():
    dyn, cost = random_problem(4, n=3, m=2, ell=2, lam=3)
    value = synthesize(dyn, cost, d=3)
    ctrl = extract_gains(value, dyn, cost.R)
    are = solve_are(dyn.A, dyn.B, cost.Q, cost.R)
    assert np.allclose(ctrl.gains[0], are.gain, atol=1e-10)


def test_scalar_quadratic_gain(scalar_quadratic_drift):
    # u = −V'(x) = −(p x + (3/2) v₃ x²)
    dyn, cost = scalar_quadratic_drift
    ctrl = extract_gains(synthesize(dyn, cost, d=3), dyn, cost.R)
    assert ctrl.gains[1][0, 0] == pytest.approx(-1.5 * (2 - SQRT2) / 3, abs=1e-12)


def test_gains_are_truncated_optimal_feedback():
    # the optimal feedback is polynomial; its low-degree part must match the gains
    dyn, cost = random_problem(8, n=2, m=2, ell=2, lam=3)
    value = synthesize(dyn, cost, d=4)
    ctrl = extract_gains(value, dyn, cost.R)
    x = np.array([0.7, -0.4])
    N = 16
    roots = 0.5 * np.exp(2j * np.pi * np.arange(N) / N)
    full = np.array([optimal_feedback(dyn, cost, value, z * x) for z in roots])
    parts = (np.fft.fft(full, axis=0) / N).real / 0.5 ** np.arange(N)[:, None]
    assert np.allclose(eval_controller(ctrl, x), parts[1:4].sum(axis=0), atol=1e-10)


def test_gain_rows_are_symmetric():
    dyn, cost = random_problem(6, n=3, ell=2, lam=4)
    ctrl = extract_gains(synthesize(dyn, cost, d=4), dyn, cost.R)
    K3 = ctrl.gains[2].reshape(1, 3, 3, 3)
    assert np.allclose(K3, K3.transpose(0, 2, 1, 3), atol=1e-14)
    assert np.allclose(K3, K3.transpose(0, 3, 2, 1), atol=1e-14)


def test_controller_jacobian():
    dyn, cost = random_problem(12, n=3, m=2, ell=2, lam=3)
    ctrl = extract_gains(synthesize(dyn, cost, d=4), dyn, cost.R)
    x = np.array([0.2, 0.1, -0.3])
    fd = np.column_stack([
        (ctrl(x + h) - ctrl(x - h)) / 2e-6 for h in 1e-6 * np.eye(3)
    ])
    assert np.allclose(ctrl.jacobian(x), fd, rtol=1e-6, atol=1e-8)


def test_lq_hjb_residual_vanishes():
    dyn, cost = random_problem(1, n=3, ell=1, lam=2)
    value = synthesize(dyn, cost, d=2)
    for x in np.random.default_rng(0).standard_normal((5, 3)):
        scale = 1 + x @ x
        assert abs(hjb_residual(dyn, cost, value, x)) <= 1e-10 * scale


def test_controller_shapes():
    with pytest.raises(DimensionError):
        PolyController([])
    with pytest.raises(DimensionError):
        PolyController([np.ones((1, 2)), np.ones((1, 3))])
    ctrl = PolyController([np.array([[-1.0, 0.0]]), np.zeros((1, 4))])
    assert ctrl.n == 2 and ctrl.m == 1 and ctrl.degree == 2
    assert ctrl([1.0, 5.0])[0] == -1.0


def test_value_dimension_mismatch(scalar_lq):
    dyn, cost = random_problem(0)
    value = synthesize(*scalar_lq, d=3)
    with pytest.raises(DimensionError):
        extract_gains(value, dyn, cost.R)

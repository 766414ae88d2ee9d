import numpy as np
import pytest

from src.core.control import eval_value, hjb_residual
from src.core.kronalg import KronVector, check_symmetric, kron_power
from src.core.ppr_core import (
    assemble_rhs,
    check_memory_budget,
    hjb_degree_residual,
    synthesize,
    truncation_slope,
)
from src.core.problem import PolyCost, PolyDynamics
from src.models.benchmarks import aircraft_f8, allen_cahn
from src.models.schemas import AllenCahnConfig
from src.utils.exceptions import DimensionError, MemoryBudgetError, ModelError
from tests.oracles import oracle_value, random_problem, value_part_poly

SQRT2 = np.sqrt(2.0)
P = SQRT2 - 1


def test_lq_problem_has_no_higher_terms(scalar_lq):
    value = synthesize(*scalar_lq, d=4)
    assert abs(value.V2[0, 0] - P) <= 1e-12
    assert value.coefficient(3).data[0] == 0.0
    assert value.coefficient(4).data[0] == 0.0


def test_scalar_quadratic_drift(scalar_quadratic_drift):
    value = synthesize(*scalar_quadratic_drift, d=3)
    assert abs(value.coefficient(3).data[0] - (2 - SQRT2) / 3) <= 1e-12


def test_scalar_cubic_state_cost(scalar_cubic_cost):
    value = synthesize(*scalar_cubic_cost, d=3)
    assert abs(value.coefficient(3).data[0] - 1 / (3 * SQRT2)) <= 1e-12


def test_scalar_bilinear_input(scalar_bilinear_input):
    value = synthesize(*scalar_bilinear_input, d=3)
    expected = 2 * P ** 2 / (3 * -SQRT2)
    assert abs(value.coefficient(3).data[0] - expected) <= 1e-12
    assert abs(expected + 0.080880) <= 1e-6


def test_rhs_of_scalar_quadratic_drift(scalar_quadratic_drift):
    dyn, cost = scalar_quadratic_drift
    b = assemble_rhs(dyn, cost, [KronVector([P], 1, 2)], 3)
    # 3 Acl v3 = b with v3 = (2 − √2)/3
    assert abs(b.data[0] - 3 * -SQRT2 * (2 - SQRT2) / 3) <= 1e-12


def test_assemble_rhs_checks_inputs(scalar_quadratic_drift):
    dyn, cost = scalar_quadratic_drift
    with pytest.raises(DimensionError):
        assemble_rhs(dyn, cost, [KronVector([P], 1, 2)], 2)
    with pytest.raises(DimensionError):
        assemble_rhs(dyn, cost, [], 3)


@pytest.mark.parametrize("seed", range(50))
def test_matches_monomial_oracle(seed):
    dyn, cost = random_problem(seed)
    value = synthesize(dyn, cost, d=4)
    reference = oracle_value(dyn, cost, 4)
    for k, part in zip(range(2, 5), reference):
        ours = value_part_poly(value.coefficient(k).data, dyn.n, k)
        scale = max(abs(c) for c in part.values())
        for e in set(ours) | set(part):
            assert abs(ours.get(e, 0.0) - part.get(e, 0.0)) <= 1e-9 * scale, (seed, k, e)


def test_oracle_with_two_inputs():
    dyn, cost = random_problem(101, n=2, m=2, ell=2, lam=3)
    value = synthesize(dyn, cost, d=4)
    reference = oracle_value(dyn, cost, 4)
    for k, part in zip(range(2, 5), reference):
        ours = value_part_poly(value.coefficient(k).data, dyn.n, k)
        scale = max(abs(c) for c in part.values())
        assert all(abs(ours.get(e, 0.0) - c) <= 1e-9 * scale for e, c in part.items())


def test_oracle_with_quadratic_input_block():
    for seed in (7, 21, 42):
        dyn, cost = random_problem(seed, n=2, m=1, ell=2, lam=3, input_degree=2)
        assert set(dyn.G) == {1, 2}
        value = synthesize(dyn, cost, d=4)
        reference = oracle_value(dyn, cost, 4)
        for k, part in zip(range(2, 5), reference):
            ours = value_part_poly(value.coefficient(k).data, dyn.n, k)
            scale = max(abs(c) for c in part.values())
            for e in set(ours) | set(part):
                assert abs(ours.get(e, 0.0) - part.get(e, 0.0)) <= 1e-9 * scale, (seed, k, e)


def test_coefficients_are_symmetric():
    dyn, cost = random_problem(3, n=3, ell=3, lam=4)
    value = synthesize(dyn, cost, d=5)
    for v in value.coeffs:
        assert check_symmetric(v, 1e-12 * max(1.0, np.abs(v.data).max()))


def test_state_permutation_invariance():
    dyn, cost = random_problem(11, n=3, ell=2, lam=4)
    perm = np.array([2, 0, 1])
    Pm = np.eye(3)[perm]

    def permute_block(M, p, m=1):
        M = np.asarray(M.toarray() if hasattr(M, "toarray") else M)
        T = M.reshape((3,) + (3,) * p + (m,))
        for axis in range(p + 1):
            T = np.take(T, perm, axis=axis)
        return T.reshape(3, m * 3 ** p)

    dyn_p = PolyDynamics(
        A=Pm @ dyn.A @ Pm.T,
        B=Pm @ dyn.B,
        F={p: permute_block(F, p) for p, F in dyn.F.items()},
        G={p: permute_block(G, p, dyn.m) for p, G in dyn.G.items()},
    )
    q_p = {}
    for p in cost.q:
        T = cost.q_dense(p).reshape((3,) * p)
        for axis in range(p):
            T = np.take(T, perm, axis=axis)
        q_p[p] = T.reshape(-1)
    cost_p = PolyCost(Q=Pm @ cost.Q @ Pm.T, R=cost.R, q=q_p)

    value = synthesize(dyn, cost, d=4)
    value_p = synthesize(dyn_p, cost_p, d=4)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = 0.3 * rng.standard_normal(3)
        assert abs(eval_value(value, x) - eval_value(value_p, Pm @ x)) <= 1e-10


def test_hjb_degree_residuals_vanish():
    dyn, cost = random_problem(5, n=2, ell=2, lam=4)
    value = synthesize(dyn, cost, d=5)
    for k in range(2, 6):
        assert hjb_degree_residual(dyn, cost, value, k, samples=30, relative=True) <= 1e-9
    assert hjb_degree_residual(dyn, cost, value, 6, samples=30, relative=True) > 1e-6


def test_lq_residual_is_exact(scalar_lq):
    dyn, cost = scalar_lq
    value = synthesize(dyn, cost, d=2)
    for x in (0.1, 1.0, 3.0):
        assert abs(hjb_residual(dyn, cost, value, [x])) <= 1e-12 * (1 + x ** 4)


def test_truncation_order_scalar(scalar_quadratic_drift):
    dyn, cost = scalar_quadratic_drift
    value = synthesize(dyn, cost, d=3)
    small = abs(hjb_residual(dyn, cost, value, [0.01]))
    large = abs(hjb_residual(dyn, cost, value, [0.1]))
    assert small <= 1e-7
    assert 10 ** 3.5 <= large / small <= 10 ** 4.5


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_truncation_slope(d, scalar_quadratic_drift):
    dyn, cost = scalar_quadratic_drift
    value = synthesize(dyn, cost, d=d)
    assert truncation_slope(dyn, cost, value) >= d + 0.5


def test_degree_validation(scalar_lq):
    with pytest.raises(DimensionError):
        synthesize(*scalar_lq, d=1)


def test_incompatible_cost():
    dyn = PolyDynamics(A=-np.eye(2), B=np.ones((2, 1)))
    with pytest.raises(ModelError):
        synthesize(dyn, PolyCost(Q=[[1.0]], R=[[1.0]]), d=3)


def test_memory_budget(monkeypatch):
    with pytest.raises(MemoryBudgetError):
        check_memory_budget(129, 4, budget=10 ** 8)
    monkeypatch.setenv("PPR_ELEMENT_BUDGET", "100")
    with pytest.raises(MemoryBudgetError):
        check_memory_budget(5, 3)
    monkeypatch.setenv("PPR_ELEMENT_BUDGET", "1000")
    check_memory_budget(5, 3)


def test_value_positive_near_origin():
    dyn, cost = random_problem(9, n=3, ell=2, lam=4)
    value = synthesize(dyn, cost, d=4)
    rng = np.random.default_rng(1)
    X = rng.standard_normal((100, 3))
    X = 1e-3 * X / np.linalg.norm(X, axis=1, keepdims=True)
    assert all(eval_value(value, x) > 0 for x in X)


def test_synthesis_stats(scalar_quadratic_drift):
    value = synthesize(*scalar_quadratic_drift, d=4)
    assert [s.degree for s in value.stats] == [2, 3, 4]
    assert all(s.residual <= 1e-10 for s in value.stats)
    assert value.truncated(3).d == 3
    assert kron_power([1.0], 3).data[0] == 1.0


@pytest.mark.parametrize("d", [2, 3, 4, 6])
def test_truncation_slope_aircraft(d):
    dyn, cost = aircraft_f8()
    value = synthesize(dyn, cost, d=d)
    assert truncation_slope(dyn, cost, value) >= d + 0.5


@pytest.mark.parametrize("d", [2, 3])
def test_truncation_slope_allen_cahn(d):
    model = allen_cahn(AllenCahnConfig(n=17, epsilon=0.1))
    value = synthesize(model.dyn, model.cost, d=d)
    assert truncation_slope(model.dyn, model.cost, value, samples=5) >= d + 0.5

"""
Sequential computation of the value-function coefficients.

Degree 2 comes from the Riccati equation.  Each higher degree k solves
L_k(Acl)ᵀ ṽ_k = b_k, where b_k depends only on v_2..v_{k−1}, and then
symmetrizes ṽ_k.
"""

import time
from typing import Optional, Sequence

import numpy as np

from src.config.settings import current_settings, settings
from src.core.control import hjb_terms
from src.core.kronalg import KronVector, dense_matmul, symmetrize
from src.core.lyapunov import KwaySolver, solve_are
from src.core.problem import DegreeStats, PolyCost, PolyDynamics, ValueFunction
from src.utils.exceptions import DimensionError, MemoryBudgetError, ModelError
from src.utils.logger import logger
from src.utils.validators import validate_degree


def check_memory_budget(n: int, d: int, budget: Optional[int] = None) -> None:
    """
    Refuse degrees whose top coefficient would exceed the element budget.

    Raises:
        MemoryBudgetError: If n**d exceeds the budget
    """
    budget = current_settings().element_budget if budget is None else budget
    if n ** d > budget:
        raise MemoryBudgetError(
            f"Degree {d} over n={n} needs {n ** d:.3e} coefficients, above the budget "
            f"of {budget:.3e} (set PPR_ELEMENT_BUDGET to override)"
        )


def check_compatible(dyn: PolyDynamics, cost: PolyCost) -> None:
    if cost.n != dyn.n or cost.m != dyn.m:
        raise ModelError(
            f"Cost is for (n={cost.n}, m={cost.m}) but dynamics are (n={dyn.n}, m={dyn.m})"
        )


def assemble_rhs(
    dyn: PolyDynamics,
    cost: PolyCost,
    coeffs: Sequence[KronVector],
    k: int,
) -> KronVector:
    """
    Right-hand side of the degree-k equation.

    Args:
        dyn: Polynomial dynamics
        cost: Polynomial cost
        coeffs: Symmetric coefficients v_2..v_{k-1}
        k: Degree being solved, k >= 3

    Returns:
        Order-k KronVector b_k
    """
    n, m = dyn.n, dyn.m
    if k < 3:
        raise DimensionError(f"Right-hand sides exist for k >= 3, got {k}")
    if len(coeffs) != k - 2:
        raise DimensionError(f"Degree {k} needs coefficients v_2..v_{k - 1}, got {len(coeffs)}")
    for offset, v in enumerate(coeffs):
        if v.n != n or v.k != offset + 2:
            raise DimensionError(f"Coefficient {offset} has order {v.k} over n={v.n}, expected {offset + 2} over n={n}")
    V = {v.k: v.unfold() for v in coeffs}
    b = np.zeros(n ** k)

    # drift: −i (V_iᵀ F_p), i + p = k + 1
    for p, Fp in dyn.F.items():
        i = k + 1 - p
        if 2 <= i <= k - 1:
            b -= i * dense_matmul(V[i].T, Fp).reshape(-1)

    qk = cost.q_dense(k)
    if qk is not None:
        b -= qk

    # input: ¼ i j H_{i,p} R⁻¹ H_{j,q}ᵀ over pairs of total degree k,
    # H_{i,p} = V_iᵀ G_p with G_0 = B; the (v_2 B, v_k B) pair lives in Acl
    inputs = {0: dyn.B, **dyn.G}
    H = {}
    for i in range(2, k):
        for p, Gp in inputs.items():
            degree = i - 1 + p
            if 1 <= degree <= k - 1:
                H[(i, p)] = (i, degree, dense_matmul(V[i].T, Gp).reshape(n ** degree, m))
    R_inv = cost.R_inv
    for i, deg_i, Hi in H.values():
        left = Hi @ R_inv
        for j, deg_j, Hj in H.values():
            if deg_i + deg_j == k:
                b += 0.25 * i * j * (left @ Hj.T).reshape(-1)

    return KronVector(b, n, k)


def synthesize(
    dyn: PolyDynamics,
    cost: PolyCost,
    d: int,
    tol: Optional[float] = None,
) -> ValueFunction:
    """
    Compute the degree-d polynomial approximation of the value function.

    Args:
        dyn: Polynomial dynamics
        cost: Polynomial cost
        d: Value-function degree, d >= 2
        tol: Residual tolerance for the Riccati and k-way solves

    Returns:
        ValueFunction with coefficients v_2..v_d

    Raises:
        AreError: If the Riccati equation has no stabilizing solution
        SingularSystemError: If the closed loop is not Hurwitz
        MemoryBudgetError: If n**d exceeds the element budget
    """
    problem = validate_degree(d)
    if problem:
        raise DimensionError(problem)
    tol = settings.solver_tol if tol is None else tol
    check_compatible(dyn, cost)
    n = dyn.n
    check_memory_budget(n, d)
    if d % 2 == 1:
        logger.warning(f"Degree {d} value gives an even-degree ({d - 1}) feedback law")

    start = time.perf_counter()
    are = solve_are(dyn.A, dyn.B, cost.Q, cost.R, tol)
    coeffs = [KronVector(are.V2.reshape(-1, order="F"), n, 2)]
    stats = [DegreeStats(degree=2, residual=are.residual_norm, seconds=time.perf_counter() - start)]

    solver = KwaySolver(are.Acl)
    for k in range(3, d + 1):
        start = time.perf_counter()
        b = assemble_rhs(dyn, cost, coeffs, k)
        v_tilde = solver.solve(k, b, tol)
        coeffs.append(symmetrize(v_tilde))
        residual = solver.backward_error(k, v_tilde, b)
        stats.append(DegreeStats(degree=k, residual=residual, seconds=time.perf_counter() - start))
        logger.info(f"Degree {k}: {n ** k} coefficients, backward error {residual:.2e}, {stats[-1].seconds:.3f}s")

    return ValueFunction(n, coeffs, stats)


def _max_residual_degree(dyn: PolyDynamics, cost: PolyCost, d: int) -> int:
    grad = d - 1
    drift = max([1, *dyn.F.keys()])
    inputs = max([0, *dyn.G.keys()])
    return max(grad + drift, 2 * grad + 2 * inputs, cost.degree)


def _unit_samples(n: int, samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, n))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def degree_components(
    dyn: PolyDynamics,
    cost: PolyCost,
    value: ValueFunction,
    x: np.ndarray,
    radius: float = 0.5,
) -> np.ndarray:
    """
    Homogeneous components of the HJB residual along the ray through x.

    Evaluates the three term families at radius·e^{2πij/N}·x and projects with
    an FFT.  Row c of the result holds the degree-c coefficient of each family,
    so that family(t x) = Σ_c out[c] t^c.
    """
    N = _max_residual_degree(dyn, cost, value.d) + 2
    roots = radius * np.exp(2j * np.pi * np.arange(N) / N)
    samples = np.array([hjb_terms(dyn, cost, value, z * x) for z in roots], dtype=complex)
    coefficients = np.fft.fft(samples, axis=0) / N
    return (coefficients / radius ** np.arange(N)[:, None]).real


def hjb_degree_residual(
    dyn: PolyDynamics,
    cost: PolyCost,
    value: ValueFunction,
    k: int,
    samples: int = 200,
    relative: bool = False,
    seed: int = 0,
) -> float:
    """
    Largest degree-k HJB residual over random unit directions.

    Args:
        k: Degree of the homogeneous part to measure
        samples: Number of unit-sphere directions
        relative: Divide by the largest degree-k term-family magnitude

    Returns:
        max_x |degree-k residual|, optionally relative
    """
    if value.n != dyn.n:
        raise DimensionError(f"Value function is over n={value.n}, dynamics over n={dyn.n}")
    worst, scale = 0.0, 0.0
    for x in _unit_samples(dyn.n, samples, seed):
        parts = degree_components(dyn, cost, value, x)
        if k >= parts.shape[0]:
            continue
        worst = max(worst, abs(parts[k].sum()))
        scale = max(scale, np.abs(parts[k]).max())
    if not relative:
        return float(worst)
    return float(worst / scale) if scale > 0 else float(worst)


def truncation_slope(
    dyn: PolyDynamics,
    cost: PolyCost,
    value: ValueFunction,
    radii: Optional[Sequence[float]] = None,
    samples: int = 20,
    seed: int = 0,
) -> float:
    """
    Log-log slope of the max HJB residual against ‖x‖.

    Radii where the residual is at the rounding floor of its largest term are
    discarded; NaN is returned when fewer than three radii remain.
    """
    radii = np.logspace(-3, -1, 9) if radii is None else np.asarray(radii, dtype=float)
    directions = _unit_samples(dyn.n, samples, seed)
    floor = 1e3 * np.finfo(float).eps
    kept_r, kept_res = [], []
    for r in radii:
        worst, scale = 0.0, 0.0
        for x in directions:
            terms = hjb_terms(dyn, cost, value, r * x)
            worst = max(worst, abs(sum(terms)))
            scale = max(scale, max(abs(t) for t in terms))
        if worst > floor * scale:
            kept_r.append(r)
            kept_res.append(worst)
    if len(kept_r) < 3:
        return float("nan")
    slope, _ = np.polyfit(np.log(kept_r), np.log(kept_res), 1)
    return float(slope)

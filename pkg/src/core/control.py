"""Value-function evaluation, polynomial feedback gains and HJB residuals."""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.core.kronalg import dense_matmul, symmetrize_rows
from src.core.lyapunov import lqr_gain
from src.core.problem import PolyCost, PolyDynamics, ValueFunction, _as_state
from src.utils.exceptions import DimensionError


def _contract(data: np.ndarray, x: np.ndarray, times: int) -> np.ndarray:
    """Contract the trailing ``times`` modes of a coefficient with x."""
    n = x.size
    w = data
    for _ in range(times):
        w = w.reshape(-1, n) @ x
    return w


@dataclass(frozen=True, eq=False)
class PolyController:
    """
    u(x) = Σ_j K^{[j]} x^⊗j.

    Gain rows for j >= 2 are stored as symmetric coefficients.
    """

    gains: List[np.ndarray]

    def __post_init__(self):
        if not self.gains:
            raise DimensionError("A controller needs at least the linear gain")
        gains = [np.atleast_2d(np.asarray(K, dtype=float)) for K in self.gains]
        m, n = gains[0].shape
        for j, K in enumerate(gains, start=1):
            if K.shape != (m, n ** j):
                raise DimensionError(f"K^[{j}] must have shape {(m, n ** j)}, got {K.shape}")
        object.__setattr__(self, "gains", gains)

    @property
    def m(self) -> int:
        return self.gains[0].shape[0]

    @property
    def n(self) -> int:
        return self.gains[0].shape[1]

    @property
    def degree(self) -> int:
        return len(self.gains)

    def __call__(self, x) -> np.ndarray:
        return eval_controller(self, x)

    def jacobian(self, x) -> np.ndarray:
        """∂u/∂x, shape (m, n)."""
        n, m = self.n, self.m
        x = _as_state(x, n)
        J = self.gains[0].astype(np.result_type(x, float))
        xk = x
        for j, K in enumerate(self.gains[1:], start=2):
            J = J + j * (K.reshape(m, n, n ** (j - 1)) @ xk)
            xk = np.multiply.outer(xk, x).reshape(-1)
        return J


def eval_value(value: ValueFunction, x) -> float:
    """V(x) = ½ xᵀV₂x + ½ Σ_{i≥3} v_iᵀ x^⊗i."""
    x = _as_state(x, value.n)
    total = 0.0
    for v in value.coeffs:
        total = total + _contract(v.data, x, v.k)[0]
    return 0.5 * total


def eval_value_gradient(value: ValueFunction, x) -> np.ndarray:
    """∇V(x) = Σ_i (i/2) V_i x^⊗(i−1), using symmetric coefficients."""
    x = _as_state(x, value.n)
    grad = np.zeros(value.n, dtype=np.result_type(x, float))
    for v in value.coeffs:
        grad = grad + 0.5 * v.k * _contract(v.data, x, v.k - 1)
    return grad


def extract_gains(value: ValueFunction, dyn: PolyDynamics, R) -> PolyController:
    """
    Collect −R⁻¹ g(x)ᵀ ∇V(x) by degree, truncated at degree d − 1.

    The degree-j gain gathers every (G_p, v_i) pair with p + i − 1 = j, where
    G_0 = B.  K^{[1]} is the LQR gain of V₂.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m, d = dyn.n, dyn.m, value.d
    if value.n != n:
        raise DimensionError(f"Value function is over n={value.n}, dynamics over n={n}")
    gains = [np.zeros((m, n ** j)) for j in range(1, d)]
    gains[0] = lqr_gain(dyn.B, R, value.V2)

    inputs = {0: dyn.B, **dyn.G}
    for i in range(2, d + 1):
        Vi = value.unfold(i)
        for p, Gp in inputs.items():
            j = i - 1 + p
            if j > d - 1 or (i == 2 and p == 0):
                continue
            H = dense_matmul(Vi.T, Gp).reshape(n ** j, m)
            gains[j - 1] = gains[j - 1] - 0.5 * i * np.linalg.solve(R, H.T)

    for j in range(2, d):
        gains[j - 1] = symmetrize_rows(gains[j - 1], n, j)
    return PolyController(gains)


def eval_controller(ctrl: PolyController, x) -> np.ndarray:
    """Σ_j K^{[j]} x^⊗j with incremental Kronecker powers."""
    x = _as_state(x, ctrl.n)
    u = np.zeros(ctrl.m, dtype=np.result_type(x, float))
    xk = x
    for j, K in enumerate(ctrl.gains, start=1):
        u = u + K @ xk
        if j < ctrl.degree:
            xk = np.multiply.outer(xk, x).reshape(-1)
    return u


def optimal_feedback(dyn: PolyDynamics, cost: PolyCost, value: ValueFunction, x) -> np.ndarray:
    """Untruncated feedback −R⁻¹ g(x)ᵀ ∇V(x)."""
    grad = eval_value_gradient(value, x)
    return -cost.R_inv @ (dyn.input_map(x).T @ grad)


def hjb_terms(dyn: PolyDynamics, cost: PolyCost, value: ValueFunction, x) -> Tuple[complex, complex, complex]:
    """
    The three term families of the HJB residual at x.

    Returns (∇Vᵀf, −½∇VᵀgR⁻¹gᵀ∇V, ½(xᵀQx + Σ q_pᵀx^⊗p)).
    """
    grad = eval_value_gradient(value, x)
    gt = dyn.input_map(x).T @ grad
    return grad @ dyn.drift(x), -0.5 * (gt @ cost.R_inv @ gt), cost.state_cost(x)


def hjb_residual(dyn: PolyDynamics, cost: PolyCost, value: ValueFunction, x) -> float:
    """HJB residual ∇Vᵀf − ½∇VᵀgR⁻¹gᵀ∇V + ½(xᵀQx + Σ q_pᵀx^⊗p) at x."""
    return sum(hjb_terms(dyn, cost, value, x))

"""
Riccati and k-way Lyapunov solvers.

``solve_are`` returns the stabilizing solution of
    AᵀV + VA − VBR⁻¹BᵀV + Q = 0
by Newton–Kleinman iteration; ``KwaySolver`` solves L_k(Acl)ᵀ v = b on the
complex Schur form of Acl without forming any n^k x n^k matrix.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from src.config.settings import settings
from src.core.kronalg import KronVector, apply_kway_lyapunov_transpose, mode_product
from src.utils.exceptions import (
    AreError,
    DimensionError,
    KwayResidualError,
    SingularSystemError,
)
from src.utils.logger import logger
from src.utils.validators import (
    is_positive_definite,
    is_positive_semidefinite,
    symmetry_defect,
)


@dataclass(frozen=True, eq=False)
class AreSolution:
    """Stabilizing Riccati solution with its closed-loop matrix and gain."""

    V2: np.ndarray
    Acl: np.ndarray
    gain: np.ndarray
    residual_norm: float
    iterations: int
    method: str


def spectral_abscissa(M: np.ndarray) -> float:
    """Largest real part of the eigenvalues of M."""
    M = np.asarray(M)
    if M.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(M).real))


def lqr_gain(B: np.ndarray, R: np.ndarray, V2: np.ndarray) -> np.ndarray:
    """K = −R⁻¹BᵀV2, so that u = K x."""
    return -np.linalg.solve(R, B.T @ V2)


def are_residual(A, B, Q, R, V2) -> float:
    """
    Relative Frobenius residual of the Riccati equation.

    The absolute residual is divided by the largest of its terms (and 1).
    """
    AtV = A.T @ V2
    VWV = V2 @ B @ np.linalg.solve(R, B.T @ V2)
    res = AtV + AtV.T - VWV + Q
    scale = max(1.0, np.linalg.norm(Q), np.linalg.norm(AtV), np.linalg.norm(VWV))
    return float(np.linalg.norm(res) / scale)


def _check_are_inputs(A, B, Q, R):
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got shape {A.shape}")
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionError(f"B must have {n} rows, got shape {B.shape}")
    m = B.shape[1]
    if Q.shape != (n, n):
        raise DimensionError(f"Q must have shape {(n, n)}, got {Q.shape}")
    if R.shape != (m, m):
        raise DimensionError(f"R must have shape {(m, m)}, got {R.shape}")
    if symmetry_defect(R) > 1e-12 or not is_positive_definite(R):
        raise AreError("R must be symmetric positive definite")
    if symmetry_defect(Q) > 1e-12 or not is_positive_semidefinite(Q):
        raise AreError("Q must be symmetric positive semidefinite")


def _stabilizing_gain(A: np.ndarray, B: np.ndarray, margin: float) -> Optional[np.ndarray]:
    """
    Initial gain K with A + BK Hurwitz, by eigenvalue shifting.

    Solves (A + βI)P + P(A + βI)ᵀ = 2BBᵀ with β > ‖A‖, which places the closed
    loop A − BBᵀP⁻¹ at real part −β.  Returns None if P is singular, i.e. the
    pair is not controllable.
    """
    n, m = B.shape
    if spectral_abscissa(A) < -margin:
        return np.zeros((m, n))
    beta = 1.0 + np.linalg.norm(A, 2)
    P = linalg.solve_continuous_lyapunov(A + beta * np.eye(n), 2.0 * B @ B.T)
    P = 0.5 * (P + P.T)
    if np.linalg.cond(P) > 1.0 / np.finfo(float).eps:
        return None
    K = -B.T @ np.linalg.inv(P)
    if spectral_abscissa(A + B @ K) >= -margin:
        return None
    return K


def _newton_kleinman(A, B, Q, R, K, tol, max_iter):
    V = None
    for iteration in range(1, max_iter + 1):
        Acl = A + B @ K
        if spectral_abscissa(Acl) >= 0:
            logger.debug(f"Newton iterate {iteration} lost stability")
            return None, iteration
        V_new = linalg.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        V_new = 0.5 * (V_new + V_new.T)
        K = lqr_gain(B, R, V_new)
        if V is not None:
            step = np.linalg.norm(V_new - V) / max(1.0, np.linalg.norm(V_new))
            logger.debug(f"Newton iteration {iteration}: relative step {step:.3e}")
            if step <= tol:
                return V_new, iteration
        V = V_new
    return V, max_iter


def solve_are(
    A,
    B,
    Q,
    R,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> AreSolution:
    """
    Stabilizing solution of the continuous-time algebraic Riccati equation.

    Args:
        A: State matrix (n x n)
        B: Input matrix (n x m)
        Q: State weight, symmetric PSD
        R: Input weight, symmetric PD
        tol: Relative residual tolerance
        max_iter: Newton iteration limit

    Returns:
        AreSolution with V2, Acl = A − BR⁻¹BᵀV2 and the LQR gain

    Raises:
        AreError: If inputs violate the assumptions or no stabilizing solution exists
    """
    tol = settings.solver_tol if tol is None else tol
    max_iter = settings.are_max_iter if max_iter is None else max_iter
    margin = settings.hurwitz_margin
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    _check_are_inputs(A, B, Q, R)

    V, iterations, method = None, 0, "newton-kleinman"
    K0 = _stabilizing_gain(A, B, margin)
    if K0 is not None:
        V, iterations = _newton_kleinman(A, B, Q, R, K0, tol, max_iter)

    if V is None or are_residual(A, B, Q, R, V) > tol:
        logger.warning("Newton-Kleinman did not converge; falling back to the Hamiltonian Schur method")
        method = "hamiltonian-schur"
        try:
            V = linalg.solve_continuous_are(A, B, Q, R)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise AreError(
                f"No stabilizing Riccati solution: (A, B) is not stabilizable "
                f"or the Hamiltonian has imaginary-axis eigenvalues ({str(e)})"
            )
        V = 0.5 * (V + V.T)
        K = lqr_gain(B, R, V)
        if spectral_abscissa(A + B @ K) < -margin:
            refined, extra = _newton_kleinman(A, B, Q, R, K, tol, 2)
            if refined is not None:
                V, iterations = refined, iterations + extra

    gain = lqr_gain(B, R, V)
    Acl = A + B @ gain
    abscissa = spectral_abscissa(Acl)
    if abscissa >= -margin:
        raise AreError(
            f"Closed-loop matrix is not Hurwitz (spectral abscissa {abscissa:.3e}): "
            "(A, B) is not stabilizable"
        )
    residual = are_residual(A, B, Q, R, V)
    if residual > tol:
        raise AreError(f"Riccati residual {residual:.3e} exceeds tolerance {tol:.1e}")

    logger.info(f"Riccati equation solved by {method} in {iterations} iterations, residual {residual:.2e}")
    return AreSolution(V2=V, Acl=Acl, gain=gain, residual_norm=residual, iterations=iterations, method=method)


class KwaySolver:
    """
    Structured solver for L_k(Acl)ᵀ v = b, reusing one Schur factorization.

    With Aclᵀ = Z T Zᴴ (complex Schur), the unknown is written as
    Y ×_{1..k-1} Z ×_k conj(Z).  The transformed system is upper triangular in
    every leading mode and is eliminated mode by mode; the last two modes form
    the triangular Sylvester equation (T + σI)Y + YTᴴ = C solved by LAPACK trsyl.
    """

    def __init__(self, Acl, margin: Optional[float] = None):
        Acl = np.atleast_2d(np.asarray(Acl, dtype=float))
        if Acl.ndim != 2 or Acl.shape[0] != Acl.shape[1]:
            raise DimensionError(f"Acl must be square, got shape {Acl.shape}")
        margin = settings.hurwitz_margin if margin is None else margin
        self.Acl = Acl
        self.n = Acl.shape[0]
        T, Z = linalg.schur(Acl.T, output="complex")
        eigenvalues = np.diag(T)
        abscissa = float(eigenvalues.real.max()) if self.n else -np.inf
        if abscissa >= -margin:
            raise SingularSystemError(
                f"Closed-loop matrix is not Hurwitz (spectral abscissa {abscissa:.3e}); "
                "the degree-k equations are singular"
            )
        self._T = T
        self._Tc = T.conj()
        self._Z = Z
        self._trsyl = linalg.get_lapack_funcs("trsyl", (T,))
        self._kappa = float(np.abs(eigenvalues).max() / (-eigenvalues.real).min())
        self._norm = float(np.linalg.norm(Acl))

    def _base(self, C: np.ndarray, sigma: complex) -> np.ndarray:
        n = self.n
        if C.ndim == 1:
            return linalg.solve_triangular(self._Tc + sigma * np.eye(n), C)
        Y, scale, info = self._trsyl(self._T + sigma * np.eye(n), self._T, C, trana="N", tranb="C", isgn=1)
        if info < 0:
            raise KwayResidualError(f"trsyl rejected argument {-info}")
        if info == 1:
            logger.warning("trsyl perturbed close eigenvalues; solution may be inaccurate")
        return Y / scale

    def _eliminate(self, C: np.ndarray, sigma: complex) -> np.ndarray:
        if C.ndim <= 2:
            return self._base(C, sigma)
        T = self._T
        Y = np.empty_like(C)
        for i in range(self.n - 1, -1, -1):
            rhs = C[i]
            if i < self.n - 1:
                rhs = rhs - np.tensordot(T[i, i + 1:], Y[i + 1:], axes=(0, 0))
            Y[i] = self._eliminate(rhs, sigma + T[i, i])
        return Y

    def _solve_once(self, b: np.ndarray, k: int) -> np.ndarray:
        n = self.n
        Z = self._Z
        C = b.astype(complex).reshape((n,) * k)
        for axis in range(k - 1):
            C = mode_product(C, Z.conj().T, axis)
        C = mode_product(C, Z.T, k - 1)
        Y = self._eliminate(C, 0.0)
        for axis in range(k - 1):
            Y = mode_product(Y, Z, axis)
        Y = mode_product(Y, Z.conj(), k - 1)
        X = Y.reshape(-1)
        scale = np.linalg.norm(X)
        imag_tol = max(1e-10, 1e4 * np.finfo(float).eps * self._kappa)
        if np.linalg.norm(X.imag) > imag_tol * max(scale, np.finfo(float).tiny):
            raise KwayResidualError(
                f"Structured solve produced a non-negligible imaginary part "
                f"({np.linalg.norm(X.imag) / scale:.2e} relative)"
            )
        return X.real

    def backward_error(self, k: int, x: KronVector, b: KronVector) -> float:
        """‖L_k(Acl)ᵀx − b‖ / (k‖Acl‖‖x‖ + ‖b‖)."""
        r = b.data - apply_kway_lyapunov_transpose(self.Acl, k, x).data
        denom = k * self._norm * np.linalg.norm(x.data) + np.linalg.norm(b.data)
        return float(np.linalg.norm(r) / denom) if denom > 0 else 0.0

    def solve(self, k: int, b: KronVector, tol: Optional[float] = None) -> KronVector:
        """
        Solve L_k(Acl)ᵀ v = b with one step of iterative refinement.

        Raises:
            DimensionError: If b is not an order-k coefficient over n
            KwayResidualError: If the refined backward error exceeds ``tol``
        """
        tol = settings.solver_tol if tol is None else tol
        if b.n != self.n or b.k != k:
            raise DimensionError(f"Right-hand side must have order {k} over n={self.n}, got order {b.k} over n={b.n}")
        if k < 1:
            raise DimensionError(f"k-way solves need k >= 1, got {k}")
        if not np.any(b.data):
            return b.with_data(np.zeros(b.data.size))

        x = self._solve_once(b.data, k)
        r = b.data - apply_kway_lyapunov_transpose(self.Acl, k, b.with_data(x)).data
        x = x + self._solve_once(r, k)
        solution = b.with_data(x)

        error = self.backward_error(k, solution, b)
        if error > tol:
            raise KwayResidualError(
                f"k-way solve of order {k} reached backward error {error:.3e} > {tol:.1e}",
                residual=error,
            )
        return solution


def solve_kway(Acl, k: int, b: KronVector, tol: Optional[float] = None) -> KronVector:
    """One-off structured solve of L_k(Acl)ᵀ v = b."""
    return KwaySolver(Acl).solve(k, b, tol)

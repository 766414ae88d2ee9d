"""Problem data: polynomial control-affine dynamics, polynomial cost, value function."""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from src.core.kronalg import KronVector, Matrix, check_symmetric, symmetrize, symmetrize_sparse
from src.core.polyterms import KronTerm
from src.utils.exceptions import DimensionError, ModelError, ShapeError
from src.utils.validators import (
    check_shape,
    is_positive_definite,
    is_positive_semidefinite,
    symmetry_defect,
)


def _as_block(M) -> Matrix:
    if sp.issparse(M):
        return sp.csr_matrix(M, dtype=float)
    return np.asarray(M, dtype=float)


def _as_state(x, n: int) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype.kind in "biu":
        x = x.astype(float)
    x = x.reshape(-1)
    if x.size != n:
        raise DimensionError(f"State must have length {n}, got {x.size}")
    return x


@dataclass(frozen=True, eq=False)
class PolyDynamics:
    """
    x' = A x + sum_p F_p x^⊗p + (B + sum_p G_p (x^⊗p ⊗ I_m)) u.

    F and G map a degree p to its block; absent degrees are zero.  Blocks may be
    dense arrays or scipy sparse matrices.
    """

    A: np.ndarray
    B: np.ndarray
    F: Dict[int, Matrix] = field(default_factory=dict)
    G: Dict[int, Matrix] = field(default_factory=dict)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1 and B.size == n:
            B = B.reshape(n, 1)
        if B.ndim != 2 or B.shape[0] != n or B.shape[1] < 1:
            raise ShapeError(f"B must have shape ({n}, m) with m >= 1, got {B.shape}")
        m = B.shape[1]

        F = {}
        for p, Fp in (self.F or {}).items():
            p = int(p)
            if Fp is None:
                continue
            if p < 2:
                raise ShapeError(f"Drift blocks start at degree 2, got F_{p}")
            Fp = _as_block(Fp)
            check_shape(Fp, (n, n ** p), f"F_{p}", ShapeError)
            F[p] = Fp
        G = {}
        for p, Gp in (self.G or {}).items():
            p = int(p)
            if Gp is None:
                continue
            if p < 1:
                raise ShapeError(f"Input blocks start at degree 1, got G_{p}")
            Gp = _as_block(Gp)
            check_shape(Gp, (n, m * n ** p), f"G_{p}", ShapeError)
            G[p] = Gp

        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "F", dict(sorted(F.items())))
        object.__setattr__(self, "G", dict(sorted(G.items())))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def degree(self) -> int:
        """Polynomial degree ℓ of the model (at least 1)."""
        return max([1, *self.F.keys(), *self.G.keys()])

    @cached_property
    def _drift_terms(self) -> Dict[int, KronTerm]:
        return {p: KronTerm(Fp, self.n, p) for p, Fp in self.F.items()}

    @cached_property
    def _input_terms(self) -> Dict[int, KronTerm]:
        return {p: KronTerm(Gp, self.n, p, self.m) for p, Gp in self.G.items()}

    def drift(self, x) -> np.ndarray:
        """f(x)."""
        x = _as_state(x, self.n)
        out = self.A @ x
        for term in self._drift_terms.values():
            out = out + term.apply(x)
        return out

    def input_map(self, x) -> np.ndarray:
        """g(x), shape (n, m)."""
        x = _as_state(x, self.n)
        out = self.B.astype(np.result_type(x, float))
        for term in self._input_terms.values():
            out = out + term.matrix(x)
        return out

    def rhs(self, x, u) -> np.ndarray:
        return self.drift(x) + self.input_map(x) @ np.asarray(u).reshape(-1)

    def jacobian(self, x, u) -> np.ndarray:
        """∂/∂x of f(x) + g(x) u with u held fixed."""
        x = _as_state(x, self.n)
        u = np.asarray(u).reshape(-1)
        J = self.A.astype(np.result_type(x, u, float))
        for term in self._drift_terms.values():
            J = J + term.jacobian(x)
        for term in self._input_terms.values():
            J = J + term.jacobian(x, u)
        return J


@dataclass(frozen=True, eq=False)
class PolyCost:
    """Running cost ½(xᵀQx + uᵀRu + Σ_p q_pᵀ x^⊗p) with symmetric q_p."""

    Q: np.ndarray
    R: np.ndarray
    q: Dict[int, Matrix] = field(default_factory=dict)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ShapeError(f"Q must be square, got shape {Q.shape}")
        if R.shape[0] != R.shape[1]:
            raise ShapeError(f"R must be square, got shape {R.shape}")
        if symmetry_defect(Q) > 1e-12:
            raise ModelError("Q must be symmetric")
        if not is_positive_semidefinite(Q):
            raise ModelError("Q must be positive semidefinite")
        if symmetry_defect(R) > 1e-12 or not is_positive_definite(R):
            raise ModelError("R must be symmetric positive definite")
        n = Q.shape[0]

        q = {}
        for p, qp in (self.q or {}).items():
            p = int(p)
            if qp is None:
                continue
            if p < 3:
                raise ShapeError(f"Polynomial state cost starts at degree 3, got q_{p}")
            q[p] = self._ingest(qp, n, p)

        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "q", dict(sorted(q.items())))

    @staticmethod
    def _ingest(qp, n: int, p: int) -> Matrix:
        if sp.issparse(qp):
            qp = sp.csr_matrix(qp, dtype=float)
            if qp.shape == (1, n ** p):
                qp = qp.T.tocsr()
            check_shape(qp, (n ** p, 1), f"q_{p}", ShapeError)
            sym = symmetrize_sparse(qp, n, p)
            return qp if (sym != qp).nnz == 0 else sym
        qp = np.asarray(qp, dtype=float).reshape(-1)
        check_shape(qp, (n ** p,), f"q_{p}", ShapeError)
        v = KronVector(qp, n, p)
        return qp if check_symmetric(v, 0.0) else symmetrize(v).data

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def degree(self) -> int:
        """Largest degree λ of the state cost (at least 2)."""
        return max([2, *self.q.keys()])

    @cached_property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)

    @cached_property
    def _state_terms(self) -> Dict[int, KronTerm]:
        terms = {}
        for p, qp in self.q.items():
            row = qp.T if sp.issparse(qp) else qp.reshape(1, -1)
            terms[p] = KronTerm(row, self.n, p)
        return terms

    def q_dense(self, p: int) -> Optional[np.ndarray]:
        qp = self.q.get(p)
        if qp is None:
            return None
        return qp.toarray().reshape(-1) if sp.issparse(qp) else qp

    def state_cost(self, x) -> float:
        """½(xᵀQx + Σ q_pᵀ x^⊗p)."""
        x = _as_state(x, self.n)
        total = x @ self.Q @ x
        for term in self._state_terms.values():
            total = total + term.apply(x)[0]
        return 0.5 * total

    def running_cost(self, x, u) -> float:
        u = np.asarray(u).reshape(-1)
        return self.state_cost(x) + 0.5 * (u @ self.R @ u)

    def state_cost_gradient(self, x) -> np.ndarray:
        x = _as_state(x, self.n)
        grad = self.Q @ x
        for term in self._state_terms.values():
            grad = grad + 0.5 * term.jacobian(x)[0]
        return grad


@dataclass(frozen=True)
class DegreeStats:
    """Per-degree diagnostics recorded during synthesis."""

    degree: int
    residual: float
    seconds: float


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """V(x) = ½ Σ_{k=2..d} v_kᵀ x^⊗k with symmetric coefficients."""

    n: int
    coeffs: List[KronVector]
    stats: List[DegreeStats] = field(default_factory=list)

    def __post_init__(self):
        if not self.coeffs:
            raise DimensionError("A value function needs at least the quadratic coefficient")
        for offset, v in enumerate(self.coeffs):
            if v.n != self.n or v.k != offset + 2:
                raise DimensionError(
                    f"Coefficient {offset} must have order {offset + 2} over n={self.n}, "
                    f"got order {v.k} over n={v.n}"
                )
        object.__setattr__(self, "coeffs", list(self.coeffs))

    @property
    def d(self) -> int:
        return len(self.coeffs) + 1

    def coefficient(self, k: int) -> KronVector:
        if not 2 <= k <= self.d:
            raise DimensionError(f"Degree {k} outside 2..{self.d}")
        return self.coeffs[k - 2]

    def unfold(self, k: int) -> np.ndarray:
        """V_k of shape (n, n**(k-1)) with vec(V_k) = v_k."""
        return self.coefficient(k).unfold()

    @property
    def V2(self) -> np.ndarray:
        return self.unfold(2)

    def truncated(self, d: int) -> "ValueFunction":
        """Leading coefficients v_2..v_d."""
        if not 2 <= d <= self.d:
            raise DimensionError(f"Cannot truncate degree {self.d} value to degree {d}")
        return ValueFunction(self.n, self.coeffs[: d - 1], [s for s in self.stats if s.degree <= d])

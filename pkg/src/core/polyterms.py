"""Evaluation of homogeneous polynomial blocks M (x^⊗p ⊗ I_m) and their derivatives."""

import numpy as np
import scipy.sparse as sp

from src.core.kronalg import Matrix, kron_power
from src.utils.exceptions import DimensionError


def _accumulate(index: np.ndarray, weights: np.ndarray, size: int) -> np.ndarray:
    if np.iscomplexobj(weights):
        return (np.bincount(index, weights=weights.real, minlength=size)
                + 1j * np.bincount(index, weights=weights.imag, minlength=size))
    return np.bincount(index, weights=weights, minlength=size)


class KronTerm:
    """
    One polynomial block of degree p with an m-wide input factor.

    For a drift block F_p (n x n^p) use m = 1; for an input block G_p
    (n x m n^p) the column index is (monomial) * m + (input).  Sparse blocks
    are evaluated coordinate-wise, so cost scales with the number of nonzeros.
    """

    def __init__(self, M: Matrix, n: int, p: int, m: int = 1):
        if p < 1:
            raise DimensionError(f"Polynomial block degree must be >= 1, got {p}")
        self.n, self.p, self.m = n, p, m
        self.rows = M.shape[0]
        if M.shape[1] != m * n ** p:
            raise DimensionError(f"Block of degree {p} needs {m * n ** p} columns, got {M.shape[1]}")
        if sp.issparse(M):
            coo = M.tocoo()
            keep = coo.data != 0
            self._row = coo.row[keep].astype(np.int64)
            self._val = coo.data[keep].astype(float)
            monomial, self._col = np.divmod(coo.col[keep].astype(np.int64), m)
            self._digits = np.array(np.unravel_index(monomial, (n,) * p), dtype=np.int64).reshape(p, -1)
            self._dense = None
        else:
            self._dense = np.asarray(M, dtype=float).reshape(self.rows, n ** p, m)

    def _monomials(self, x: np.ndarray, skip: int = -1) -> np.ndarray:
        out = np.ones(self._val.size, dtype=x.dtype)
        for t in range(self.p):
            if t != skip:
                out = out * x[self._digits[t]]
        return out

    def matrix(self, x: np.ndarray) -> np.ndarray:
        """M (x^⊗p ⊗ I_m), shape (rows, m)."""
        if self._dense is not None:
            xp = kron_power(x, self.p).data
            return np.einsum("rPc,P->rc", self._dense, xp)
        w = self._val * self._monomials(x)
        flat = _accumulate(self._row * self.m + self._col, w, self.rows * self.m)
        return flat.reshape(self.rows, self.m)

    def apply(self, x: np.ndarray, u: np.ndarray = None) -> np.ndarray:
        """M (x^⊗p ⊗ u); u defaults to [1] for drift blocks."""
        if u is None:
            if self.m != 1:
                raise DimensionError("An input vector is required for blocks with m > 1")
            return self.matrix(x)[:, 0]
        return self.matrix(x) @ u

    def jacobian(self, x: np.ndarray, u: np.ndarray = None) -> np.ndarray:
        """Derivative of M (x^⊗p ⊗ u) with respect to x, shape (rows, n)."""
        n, p = self.n, self.p
        if u is None:
            u = np.ones(1)
        dtype = np.result_type(x, u, float)
        if self._dense is not None:
            T = (self._dense @ u).reshape((self.rows,) + (n,) * p)
            rest = kron_power(x, p - 1).data
            J = np.zeros((self.rows, n), dtype=dtype)
            for s in range(p):
                Ts = np.moveaxis(T, s + 1, 1).reshape(self.rows, n, n ** (p - 1))
                J += Ts @ rest
            return J
        wu = self._val * u[self._col]
        J = np.zeros(self.rows * n, dtype=dtype)
        for s in range(p):
            J = J + _accumulate(self._row * n + self._digits[s], wu * self._monomials(x, skip=s), self.rows * n)
        return J.reshape(self.rows, n)

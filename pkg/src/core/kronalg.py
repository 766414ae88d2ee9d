"""
Kronecker-product primitives.

Multi-index convention: the last Kronecker factor varies fastest, so that
``np.kron(a, b)[i * len(b) + j] == a[i] * b[j]`` and a coefficient of order k
reshapes to a C-ordered tensor of shape ``(n,) * k``.  Matrices are vectorized
column-major (``vec``), which is what the perfect shuffle acts on.
"""

from dataclasses import dataclass
from functools import reduce
from itertools import permutations
from typing import Union

import numpy as np
import scipy.sparse as sp

from src.utils.exceptions import DimensionError

Matrix = Union[np.ndarray, sp.spmatrix]

# Keys for orbit averaging are built in blocks of this many entries
_CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class KronVector:
    """Dense coefficient of length n**k carrying its base dimension and order."""

    data: np.ndarray
    n: int
    k: int

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype.kind in "biu":
            data = data.astype(float)
        data = data.reshape(-1)
        if self.n < 0 or self.k < 0:
            raise DimensionError(f"Invalid KronVector dimensions n={self.n}, k={self.k}")
        if data.size != self.n ** self.k:
            raise DimensionError(
                f"KronVector of order {self.k} over n={self.n} needs "
                f"{self.n ** self.k} entries, got {data.size}"
            )
        object.__setattr__(self, "data", data)

    def __len__(self) -> int:
        return self.data.size

    def tensor(self) -> np.ndarray:
        """View as a C-ordered tensor of shape (n,)*k."""
        return self.data.reshape((self.n,) * self.k)

    def unfold(self) -> np.ndarray:
        """Matricization V_k of shape (n, n**(k-1)) with vec(V_k) = data."""
        if self.k == 0:
            raise DimensionError("Cannot unfold an order-0 coefficient")
        return self.data.reshape((self.n, self.n ** (self.k - 1)), order="F")

    def with_data(self, data: np.ndarray) -> "KronVector":
        return KronVector(data, self.n, self.k)


@dataclass(frozen=True)
class ShuffleSpec:
    """Perfect shuffle S_{q,p}: maps vec(A) to vec(A^T) for A of shape (p, q)."""

    q: int
    p: int

    @property
    def size(self) -> int:
        return self.p * self.q


def kron_power(x, k: int) -> KronVector:
    """
    Repeated Kronecker power x ⊗ ... ⊗ x with k factors.

    Args:
        x: Vector of length n (real or complex)
        k: Number of factors, k >= 0

    Returns:
        KronVector of order k; k = 0 gives the scalar 1
    """
    if k < 0:
        raise DimensionError(f"Kronecker order must be non-negative, got {k}")
    x = np.asarray(x)
    if x.dtype.kind in "biu":
        x = x.astype(float)
    x = x.reshape(-1)
    n = x.size
    out = np.ones(1, dtype=x.dtype)
    for _ in range(k):
        out = np.multiply.outer(out, x).reshape(-1)
    return KronVector(out, n, k)


def apply_shuffle(spec: ShuffleSpec, v) -> np.ndarray:
    """
    Apply S_{q,p} to v by reshape-transpose-reshape.

    Raises:
        DimensionError: If len(v) != p*q
    """
    v = np.asarray(v).reshape(-1)
    if v.size != spec.size:
        raise DimensionError(
            f"Shuffle S_{{{spec.q},{spec.p}}} needs a vector of length {spec.size}, got {v.size}"
        )
    A = v.reshape((spec.p, spec.q), order="F")
    return A.T.reshape(-1, order="F")


def perfect_shuffle_matrix(q: int, p: int) -> np.ndarray:
    """Dense permutation matrix of S_{q,p}; only meant for small sizes."""
    spec = ShuffleSpec(q, p)
    eye = np.eye(spec.size)
    return np.column_stack([apply_shuffle(spec, eye[:, j]) for j in range(spec.size)])


def _orbit_keys(n: int, k: int) -> np.ndarray:
    """Flat index of the sorted (canonical) multi-index of every entry."""
    total = n ** k
    shape = (n,) * k
    keys = np.empty(total, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        digits = np.array(np.unravel_index(np.arange(start, stop), shape))
        digits.sort(axis=0)
        keys[start:stop] = np.ravel_multi_index(digits, shape)
    return keys


def _orbit_mean(values: np.ndarray, keys: np.ndarray, counts: np.ndarray) -> np.ndarray:
    size = keys.size
    if np.iscomplexobj(values):
        sums = (np.bincount(keys, weights=values.real, minlength=size)
                + 1j * np.bincount(keys, weights=values.imag, minlength=size))
    else:
        sums = np.bincount(keys, weights=values, minlength=size)
    return sums[keys] / counts[keys]


def symmetrize(v: KronVector) -> KronVector:
    """
    Symmetric coefficient representing the same homogeneous polynomial.

    Entries are averaged over permutation orbits of their multi-index.
    """
    if v.k <= 1 or v.n <= 1:
        return v.with_data(v.data.copy())
    keys = _orbit_keys(v.n, v.k)
    counts = np.bincount(keys, minlength=keys.size)
    return v.with_data(_orbit_mean(v.data, keys, counts))


def symmetrize_rows(M: np.ndarray, n: int, k: int) -> np.ndarray:
    """Symmetrize every row of an (r, n**k) coefficient block."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[1] != n ** k:
        raise DimensionError(f"Expected a block with {n ** k} columns, got shape {M.shape}")
    if k <= 1 or n <= 1:
        return M.copy()
    keys = _orbit_keys(n, k)
    counts = np.bincount(keys, minlength=keys.size)
    return np.vstack([_orbit_mean(row, keys, counts) for row in M]) if M.shape[0] else M.copy()


def symmetrize_sparse(v: sp.spmatrix, n: int, k: int) -> sp.csr_matrix:
    """
    Symmetrize a sparse coefficient stored as an (n**k, 1) column.

    Each nonzero is spread evenly over the distinct permutations of its multi-index.
    """
    coo = sp.coo_matrix(v)
    if coo.shape != (n ** k, 1):
        raise DimensionError(f"Sparse coefficient must have shape {(n ** k, 1)}, got {coo.shape}")
    shape = (n,) * k
    rows, vals = [], []
    for index, value in zip(coo.row, coo.data):
        if value == 0:
            continue
        digits = np.unravel_index(int(index), shape)
        orbit = set(permutations(digits))
        share = value / len(orbit)
        for perm in orbit:
            rows.append(np.ravel_multi_index(perm, shape))
            vals.append(share)
    out = sp.coo_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows, dtype=np.int64), np.zeros(len(rows), dtype=np.int64))),
        shape=(n ** k, 1),
    )
    return out.tocsr()


def mode_product(T: np.ndarray, M: np.ndarray, axis: int) -> np.ndarray:
    """Multiply tensor T by matrix M along ``axis``."""
    return np.moveaxis(np.tensordot(M, T, axes=(1, axis)), 0, axis)


def apply_kway_lyapunov_transpose(Acl: np.ndarray, k: int, v: KronVector) -> KronVector:
    """
    Compute L_k(Acl)^T v with one mode product per summand.

    Raises:
        DimensionError: If Acl is not square or v does not match (n, k)
    """
    Acl = np.asarray(Acl)
    if Acl.ndim != 2 or Acl.shape[0] != Acl.shape[1]:
        raise DimensionError(f"Acl must be square, got shape {Acl.shape}")
    n = Acl.shape[0]
    if v.n != n or v.k != k:
        raise DimensionError(f"Expected an order-{k} coefficient over n={n}, got order {v.k} over n={v.n}")
    if k == 0:
        return v.with_data(np.zeros_like(v.data))
    T = v.tensor()
    M = Acl.T
    out = np.zeros_like(T, dtype=np.result_type(T, M))
    for axis in range(k):
        out += mode_product(T, M, axis)
    return KronVector(out.reshape(-1), n, k)


def kway_lyapunov_matrix(A: np.ndarray, k: int) -> np.ndarray:
    """
    Dense L_k(A) = sum over positions of I ⊗ .. ⊗ A ⊗ .. ⊗ I.

    A may be rectangular (n x n**p); the identities are n x n.  Only meant for
    small problems and for cross-checking the structured kernels.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    eye = np.eye(n)
    total = None
    for pos in range(k):
        factors = [eye] * k
        factors[pos] = A
        term = reduce(np.kron, factors)
        total = term if total is None else total + term
    return total


def check_symmetric(v: KronVector, tol: float) -> bool:
    """
    Test whether v is a symmetric coefficient.

    Every split shuffle S_{n^j, n^i} (i + j = k) and every adjacent transposition
    of modes must leave v unchanged within ``tol`` in the max norm.
    """
    if tol < 0:
        raise DimensionError(f"Tolerance must be non-negative, got {tol}")
    n, k = v.n, v.k
    if k <= 1:
        return True
    for i in range(1, k):
        j = k - i
        shuffled = apply_shuffle(ShuffleSpec(q=n ** j, p=n ** i), v.data)
        if np.max(np.abs(v.data - shuffled), initial=0.0) > tol:
            return False
    T = v.tensor()
    for axis in range(k - 1):
        if np.max(np.abs(T - np.swapaxes(T, axis, axis + 1)), initial=0.0) > tol:
            return False
    return True


def dense_matmul(M: np.ndarray, S: Matrix) -> np.ndarray:
    """Dense result of M @ S where S may be a scipy sparse matrix."""
    if sp.issparse(S):
        return np.asarray((S.T @ np.asarray(M).T).T)
    return np.asarray(M) @ np.asarray(S)


def as_dense(S: Matrix) -> np.ndarray:
    return S.toarray() if sp.issparse(S) else np.asarray(S)

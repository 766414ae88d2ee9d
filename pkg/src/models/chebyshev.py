"""
Calculate Chebyshev pseudospectral differentiation matrices.
"""

from typing import Tuple

import numpy as np


def chebdiff(n_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Chebyshev–Gauss–Lobatto nodes and first-derivative matrix.

    Args:
        n_nodes: Number of collocation points (>= 1)

    Returns:
        (z, D) with z_j = cos(jπ/(n_nodes − 1)), ordered from 1 down to −1

    Usage Example
        z, D = chebdiff(129)
        D2 = D @ D
    """
    if n_nodes < 1:
        raise ValueError(f"Need at least one node, got {n_nodes}")
    N = n_nodes - 1
    if N == 0:
        return np.ones(1), np.zeros((1, 1))
    j = np.arange(N + 1)
    z = np.cos(np.pi * j / N)
    c = np.hstack((2.0, np.ones(N - 1), 2.0)) * (-1.0) ** j
    X = np.tile(z, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    # negative-sum trick for the diagonal
    D = D - np.diag(D.sum(axis=1))
    return z, D

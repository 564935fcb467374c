"""Deliberately naive reference implementations used to cross-check the
optimized estimation and eigendecomposition paths.

Nothing here shares code with estimation.py or mfpca.py: trajectories are
evaluated pointwise at cell midpoints, moments are accumulated in explicit
Python loops, and eigenvalues come from a hand-rolled cyclic Jacobi
iteration instead of LAPACK.  Slow on purpose; intended for small panels.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericalError
from .estimation import ProbabilityField, WeightScheme
from .ingest import Panel
from .trajectory import CellGrid

__all__ = [
    "oracle_covariance",
    "naive_operator_matrix",
    "jacobi_eigenvalues",
]


def oracle_covariance(panel: Panel, grid: CellGrid) -> ProbabilityField:
    """Brute-force field estimate: midpoint evaluation, loop accumulation."""
    n = panel.n
    q = panel.space.q
    m = grid.m
    mids = [0.5 * (grid.nodes[a] + grid.nodes[a + 1]) for a in range(m)]

    X = np.zeros((n, q * m))
    for i, it in enumerate(panel.items):
        for a in range(m):
            subset = it.trajectory.evaluate(mids[a])
            for j in subset:
                X[i, j * m + a] = 1.0

    K = q * m
    mean = [0.0] * K
    for i in range(n):
        for u in range(K):
            mean[u] += X[i, u]
    for u in range(K):
        mean[u] /= n

    joint = [[0.0] * K for _ in range(K)]
    for i in range(n):
        xi = X[i]
        for u in range(K):
            if xi[u] == 0.0:
                continue
            row = joint[u]
            for v in range(K):
                row[v] += xi[v]
    cov = np.empty((K, K))
    for u in range(K):
        for v in range(K):
            cov[u, v] = joint[u][v] / n - mean[u] * mean[v]

    return ProbabilityField(
        grid, panel.space, np.array(mean).reshape(q, m), cov, n, panel.mode
    )


def naive_operator_matrix(field: ProbabilityField, weights: WeightScheme) -> np.ndarray:
    """S = D^{1/2} G D^{1/2} assembled entry by entry from the 4-d kernel."""
    q, m = field.q, field.m
    cov4 = field.cov  # (j, l, a, b)
    lengths = field.grid.lengths
    w = weights.weights
    S = np.empty((q * m, q * m))
    for j in range(q):
        for a in range(m):
            for l in range(q):
                for b in range(m):
                    S[j * m + a, l * m + b] = (
                        np.sqrt(w[j] * lengths[a])
                        * cov4[j, l, a, b]
                        * np.sqrt(w[l] * lengths[b])
                    )
    return S


def _offdiag_norm(A: np.ndarray) -> float:
    B = A.copy()
    np.fill_diagonal(B, 0.0)
    return float(np.linalg.norm(B))


def jacobi_eigenvalues(A: np.ndarray, max_sweeps: int = 60, tol: float = 1e-13) -> np.ndarray:
    """Descending eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Independent of LAPACK; converges quadratically, accurate to ~1e-13
    relative for the well-conditioned PSD matrices it is used on.
    """
    A = np.array(A, dtype=np.float64)
    K = A.shape[0]
    if A.shape != (K, K):
        raise NumericalError("jacobi_eigenvalues needs a square matrix")
    if K == 1:
        return A.ravel().copy()
    norm = np.linalg.norm(A)
    if norm == 0.0:
        return np.zeros(K)
    skip = tol * norm / (2 * K)  # entries this small cannot break convergence
    for _ in range(max_sweeps):
        if _offdiag_norm(A) <= tol * norm:
            break
        for p in range(K - 1):
            for r in range(p + 1, K):
                apr = A[p, r]
                if abs(apr) <= skip:
                    continue
                theta = 0.5 * (A[r, r] - A[p, p]) / apr
                t = np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                row_p = A[p, :].copy()
                row_r = A[r, :].copy()
                A[p, :] = c * row_p - s * row_r
                A[r, :] = s * row_p + c * row_r
                col_p = A[:, p].copy()
                col_r = A[:, r].copy()
                A[:, p] = c * col_p - s * col_r
                A[:, r] = s * col_p + c * col_r
    else:
        off = _offdiag_norm(A)
        if off > 1e-8 * norm:
            raise NumericalError(f"Jacobi iteration did not converge (off={off:.3e})")
    return np.sort(np.diag(A))[::-1].copy()

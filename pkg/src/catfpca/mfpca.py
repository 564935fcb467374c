"""Weighted multivariate functional PCA via an exact finite-dimensional reduction.

Because every sample path is piecewise constant on the cell grid, the
empirical covariance operator acts on step functions only, and its
eigenproblem is exactly equivalent to the dense symmetric eigenproblem

    S = D^{1/2} G D^{1/2},

where G is the stacked (q*m, q*m) kernel and D the diagonal of w_j * delta_a
over the block index (j, a).  Eigenfunction cell values are recovered as
D^{-1/2} times the eigenvectors.  Cost is O((q*m)^3); the uniform coarse
grid (default cap 512 cells) keeps that tractable for large panels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DomainError, NumericalError, ValidationError
from .estimation import (
    ProbabilityField,
    WeightScheme,
    compute_weights,
    estimate_field_from_cells,
    panel_cell_values,
)
from .ingest import Panel
from .trajectory import CellGrid

__all__ = [
    "MfpcaResult",
    "assemble_operator",
    "eigendecompose",
    "scores",
    "importance",
    "reconstruct",
    "mercer_check",
    "run_mfpca",
    "DEFAULT_MAX_CELLS",
]

DEFAULT_MAX_CELLS = 512

# relative spectral cut for the "auto" retention policy
_EIG_RTOL = 1e-12
# eigenvalues below -1e-10 * max(1, trace) indicate a broken kernel
_NEG_EIG_RTOL = 1e-10


def _weight_diag(weights: WeightScheme, grid: CellGrid) -> np.ndarray:
    """Diagonal of D over the flat block index (j, a) = j*m + a."""
    return (weights.weights[:, None] * grid.lengths[None, :]).ravel()


def assemble_operator(field: ProbabilityField, weights: WeightScheme) -> np.ndarray:
    """Symmetrized operator matrix S = D^{1/2} G D^{1/2}, positive semidefinite."""
    if weights.q != field.q:
        raise ValidationError(
            f"weights are for q={weights.q} states, field has q={field.q}"
        )
    G = field.cov_matrix
    if not np.all(np.isfinite(G)):
        raise ValidationError("covariance kernel contains non-finite entries")
    asym = np.abs(G - G.T).max()
    scale = max(1.0, np.abs(G).max())
    if asym > 1e-10 * scale:
        raise NumericalError(f"kernel asymmetry {asym:.3e} exceeds tolerance")
    sq = np.sqrt(_weight_diag(weights, field.grid))
    S = sq[:, None] * G * sq[None, :]
    return 0.5 * (S + S.T)


def eigendecompose(
    S: np.ndarray,
    weights: WeightScheme,
    grid: CellGrid,
    retain: Union[int, str] = "auto",
    n_cap: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenvalues and piecewise-constant eigenfunction blocks.

    Parameters
    ----------
    S : (q*m, q*m) symmetric PSD matrix from :func:`assemble_operator`.
    retain : "auto", "full" or int
        "auto" keeps eigenvalues above 1e-12 of the largest, capped by
        ``n_cap - 1`` (the rank bound of an n-sample empirical operator);
        "full" keeps everything.
    n_cap : sample count backing S, required for the "auto" cap.

    Returns
    -------
    (eigenvalues (R,), eigenfunctions (R, q, m))

    Eigenfunctions are orthonormal under the weighted inner product, and
    each is sign-fixed so its entry of largest absolute value is positive.
    """
    qm = S.shape[0]
    m = grid.m
    q = qm // m
    trace = float(np.trace(S))
    evals, evecs = np.linalg.eigh(S)
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1]

    neg_tol = _NEG_EIG_RTOL * max(1.0, trace)
    if evals[-1] < -neg_tol:
        raise NumericalError(
            f"eigenvalue {evals[-1]:.3e} below -{neg_tol:.1e}; kernel is not PSD"
        )
    np.clip(evals, 0.0, None, out=evals)

    if retain == "full":
        R = qm
    elif retain == "auto":
        R = int(np.count_nonzero(evals > _EIG_RTOL * evals[0])) if evals[0] > 0 else 0
        if n_cap is not None:
            R = min(R, max(n_cap - 1, 0))
    elif isinstance(retain, int):
        if retain < 0:
            raise DomainError(f"retain must be >= 0, got {retain}")
        R = min(retain, qm)
    else:
        raise ValidationError(f"retain must be 'auto', 'full' or an int, got {retain!r}")

    inv_sq = 1.0 / np.sqrt(_weight_diag(weights, grid))
    phis = (evecs[:, :R].T * inv_sq[None, :])  # (R, qm)
    # deterministic sign: largest-|value| cell entry made positive
    for r in range(R):
        peak = np.argmax(np.abs(phis[r]))
        if phis[r, peak] < 0:
            phis[r] = -phis[r]
    return evals[:R], phis.reshape(R, q, m)


def scores(
    Z: np.ndarray,
    field: ProbabilityField,
    weights: WeightScheme,
    eigenfunctions: np.ndarray,
) -> np.ndarray:
    """Principal component scores, entry (i, r) = <X_i - p, phi_r>_H.

    ``Z`` holds the panel cell values (n, q, m) on the field's grid; the
    inner product is the exact weighted sum over cells.
    """
    n = Z.shape[0]
    R = eigenfunctions.shape[0]
    qm = field.q * field.m
    if Z.shape[1:] != (field.q, field.m):
        raise ValidationError(f"cell values {Z.shape[1:]} do not match field ({field.q}, {field.m})")
    d = _weight_diag(weights, field.grid)
    Zc = Z.reshape(n, qm) - field.mean.reshape(qm)[None, :]
    return Zc @ (eigenfunctions.reshape(R, qm) * d[None, :]).T


def importance(weights: WeightScheme, grid: CellGrid, eigenfunctions: np.ndarray) -> np.ndarray:
    """Importance matrix imp[r, j] = w_j * ||phi_rj||^2; rows sum to 1."""
    sq = eigenfunctions ** 2 @ grid.lengths  # (R, q)
    return sq * weights.weights[None, :]


def reconstruct(result: "MfpcaResult", i: int, k: int) -> np.ndarray:
    """Rank-k Karhunen-Loeve reconstruction of trajectory i, shape (q, m).

    k = 0 returns the mean curves; values are real, not 0/1.
    """
    R = result.eigenvalues.size
    if not (0 <= k <= R):
        raise DomainError(f"truncation order k={k} outside [0, {R}]")
    if not (0 <= i < result.scores.shape[0]):
        raise DomainError(f"trajectory index {i} outside the panel")
    out = result.mean.copy()
    for r in range(k):
        out += result.scores[i, r] * result.eigenfunctions[r]
    return out


def mercer_check(result: "MfpcaResult", field: ProbabilityField) -> float:
    """Max absolute deviation of the kernel from its spectral expansion.

    Meaningful when the full decomposition is retained; with a truncated
    result the deviation reflects the discarded tail.
    """
    R = result.eigenvalues.size
    qm = field.q * field.m
    phis = result.eigenfunctions.reshape(R, qm)
    recon = (phis * result.eigenvalues[:, None]).T @ phis
    return float(np.abs(field.cov_matrix - recon).max())


@dataclass(frozen=True)
class MfpcaResult:
    """Everything the decomposition produces, on one grid with one weighting."""

    eigenvalues: np.ndarray        # (R,) descending, >= 0
    eigenfunctions: np.ndarray     # (R, q, m) cell values
    scores: np.ndarray             # (n, R)
    importance: np.ndarray         # (R, q)
    total_variance: float          # sum of all eigenvalues = weighted trace
    mean: np.ndarray               # (q, m)
    weights: WeightScheme
    grid: CellGrid
    mode: str
    states: tuple
    items: tuple                   # ((subject, condition), ...)

    @property
    def variance_proportions(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / self.total_variance

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def R(self) -> int:
        return self.eigenvalues.size

    def components_for_fraction(self, fraction: float) -> int:
        """Smallest k whose retained variance reaches the given fraction."""
        if not (0.0 < fraction <= 1.0):
            raise DomainError(f"variance fraction must be in (0, 1], got {fraction}")
        if self.total_variance <= 0 or self.R == 0:
            return 0
        cum = np.cumsum(self.variance_proportions)
        hit = np.nonzero(cum >= fraction - 1e-15)[0]
        return int(hit[0]) + 1 if hit.size else self.R


def run_mfpca(
    panel: Panel,
    *,
    scheme: str = "equal",
    weights: Optional[WeightScheme] = None,
    grid: Optional[CellGrid] = None,
    max_cells: int = DEFAULT_MAX_CELLS,
    retain: Union[int, str] = "auto",
) -> tuple[MfpcaResult, ProbabilityField]:
    """Full pipeline: cell values -> field -> weights -> eigenproblem -> scores.

    The union grid is used when it has at most ``max_cells`` cells; larger
    panels fall back to a uniform grid of ``max_cells`` cells, on which cell
    values are exact length-weighted averages (an L2 projection).
    """
    if grid is None:
        grid = panel.grid()
        if grid.m > max_cells:
            grid = CellGrid.uniform(max_cells, grid.horizon)
    Z = panel_cell_values(panel, grid, exact=None)
    field = estimate_field_from_cells(Z, grid, panel.space, panel.mode)
    if weights is None:
        weights = compute_weights(field, scheme)
    S = assemble_operator(field, weights)
    evals, phis = eigendecompose(S, weights, field.grid, retain=retain, n_cap=panel.n)
    result = MfpcaResult(
        eigenvalues=evals,
        eigenfunctions=phis,
        scores=scores(Z, field, weights, phis),
        importance=importance(weights, field.grid, phis),
        total_variance=float(np.trace(S)),
        mean=field.mean,
        weights=weights,
        grid=field.grid,
        mode=panel.mode,
        states=panel.space.states,
        items=tuple((it.subject, it.condition) for it in panel.items),
    )
    return result, field

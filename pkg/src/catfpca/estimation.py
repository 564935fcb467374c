"""Empirical probability curves, covariance kernels and weighting schemes.

Everything is computed exactly on a cell grid: when the grid refines all
sample paths (the union grid does by construction), cell values are the
constant segment values and every time integral is a finite sum with no
quadrature error.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels
from .errors import GridError, NumericalError, ValidationError
from .ingest import Panel
from .trajectory import CellGrid, StateSpace

__all__ = [
    "ProbabilityField",
    "WeightScheme",
    "WEIGHT_SCHEMES",
    "panel_cell_values",
    "estimate_field",
    "estimate_field_from_cells",
    "mean_on_grid",
    "compute_weights",
    "selection_count_curve",
    "coarsen_field",
]

WEIGHT_SCHEMES = ("equal", "trace_normalizing", "inverse_mean_probability")

_SCHEME_ALIASES = {
    "equal": "equal",
    "e": "equal",
    "trace_normalizing": "trace_normalizing",
    "trace": "trace_normalizing",
    "inverse_mean_probability": "inverse_mean_probability",
    "invmean": "inverse_mean_probability",
    "pmean": "inverse_mean_probability",
}


class ProbabilityField:
    """Mean curves p_j and covariance kernels gamma_jl on a cell grid.

    ``cov_matrix`` is the flat (q*m, q*m) kernel with block index j*m + a;
    ``cov`` exposes the same memory as a (q, q, m, m) view indexed
    (j, l, a, b).
    """

    __slots__ = ("grid", "space", "mean", "cov_matrix", "n", "mode")

    def __init__(self, grid: CellGrid, space: StateSpace, mean: np.ndarray,
                 cov_matrix: np.ndarray, n: int, mode: str):
        q, m = space.q, grid.m
        mean = np.asarray(mean, dtype=np.float64)
        cov_matrix = np.asarray(cov_matrix, dtype=np.float64)
        if mean.shape != (q, m):
            raise ValidationError(f"mean must have shape {(q, m)}, got {mean.shape}")
        if cov_matrix.shape != (q * m, q * m):
            raise ValidationError(
                f"cov_matrix must have shape {(q * m, q * m)}, got {cov_matrix.shape}"
            )
        mean.setflags(write=False)
        cov_matrix.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_matrix", cov_matrix)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "mode", mode)

    def __setattr__(self, name, value):
        raise AttributeError("ProbabilityField is immutable")

    @property
    def q(self) -> int:
        return self.space.q

    @property
    def m(self) -> int:
        return self.grid.m

    @property
    def cov(self) -> np.ndarray:
        """(q, q, m, m) zero-copy view with entry (j, l, a, b) = gamma_jl(cell a, cell b)."""
        q, m = self.q, self.m
        return self.cov_matrix.reshape(q, m, q, m).transpose(0, 2, 1, 3)

    @property
    def variance_diagonal(self) -> np.ndarray:
        """(q, m) curve of gamma_jj(t, t) values."""
        diag = np.diagonal(self.cov_matrix).reshape(self.q, self.m)
        return diag.copy()

    def __repr__(self) -> str:
        return f"ProbabilityField(q={self.q}, m={self.m}, n={self.n}, mode={self.mode})"


@dataclass(frozen=True)
class WeightScheme:
    """The q positive weights defining the inner product, plus their provenance."""

    scheme: str
    weights: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be a 1-d array of positive finite reals")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def q(self) -> int:
        return self.weights.size

    @property
    def normalized_weights(self) -> np.ndarray:
        """Weights rescaled to sum to one, the form used in reports."""
        return self.weights / self.weights.sum()

    @classmethod
    def equal(cls, q: int) -> "WeightScheme":
        return cls("equal", np.full(q, 1.0 / q), normalized=True)

    def scaled(self, c: float) -> "WeightScheme":
        return WeightScheme(self.scheme, self.weights * c, normalized=False)


def panel_cell_values(panel: Panel, grid: CellGrid, *, exact: Optional[bool] = None) -> np.ndarray:
    """Indicator cell values for the whole panel, shape (n, q, m).

    With ``exact=True`` the grid must refine every trajectory and the values
    are the constant segment values (GridError otherwise).  With
    ``exact=False`` values are length-weighted cell averages, i.e. the L2
    projection onto step functions on the grid.  ``exact=None`` picks the
    exact path when the grid refines the panel and averaging otherwise.
    """
    indicators = panel.indicators()
    mismatched = [it.key for it, ind in zip(panel.items, indicators)
                  if ind.horizon != grid.horizon]
    if mismatched:
        raise GridError(
            f"items with horizon != {grid.horizon}: {', '.join(mismatched[:5])}"
        )
    refines = all(ind.is_constant_on(grid) for ind in indicators)
    if exact is True and not refines:
        bad = [it.key for it, ind in zip(panel.items, indicators) if not ind.is_constant_on(grid)]
        raise GridError(f"grid is not a refinement of: {', '.join(bad[:5])}")
    if refines:
        n, q, m = len(indicators), panel.space.q, grid.m
        out = np.empty((n, q, m))
        for i, ind in enumerate(indicators):
            idx = np.searchsorted(ind.breakpoints, grid.nodes[:-1], side="right") - 1
            out[i] = ind.values[idx].T
        return out
    return _kernels.batch_cell_averages(
        [ind.breakpoints for ind in indicators],
        [ind.values for ind in indicators],
        grid.nodes,
    )


def estimate_field_from_cells(Z: np.ndarray, grid: CellGrid, space: StateSpace,
                              mode: str) -> ProbabilityField:
    """Mean and covariance kernel from precomputed cell values (1/n convention)."""
    n, q, m = Z.shape
    if n < 1:
        raise ValidationError("need at least one trajectory")
    flat = np.ascontiguousarray(Z.reshape(n, q * m))
    mean_flat = flat.mean(axis=0)
    cov = _kernels.cross_moment(flat) / n
    cov -= np.outer(mean_flat, mean_flat)
    cov = 0.5 * (cov + cov.T)
    if not np.all(np.isfinite(cov)):
        raise NumericalError("non-finite covariance kernel entries")
    return ProbabilityField(grid, space, mean_flat.reshape(q, m), cov, n, mode)


def estimate_field(panel: Panel, grid: Optional[CellGrid] = None, *,
                   exact: Optional[bool] = True) -> ProbabilityField:
    """Estimate mean curves and the q x q x m x m covariance kernel.

    Parameters
    ----------
    panel : Panel
        Normalized panel (shared horizon).
    grid : CellGrid, optional
        Defaults to the panel's union grid, on which the estimate is exact.
    exact : bool or None
        Passed to :func:`panel_cell_values`; the default requires the grid
        to refine every trajectory.
    """
    if grid is None:
        grid = panel.grid()
        exact = True
    Z = panel_cell_values(panel, grid, exact=exact)
    return estimate_field_from_cells(Z, grid, panel.space, panel.mode)


def mean_on_grid(panel: Panel, grid: CellGrid) -> np.ndarray:
    """(q, m) mean curves via segment accumulation, without the dense tensor.

    Exact-integer accumulation: each segment adds +-1 at its boundary cells
    and a cumulative sum recovers occupancy counts.  Requires the grid to
    refine the panel.
    """
    q, m = panel.space.q, grid.m
    diff = np.zeros((q, m + 1))
    for it in panel.items:
        traj = it.trajectory
        idx = np.searchsorted(grid.nodes, traj.breakpoints)
        if (idx >= grid.nodes.size).any() or not np.array_equal(grid.nodes[idx], traj.breakpoints):
            raise GridError(f"{it.key}: breakpoints are not grid nodes")
        for k, subset in enumerate(traj.segments):
            for j in subset:
                diff[j, idx[k]] += 1.0
                diff[j, idx[k + 1]] -= 1.0
    return np.cumsum(diff[:, :-1], axis=1) / panel.n


def compute_weights(field: ProbabilityField, scheme: str) -> WeightScheme:
    """Weights for the inner product under one of the three schemes.

    equal: w_j = 1/q.  trace_normalizing: w_j is the reciprocal of the
    integrated variance of state j, which gives every per-state covariance
    operator unit trace.  inverse_mean_probability: w_j is the reciprocal
    of the average probability of occurrence.
    """
    tag = _SCHEME_ALIASES.get(scheme.strip().lower())
    if tag is None:
        raise ValidationError(f"unknown weight scheme {scheme!r}; choose from {WEIGHT_SCHEMES}")
    q = field.q
    if tag == "equal":
        return WeightScheme.equal(q)
    lengths = field.grid.lengths
    if tag == "trace_normalizing":
        integrand = field.mean * (1.0 - field.mean)
        integrals = integrand @ lengths
        kind = "integrated variance"
    else:
        integrals = field.mean @ lengths
        kind = "mean occupancy"
    bad = np.nonzero(integrals <= 0.0)[0]
    if bad.size:
        labels = ", ".join(field.space.states[j] for j in bad)
        raise ValidationError(
            f"states with zero {kind}: {labels}; drop them from the state space "
            "or use the equal weight scheme"
        )
    return WeightScheme(tag, 1.0 / integrals, normalized=False)


def selection_count_curve(obj: Union[ProbabilityField, Panel],
                          grid: Optional[CellGrid] = None) -> tuple[CellGrid, np.ndarray]:
    """Mean number of simultaneously selected states over time.

    Identically 1 for TDS; for TCATA it varies in [0, q].
    """
    if isinstance(obj, ProbabilityField):
        return obj.grid, obj.mean.sum(axis=0)
    if grid is None:
        grid = obj.grid()
    return grid, mean_on_grid(obj, grid).sum(axis=0)


def coarsen_field(field: ProbabilityField, grid: CellGrid) -> ProbabilityField:
    """Aggregate a field onto a coarser grid by length-weighted cell averaging.

    Equal to estimating directly from cell-averaged indicators; kept as an
    explicit operation for fields whose panel is no longer available.
    """
    fine, coarse = field.grid, grid
    if fine.horizon != coarse.horizon:
        raise GridError("grids must share the horizon")
    # overlap weights W[A, a] = |cell_a intersect cell_A| / len(cell_A)
    lo = np.maximum.outer(coarse.nodes[:-1], fine.nodes[:-1])
    hi = np.minimum.outer(coarse.nodes[1:], fine.nodes[1:])
    W = np.clip(hi - lo, 0.0, None) / coarse.lengths[:, None]
    mean = field.mean @ W.T
    q = field.q
    cov4 = field.cov_matrix.reshape(q, fine.m, q, fine.m)
    cov4 = np.einsum("Aa,jalb,Bb->jAlB", W, cov4, W, optimize=True)
    cov_matrix = np.ascontiguousarray(cov4.reshape(q * coarse.m, q * coarse.m))
    return ProbabilityField(coarse, field.space, mean, cov_matrix, field.n, field.mode)

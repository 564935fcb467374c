"""Piecewise-constant categorical and 0/1 indicator trajectories on [0, T].

Segments follow the right-continuous convention: the value on [t_k, t_{k+1})
is segments[k], and the value at the horizon T is the last segment's value.
All types are immutable after construction and safe to share across threads.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, GridError, ValidationError

__all__ = [
    "StateSpace",
    "CategoricalTrajectory",
    "IndicatorVectorTrajectory",
    "CellGrid",
    "to_indicators",
    "union_grid",
]


class StateSpace:
    """Ordered list of q distinct state labels with stable indices."""

    __slots__ = ("states", "_index")

    def __init__(self, states: Sequence[str]):
        states = tuple(str(s) for s in states)
        if len(states) == 0:
            raise ValidationError("state space must contain at least one state")
        if any(s == "" for s in states):
            raise ValidationError("state labels must be non-empty")
        if len(set(states)) != len(states):
            raise ValidationError(f"state labels must be unique, got {states}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "_index", {s: j for j, s in enumerate(states)})

    def __setattr__(self, name, value):
        raise AttributeError("StateSpace is immutable")

    @property
    def q(self) -> int:
        return len(self.states)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise ValidationError(f"unknown state label {label!r}") from None

    def __len__(self) -> int:
        return len(self.states)

    def __eq__(self, other) -> bool:
        return isinstance(other, StateSpace) and self.states == other.states

    def __hash__(self) -> int:
        return hash(self.states)

    def __repr__(self) -> str:
        return f"StateSpace({list(self.states)!r})"


def _as_breakpoints(breakpoints) -> np.ndarray:
    b = np.asarray(breakpoints, dtype=np.float64)
    if b.ndim != 1 or b.size < 2:
        raise ValidationError("breakpoints must be a 1-d array with at least two entries")
    if not np.all(np.isfinite(b)):
        raise ValidationError("breakpoints must be finite")
    if b[0] != 0.0:
        raise ValidationError(f"first breakpoint must be 0, got {b[0]}")
    if np.any(np.diff(b) <= 0.0):
        raise ValidationError("breakpoints must be strictly increasing (zero-length segments are rejected)")
    b.setflags(write=False)
    return b


class CategoricalTrajectory:
    """A map [0, T] -> subset of state indices, constant on m segments.

    Canonical form: adjacent segments always carry different subsets
    (equal neighbours are merged on construction).  TDS trajectories carry
    singleton subsets; TCATA trajectories carry arbitrary subsets
    (the empty set included).
    """

    __slots__ = ("breakpoints", "segments")

    def __init__(self, breakpoints, segments: Iterable[Iterable[int]]):
        b = _as_breakpoints(breakpoints)
        segs = [frozenset(int(j) for j in s) for s in segments]
        if len(segs) != b.size - 1:
            raise ValidationError(
                f"got {len(segs)} segments for {b.size - 1} intervals"
            )
        for s in segs:
            if any(j < 0 for j in s):
                raise ValidationError(f"negative state index in segment subset {sorted(s)}")
        # merge adjacent equal subsets so the representation is canonical
        keep = [0] + [k for k in range(1, len(segs)) if segs[k] != segs[k - 1]]
        if len(keep) != len(segs):
            b = np.concatenate([b[keep], b[-1:]])
            b.setflags(write=False)
            segs = [segs[k] for k in keep]
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "segments", tuple(segs))

    def __setattr__(self, name, value):
        raise AttributeError("CategoricalTrajectory is immutable")

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def evaluate(self, t: float) -> frozenset[int]:
        """Subset active at time t (right-continuous; t == T gives the last segment)."""
        b = self.breakpoints
        if not (b[0] <= t <= b[-1]):
            raise DomainError(f"t={t} outside [0, {b[-1]}]")
        k = int(np.searchsorted(b, t, side="right")) - 1
        if k >= len(self.segments):  # t == T
            k = len(self.segments) - 1
        return self.segments[k]

    def max_state_index(self) -> int:
        return max((max(s) for s in self.segments if s), default=-1)

    def is_tds(self) -> bool:
        return all(len(s) == 1 for s in self.segments)

    def normalize_time(self) -> "CategoricalTrajectory":
        """Rescale to horizon 1 keeping subsets and segment-length proportions."""
        T = self.horizon
        if T <= 0:
            raise ValidationError(f"horizon must be positive, got {T}")
        if T == 1.0:
            return self
        b = self.breakpoints / T
        b = b.copy()
        b[0] = 0.0
        b[-1] = 1.0
        return CategoricalTrajectory(b, self.segments)

    def shift_origin(self, t0: float) -> "CategoricalTrajectory":
        """Restrict to [t0, T] and move the origin to t0."""
        b = self.breakpoints
        if not (b[0] <= t0 < b[-1]):
            raise DomainError(f"shift origin t0={t0} outside [0, {b[-1]})")
        k = int(np.searchsorted(b, t0, side="right")) - 1
        new_b = np.concatenate([[t0], b[k + 1:]]) - t0
        new_b[0] = 0.0
        return CategoricalTrajectory(new_b, self.segments[k:])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CategoricalTrajectory)
            and self.segments == other.segments
            and np.array_equal(self.breakpoints, other.breakpoints)
        )

    def __hash__(self) -> int:
        return hash((self.segments, self.breakpoints.tobytes()))

    def __repr__(self) -> str:
        return (
            f"CategoricalTrajectory(T={self.horizon:g}, "
            f"{self.n_segments} segments)"
        )


class IndicatorVectorTrajectory:
    """Vector of q 0/1 step functions sharing one breakpoint sequence."""

    __slots__ = ("breakpoints", "values")

    def __init__(self, breakpoints, values):
        b = _as_breakpoints(breakpoints)
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != b.size - 1:
            raise ValidationError(
                f"values must have shape (m, q) with m={b.size - 1}, got {v.shape}"
            )
        if not np.isin(v, (0.0, 1.0)).all():
            raise ValidationError("indicator values must be 0 or 1")
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    def __setattr__(self, name, value):
        raise AttributeError("IndicatorVectorTrajectory is immutable")

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def evaluate(self, t: float) -> np.ndarray:
        b = self.breakpoints
        if not (b[0] <= t <= b[-1]):
            raise DomainError(f"t={t} outside [0, {b[-1]}]")
        k = min(int(np.searchsorted(b, t, side="right")) - 1, self.values.shape[0] - 1)
        return self.values[k]

    def argmax_categories(self) -> CategoricalTrajectory:
        """Recover the categorical trajectory of a TDS-derived indicator vector."""
        sums = self.values.sum(axis=1)
        if not np.all(sums == 1.0):
            raise ValidationError("argmax recovery requires exactly one active state per segment")
        segs = [frozenset([int(np.argmax(row))]) for row in self.values]
        return CategoricalTrajectory(self.breakpoints, segs)

    def is_constant_on(self, grid: "CellGrid") -> bool:
        """True when every grid cell lies inside a single segment."""
        interior = self.breakpoints[1:-1]
        if self.horizon != grid.horizon:
            return False
        return bool(np.isin(interior, grid.nodes).all())

    def cell_values(self, grid: "CellGrid") -> np.ndarray:
        """Exact (q, m) cell values; requires the grid to refine this trajectory."""
        if not self.is_constant_on(grid):
            raise GridError("grid does not refine trajectory; use cell_averages")
        idx = np.searchsorted(self.breakpoints, grid.nodes[:-1], side="right") - 1
        return self.values[idx].T.copy()

    def cell_averages(self, grid: "CellGrid") -> np.ndarray:
        """(q, m) length-weighted averages over grid cells (exact integrals)."""
        from ._kernels import cell_averages

        if self.horizon != grid.horizon:
            raise GridError(
                f"trajectory horizon {self.horizon} != grid horizon {grid.horizon}"
            )
        return cell_averages(self.breakpoints, self.values, grid.nodes)

    def __repr__(self) -> str:
        return (
            f"IndicatorVectorTrajectory(T={self.horizon:g}, q={self.q}, "
            f"{self.values.shape[0]} segments)"
        )


class CellGrid:
    """Strictly increasing nodes 0 = u_0 < ... < u_m = T defining m quadrature cells."""

    __slots__ = ("nodes", "lengths")

    def __init__(self, nodes):
        u = _as_breakpoints(nodes)
        object.__setattr__(self, "nodes", u)
        d = np.diff(u)
        d.setflags(write=False)
        object.__setattr__(self, "lengths", d)

    def __setattr__(self, name, value):
        raise AttributeError("CellGrid is immutable")

    @classmethod
    def uniform(cls, m: int, horizon: float = 1.0) -> "CellGrid":
        if m < 1:
            raise ValidationError(f"cell count must be >= 1, got {m}")
        return cls(np.linspace(0.0, horizon, m + 1))

    @property
    def m(self) -> int:
        return self.lengths.size

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def __eq__(self, other) -> bool:
        return isinstance(other, CellGrid) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self) -> int:
        return hash(self.nodes.tobytes())

    def __repr__(self) -> str:
        return f"CellGrid(m={self.m}, T={self.horizon:g})"


def to_indicators(traj: CategoricalTrajectory, space: StateSpace) -> IndicatorVectorTrajectory:
    """Encode a categorical trajectory as q 0/1 indicator functions.

    Entry j at time t is 1 exactly when j belongs to the trajectory's subset
    at t; breakpoints are preserved.
    """
    q = space.q
    values = np.zeros((traj.n_segments, q))
    for k, subset in enumerate(traj.segments):
        for j in subset:
            if j >= q:
                raise ValidationError(
                    f"segment {k} references state index {j}, but the state space has q={q}"
                )
            values[k, j] = 1.0
    return IndicatorVectorTrajectory(traj.breakpoints, values)


def union_grid(trajectories: Sequence) -> CellGrid:
    """Sorted, deduplicated union of all breakpoints.

    Every input trajectory is constant on every cell of the result, which
    makes all time integrals downstream exact sums.
    """
    if len(trajectories) == 0:
        raise ValidationError("union_grid needs at least one trajectory")
    horizons = np.array([t.horizon for t in trajectories])
    if np.any(horizons != horizons[0]):
        bad = [i for i, h in enumerate(horizons) if h != horizons[0]]
        raise ValidationError(
            f"trajectories {bad} have horizon != {horizons[0]}; normalize first"
        )
    nodes = np.unique(np.concatenate([t.breakpoints for t in trajectories]))
    return CellGrid(nodes)

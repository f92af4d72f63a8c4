"""Rectangular state grids with multilinear interpolation.

Value functions and feedback strategies are stored as one scalar (or one
control vector) per grid node, in C order over the node lattice, and
evaluated anywhere in the state box by multilinear interpolation. Queries
outside the box are clamped to it, never extrapolated: extrapolation would
break the sup-norm nonexpansiveness that makes the fixed-point iteration a
contraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import GridMismatchError, InvalidInputError
from .games import Box


@dataclass(frozen=True)
class Grid:
    """Per-dimension node coordinates, strictly increasing, >= 2 nodes."""

    nodes: tuple

    def __post_init__(self):
        nodes = tuple(np.asarray(n, dtype=float) for n in self.nodes)
        if not nodes:
            raise InvalidInputError("grid needs at least one dimension")
        for n in nodes:
            if n.ndim != 1 or n.size < 2:
                raise InvalidInputError("each dimension needs >= 2 nodes")
            if not np.all(np.diff(n) > 0):
                raise InvalidInputError("grid nodes must be strictly increasing")
            n.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, box: Box, counts) -> "Grid":
        counts = [counts] * box.dim if np.isscalar(counts) else list(counts)
        if len(counts) != box.dim:
            raise InvalidInputError("need one node count per dimension")
        return cls(tuple(
            np.linspace(box.lower[d], box.upper[d], int(counts[d]))
            for d in range(box.dim)))

    @property
    def ndim(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple:
        return tuple(len(n) for n in self.nodes)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def bounds(self) -> Box:
        return Box(np.array([n[0] for n in self.nodes]),
                   np.array([n[-1] for n in self.nodes]))

    @cached_property
    def points(self) -> np.ndarray:
        """All node coordinates, (num_nodes, ndim), C order."""
        mesh = np.meshgrid(*self.nodes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    def spans(self, box: Box, tol=1e-12) -> bool:
        """True when the first/last nodes coincide with the box bounds."""
        if box.dim != self.ndim:
            return False
        return all(
            abs(n[0] - box.lower[d]) <= tol and abs(n[-1] - box.upper[d]) <= tol
            for d, n in enumerate(self.nodes))

    def same_as(self, other: "Grid") -> bool:
        return self.ndim == other.ndim and all(
            np.array_equal(a, b) for a, b in zip(self.nodes, other.nodes))

    def stencil(self, points):
        return kernels.build_stencil(self.nodes, points)


@dataclass(frozen=True)
class GridFunction:
    """Scalar field sampled at grid nodes (flat, C order)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel().copy()
        if v.size != self.grid.num_nodes:
            raise InvalidInputError(
                f"got {v.size} values for a grid with {self.grid.num_nodes} nodes")
        if not np.isfinite(v).all():
            raise InvalidInputError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.points), dtype=float))

    def shaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True)
class StrategyField:
    """Feedback strategy sampled at grid nodes: one control vector per node,
    each inside the player's control box."""

    grid: Grid
    controls: np.ndarray
    control_box: Box

    def __post_init__(self):
        c = np.asarray(self.controls, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape != (self.grid.num_nodes, self.control_box.dim):
            raise InvalidInputError(
                f"controls must have shape ({self.grid.num_nodes}, "
                f"{self.control_box.dim}), got {c.shape}")
        if not np.isfinite(c).all():
            raise InvalidInputError("strategy controls must be finite")
        if not self.control_box.contains(c):
            raise InvalidInputError("strategy controls must lie in the control box")
        c = self.control_box.clamp(c)
        c.setflags(write=False)
        object.__setattr__(self, "controls", c)

    @classmethod
    def constant(cls, grid: Grid, control, box: Box) -> "StrategyField":
        control = np.atleast_1d(np.asarray(control, dtype=float))
        return cls(grid, np.tile(control, (grid.num_nodes, 1)), box)

    @classmethod
    def from_callable(cls, grid: Grid, fn, box: Box) -> "StrategyField":
        raw = np.asarray(fn(grid.points), dtype=float)
        if raw.ndim == 1:
            raw = raw[:, None]
        return cls(grid, box.clamp(raw), box)

    @property
    def control_dim(self) -> int:
        return self.control_box.dim


def interpolate(f, x):
    """Multilinear interpolation of a GridFunction or StrategyField.

    ``x`` may be a single state vector (ndim,) or a batch (M, ndim);
    out-of-box queries are clamped. Strategy outputs are clamped into the
    control box (a no-op up to rounding, since node controls already lie in
    the convex box).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    idx, w = f.grid.stencil(pts)
    interp = _interp_kernel(pts.shape[0])
    if isinstance(f, GridFunction):
        out = interp(f.values, idx, w)
        return float(out[0]) if single else out
    out = np.stack([interp(f.controls[:, k], idx, w)
                    for k in range(f.control_dim)], axis=-1)
    out = f.control_box.clamp(out)
    return out[0] if single else out


# below this batch size the compiled kernel's dispatch overhead exceeds the
# work, so the plain numpy gather is used regardless of the active backend
_SMALL_BATCH = 4096


def _interp_kernel(batch_size):
    if batch_size < _SMALL_BATCH:
        return kernels.NUMPY_KERNELS["interp"]
    return kernels.ACTIVE["interp"]


def profile_controls(strategies, x_batch):
    """Interpolate every strategy at a batch of states, sharing the stencil
    between strategies that live on the same grid (the common case on hot
    rollout paths)."""
    stencils = {}
    out = []
    interp = _interp_kernel(x_batch.shape[0])
    for s in strategies:
        key = id(s.grid)
        if key not in stencils:
            stencils[key] = s.grid.stencil(x_batch)
        idx, w = stencils[key]
        cols = [interp(s.controls[:, k], idx, w)
                for k in range(s.control_dim)]
        out.append(s.control_box.clamp(np.stack(cols, axis=-1)))
    return out


def lipschitz_estimate(f) -> float:
    """Exact Lipschitz constant of the multilinear interpolant, taken as the
    max over dimensions of the largest adjacent-node difference quotient.

    For vector fields the numerator is the Euclidean norm of the control
    difference. The constant certifies the 1-norm on state differences; in
    one dimension that is the plain Lipschitz constant.
    """
    if isinstance(f, GridFunction):
        data = f.values.reshape(f.grid.shape + (1,))
    else:
        data = f.controls.reshape(f.grid.shape + (f.control_dim,))
    worst = 0.0
    for d in range(f.grid.ndim):
        diffs = np.diff(data, axis=d)
        norms = np.linalg.norm(diffs, axis=-1)
        spacing = np.diff(f.grid.nodes[d]).reshape(
            [-1 if k == d else 1 for k in range(f.grid.ndim)])
        worst = max(worst, float(np.max(norms / spacing)))
    return worst


def sup_diff(a: GridFunction, b: GridFunction) -> float:
    """Sup-norm distance between two grid functions on the same grid."""
    if not a.grid.same_as(b.grid):
        raise GridMismatchError("grid functions live on different grids")
    return float(np.max(np.abs(a.values - b.values)))

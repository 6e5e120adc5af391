"""Regular tensor grids on boxes.

Node-centred grids with ``N`` (odd) nodes per axis, row-major storage with
axis 0 slowest.  Provides multilinear interpolation, second-order finite
difference gradients and tensor-product composite Simpson quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Box",
    "Grid",
    "ScalarField",
    "VectorField",
    "make_grid",
    "interpolate",
    "interpolation_matrix",
    "gradient",
    "simpson_weights",
    "simpson_integrate",
    "unit_box",
]

# slack admitted for query points on the box boundary
BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) == 0 or len(lower) != len(upper):
            raise ValueError(f"box bounds must be non-empty and of equal length, got {lower} and {upper}")
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
                raise ValueError(f"box axis {i}: need lower < upper, got [{lo}, {hi}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, lo: float, hi: float, d: int) -> "Box":
        return cls((lo,) * d, (hi,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    def contains(self, points, slack: float = BOUNDARY_SLACK) -> np.ndarray:
        points = np.atleast_2d(points)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.all((points >= lo - slack) & (points <= hi + slack), axis=1)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, data: dict) -> "Box":
        return cls(tuple(data["lower"]), tuple(data["upper"]))


def unit_box(d: int) -> Box:
    return Box.cube(0.0, 1.0, d)


@dataclass(frozen=True)
class Grid:
    box: Box
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3 or self.n % 2 == 0:
            raise ValueError(f"nodes per axis must be an odd integer >= 3, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @cached_property
    def axes(self) -> tuple:
        k = np.arange(self.n)
        return tuple(
            lo + k * (hi - lo) / (self.n - 1) for lo, hi in zip(self.box.lower, self.box.upper)
        )

    @cached_property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.box.upper) - np.asarray(self.box.lower)) / (self.n - 1)

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(N**d, d)`` in row-major order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self) -> dict:
        return {"box": self.box.to_dict(), "n": self.n}

    @classmethod
    def from_dict(cls, data: dict) -> "Grid":
        return cls(Box.from_dict(data["box"]), int(data["n"]))


def make_grid(box: Box, n: int) -> Grid:
    return Grid(box, n)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {values.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, fun) -> "ScalarField":
        """Sample ``fun`` (mapping ``(m, d)`` points to ``(m,)`` values) on the nodes."""
        return cls(grid, np.asarray(fun(grid.nodes()), dtype=float))

    def __add__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"box": self.grid.box.to_dict(), "n": self.grid.n, "values": self.values.ravel().tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "ScalarField":
        return cls(Grid(Box.from_dict(data["box"]), int(data["n"])), np.asarray(data["values"], float))


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        d = self.grid.d
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size * d:
            raise ValueError(f"expected {self.grid.size} {d}-vectors, got {values.size} numbers")
        values = values.reshape(self.grid.shape + (d,))
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def to_dict(self) -> dict:
        return {
            "box": self.grid.box.to_dict(),
            "n": self.grid.n,
            "values": self.values.reshape(-1, self.grid.d).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VectorField":
        return cls(Grid(Box.from_dict(data["box"]), int(data["n"])), np.asarray(data["values"], float))


def _cell_coordinates(grid: Grid, points: np.ndarray):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.d:
        raise ValueError(f"points have dimension {points.shape[1]}, grid has {grid.d}")
    lo, hi = np.asarray(grid.box.lower), np.asarray(grid.box.upper)
    bad = (points < lo - BOUNDARY_SLACK) | (points > hi + BOUNDARY_SLACK)
    if bad.any():
        i, axis = np.argwhere(bad)[0]
        raise ValueError(
            f"point {i} {points[i].tolist()} lies outside the grid box on axis {axis} "
            f"([{lo[axis]}, {hi[axis]}])"
        )
    t = (np.clip(points, lo, hi) - lo) / grid.spacing
    cell = np.minimum(np.floor(t).astype(np.int64), grid.n - 2)
    return cell, t - cell


def interpolation_matrix(grid: Grid, points) -> sp.csr_matrix:
    """Sparse ``(m, N**d)`` matrix of multilinear interpolation weights."""
    cell, frac = _cell_coordinates(grid, points)
    m, d = cell.shape
    strides = grid.n ** np.arange(d - 1, -1, -1)
    rows, cols, vals = [], [], []
    for corner in product((0, 1), repeat=d):
        corner = np.asarray(corner)
        w = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=1)
        rows.append(np.arange(m))
        cols.append((cell + corner) @ strides)
        vals.append(w)
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, grid.size),
    )
    mat.sum_duplicates()
    return mat


def interpolate(field, points) -> np.ndarray:
    """Multilinear interpolation of a scalar or vector field at ``points``.

    Points outside the box (beyond a 1e-12 slack) raise ``ValueError``; the
    interpolant is never extrapolated.
    """
    cell, frac = _cell_coordinates(field.grid, points)
    d = field.grid.d
    vals = field.values
    out = 0.0
    for corner in product((0, 1), repeat=d):
        corner = np.asarray(corner)
        w = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=1)
        idx = tuple((cell + corner).T)
        term = vals[idx]
        out = out + (w[:, None] * term if term.ndim == 2 else w * term)
    return np.asarray(out)


def gradient(field: ScalarField) -> VectorField:
    """Second-order finite-difference gradient.

    Central differences inside, three-point one-sided stencils on the faces,
    so quadratics are differentiated exactly.
    """
    grid = field.grid
    comps = [
        np.gradient(field.values, grid.spacing[k], axis=k, edge_order=2) for k in range(grid.d)
    ]
    return VectorField(grid, np.stack(comps, axis=-1))


def simpson_weights(n: int, h: float) -> np.ndarray:
    if n < 3 or n % 2 == 0:
        raise ValueError(f"Simpson's rule needs an odd number (>= 3) of nodes, got {n}")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def simpson_integrate(field: ScalarField, weight: ScalarField | None = None) -> float:
    grid = field.grid
    values = field.values
    if weight is not None:
        if weight.grid != grid:
            raise ValueError("weight must live on the same grid as the field")
        values = values * weight.values
    for k in range(grid.d):
        # contracting axis 0 each time walks through the axes in order
        values = np.tensordot(simpson_weights(grid.n, grid.spacing[k]), values, axes=(0, 0))
    return float(values)

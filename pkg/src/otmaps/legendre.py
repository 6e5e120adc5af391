"""Discrete Legendre-Fenchel transforms on grids.

The 1-D kernel is the linear-time Legendre transform: lower convex hull of
the points ``(x_i, f_i)`` followed by a merge sweep over the sorted slopes.
The hull only discards points that can never attain the maximum of
``x_i * y - f_i``, so the result is the exact discrete maximum even for
non-convex data.  The d-D transform is a sequence of such exact per-axis
maxima, which also yields the maximising node for every target node (used as
a subgradient by the semi-dual optimiser).  Exact ties go to the smallest
row-major source index.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .grid import Box, Grid, ScalarField

__all__ = [
    "llt_1d",
    "legendre_d",
    "legendre_bruteforce",
    "convex_envelope",
    "quadratic_conjugate",
]


@njit(cache=True)
def _llt_line(x, u, y, hull, out, arg):
    """Exact ``max_i x_i * y_j - u_i`` for sorted ``y`` into ``out``/``arg``."""
    nx = x.shape[0]
    top = 0
    for i in range(nx):
        # keep strictly convex turns only; collinear interior points are dropped
        while top >= 2:
            a = hull[top - 2]
            b = hull[top - 1]
            cross = (x[b] - x[a]) * (u[i] - u[a]) - (u[b] - u[a]) * (x[i] - x[a])
            if cross <= 0.0:
                top -= 1
            else:
                break
        hull[top] = i
        top += 1
    k = 0
    for j in range(y.shape[0]):
        yj = y[j]
        best = x[hull[k]] * yj - u[hull[k]]
        while k + 1 < top:
            cand = x[hull[k + 1]] * yj - u[hull[k + 1]]
            if cand > best:
                best = cand
                k += 1
            else:
                break
        out[j] = best
        arg[j] = hull[k]


@njit(cache=True)
def _llt_lines(x, U, y, out, arg):
    hull = np.empty(x.shape[0], dtype=np.int64)
    for line in range(U.shape[0]):
        _llt_line(x, U[line], y, hull, out[line], arg[line])


@njit(cache=True)
def _axis_pass3(V, x, y, out, arg):
    """Axis pass on a ``(lead, n, trail)`` view: ``out[a, j, b] = max_i x_i y_j + V[a, i, b]``."""
    nx = x.shape[0]
    ny = y.shape[0]
    hull = np.empty(nx, dtype=np.int64)
    u = np.empty(nx)
    o = np.empty(ny)
    g = np.empty(ny, dtype=np.int64)
    for a in range(V.shape[0]):
        for b in range(V.shape[2]):
            for i in range(nx):
                u[i] = -V[a, i, b]
            _llt_line(x, u, y, hull, o, g)
            for j in range(ny):
                out[a, j, b] = o[j]
                arg[a, j, b] = g[j]


@njit(cache=True)
def _backtrack(args, offsets, shape_x, shape_y, targets, out):
    """Row-major source index of the maximiser for the given target nodes.

    ``args`` concatenates the flattened argmax arrays of the axis passes,
    pass ``axis`` starting at ``offsets[axis]``; that pass is indexed by
    ``(i_0..i_{axis-1}, j_axis..j_{d-1})``.
    """
    d = shape_x.shape[0]
    strides = np.zeros((d, d), dtype=np.int64)
    for axis in range(d):
        s = 1
        for k in range(d - 1, -1, -1):
            strides[axis, k] = s
            s *= shape_x[k] if k < axis else shape_y[k]
    jj = np.empty(d, dtype=np.int64)
    ii = np.empty(d, dtype=np.int64)
    for t in range(targets.shape[0]):
        rem = targets[t]
        for k in range(d - 1, -1, -1):
            jj[k] = rem % shape_y[k]
            rem //= shape_y[k]
        for axis in range(d):
            flat = offsets[axis]
            for k in range(axis):
                flat += ii[k] * strides[axis, k]
            for k in range(axis, d):
                flat += jj[k] * strides[axis, k]
            ii[axis] = args[flat]
        src = 0
        for k in range(d):
            src = src * shape_x[k] + ii[k]
        out[t] = src


def _check_nodes(x: np.ndarray, name: str) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array")
    if np.any(np.diff(x) <= 0):
        raise ValueError(f"{name} must be strictly increasing (no duplicates)")
    return x


def llt_1d(x_nodes, f_values, y_nodes, return_argmax: bool = False):
    """``g[j] = max_i x_i * y_j - f_i`` in ``O(len(x) + len(y))``.

    ``y_nodes`` may come in any order; ``x_nodes`` must be strictly increasing.
    """
    x = _check_nodes(x_nodes, "x_nodes")
    f = np.ascontiguousarray(f_values, dtype=float)
    if f.shape != x.shape:
        raise ValueError(f"f_values has shape {f.shape}, x_nodes has {x.shape}")
    y = np.asarray(y_nodes, dtype=float).ravel()
    order = np.argsort(y, kind="stable")
    out = np.empty((1, y.size))
    arg = np.empty((1, y.size), dtype=np.int64)
    _llt_lines(x, f[None, :], np.ascontiguousarray(y[order]), out, arg)
    values = np.empty(y.size)
    values[order] = out[0]
    if not return_argmax:
        return values
    argmax = np.empty(y.size, dtype=np.int64)
    argmax[order] = arg[0]
    return values, argmax


def _axis_pass(V: np.ndarray, axis: int, x: np.ndarray, y: np.ndarray):
    """``max_i x_i * y + V[..., i, ...]`` along ``axis``."""
    lead = int(np.prod(V.shape[:axis]))
    trail = int(np.prod(V.shape[axis + 1 :]))
    out = np.empty(V.shape[:axis] + (y.size,) + V.shape[axis + 1 :])
    arg = np.empty(out.shape, dtype=np.int64)
    _axis_pass3(
        np.ascontiguousarray(V).reshape(lead, V.shape[axis], trail),
        x,
        y,
        out.reshape(lead, y.size, trail),
        arg.reshape(lead, y.size, trail),
    )
    return out, arg


def legendre_d(f: ScalarField, grid_y: Grid, return_argmax: bool = False, targets=None):
    """Discrete conjugate ``g(y_j) = max_i <x_i, y_j> - f(x_i)`` on ``grid_y``.

    With ``return_argmax`` also returns, for every target node (row-major),
    the row-major index of the maximising source node; ``targets`` restricts
    that second output to the listed row-major target indices.
    """
    grid_x = f.grid
    d = grid_x.d
    if grid_y.d != d:
        raise ValueError(f"dimension mismatch: source grid is {d}-D, target grid is {grid_y.d}-D")
    V = -np.asarray(f.values, dtype=float)
    args = [None] * d
    for axis in reversed(range(d)):
        V, args[axis] = _axis_pass(V, axis, grid_x.axes[axis], grid_y.axes[axis])
    g = ScalarField(grid_y, V)
    if not return_argmax:
        return g
    targets = np.arange(grid_y.size) if targets is None else np.asarray(targets, dtype=np.int64)
    flat = np.empty(targets.size, dtype=np.int64)
    sizes = np.array([a.size for a in args], dtype=np.int64)
    _backtrack(
        np.concatenate([a.ravel() for a in args]),
        np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64),
        np.asarray(grid_x.shape, dtype=np.int64),
        np.asarray(grid_y.shape, dtype=np.int64),
        targets,
        flat,
    )
    return g, flat


def legendre_bruteforce(f: ScalarField, grid_y: Grid, return_argmax: bool = False, chunk: int = 4096):
    """Direct ``O(N_x * N_y)`` evaluation of the discrete conjugate (test oracle)."""
    if grid_y.d != f.grid.d:
        raise ValueError("dimension mismatch")
    xs = f.grid.nodes()
    fv = f.values.ravel()
    ys = grid_y.nodes()
    vals = np.empty(len(ys))
    args = np.empty(len(ys), dtype=np.int64)
    for s in range(0, len(ys), chunk):
        scores = ys[s : s + chunk] @ xs.T - fv
        args[s : s + chunk] = np.argmax(scores, axis=1)
        vals[s : s + chunk] = scores[np.arange(len(scores)), args[s : s + chunk]]
    g = ScalarField(grid_y, vals)
    return (g, args) if return_argmax else g


def convex_envelope(f: ScalarField, via_grid: Grid) -> ScalarField:
    """Biconjugate of ``f`` through the slope grid ``via_grid``.

    The largest function below ``f`` that is a maximum of affine functions
    with slopes on ``via_grid``; equals ``f`` where ``f`` is convex and its
    slopes lie on the slope grid.
    """
    return legendre_d(legendre_d(f, via_grid), f.grid)


def quadratic_conjugate(a: float, b, c: float, t, U: Box, y) -> np.ndarray:
    """Closed-form conjugate of ``a/2 |x-t|^2 + <b, x-t> + c`` restricted to ``x`` in ``U``.

    ``y`` may be a single point or an ``(m, d)`` array.  The squared distance to
    the box is computed coordinatewise by clamping.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    b = np.broadcast_to(np.asarray(b, dtype=float), y.shape[1:])
    t = np.broadcast_to(np.asarray(t, dtype=float), y.shape[1:])
    z = (y - b) / a + t
    dist2 = np.sum((z - np.clip(z, U.lower, U.upper)) ** 2, axis=1)
    val = np.sum((y - b) ** 2, axis=1) / (2 * a) + y @ t - c - 0.5 * a * dist2
    return val[0] if single else val

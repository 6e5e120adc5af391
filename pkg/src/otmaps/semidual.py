"""Wavelet-parametrised semi-dual estimator of a transport map.

The potential is a grid field ``f = W^T gamma`` synthesised from the
coarsest wavelet coefficients.  The empirical semi-dual

    S_n(gamma) = mean_i P_x[f](X_i) + mean_i P_y[L f](Y_i)

(``P`` multilinear interpolation, ``L`` the discrete Legendre transform onto
the target grid) is convex and piecewise linear in ``gamma``; it is minimised
by a limited-memory quasi-Newton method using the subgradient given by the
maximising node of every conjugate value.  The fitted map is the finite
difference gradient of the convex envelope of ``f``, interpolated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .grid import (
    Box,
    Grid,
    ScalarField,
    VectorField,
    gradient,
    interpolate,
    interpolation_matrix,
    simpson_weights,
    unit_box,
)
from .legendre import convex_envelope, legendre_d
from .models import TransportMap
from .wavelet import TruncatedSynthesis, max_levels

__all__ = [
    "SemidualProblem",
    "OptimizerOptions",
    "MinimizeResult",
    "WaveletMap",
    "StabilityReport",
    "objective",
    "subgradient",
    "minimize",
    "fit_wavelet",
    "potential_field",
    "population_semidual",
    "select_scale",
    "stability_certificate",
]


class SemidualProblem:
    """Empirical semi-dual over scale-``J`` coefficients.

    The interpolation weights of the samples are accumulated once, so an
    evaluation costs one synthesis, one Legendre transform and one adjoint
    synthesis regardless of ``n``.
    """

    def __init__(self, X, Y, grid_x: Grid, grid_y: Grid, J: int):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[0] < 1 or X.shape[0] != Y.shape[0]:
            raise ValueError(f"need equal, non-zero sample sizes, got {X.shape[0]} and {Y.shape[0]}")
        if X.shape[1] != grid_x.d or Y.shape[1] != grid_y.d:
            raise ValueError("sample dimension does not match the grids")
        self.X, self.Y = X, Y
        self.grid_x, self.grid_y, self.J = grid_x, grid_y, J
        self.synthesis = TruncatedSynthesis(grid_x, J)
        n = X.shape[0]
        self.weight_x = np.asarray(interpolation_matrix(grid_x, X).sum(axis=0)).ravel() / n
        self.weight_y = np.asarray(interpolation_matrix(grid_y, Y).sum(axis=0)).ravel() / n
        self._support_y = np.flatnonzero(self.weight_y)

    @property
    def size(self) -> int:
        return self.synthesis.size

    def field(self, gamma) -> ScalarField:
        return ScalarField(self.grid_x, self.synthesis.apply(np.asarray(gamma, dtype=float)))

    def value_and_grad(self, gamma):
        f = self.field(gamma)
        conj, arg = legendre_d(f, self.grid_y, return_argmax=True, targets=self._support_y)
        value = self.weight_x @ f.values.ravel() + self.weight_y @ conj.values.ravel()
        # d conj_j / d f_i = -1 exactly at the maximising node
        df = self.weight_x - np.bincount(arg, weights=self.weight_y[self._support_y], minlength=self.grid_x.size)
        return float(value), self.synthesis.adjoint(df)


def objective(problem: SemidualProblem, gamma) -> float:
    return problem.value_and_grad(gamma)[0]


def subgradient(problem: SemidualProblem, gamma) -> np.ndarray:
    return problem.value_and_grad(gamma)[1]


@dataclass(frozen=True)
class OptimizerOptions:
    memory: int = 10
    max_iters: int = 10000
    rel_tol: float = 1e-9
    armijo_c1: float = 1e-4
    max_halvings: int = 60

    def __post_init__(self):
        if self.memory < 1 or self.max_iters < 1 or self.max_halvings < 1:
            raise ValueError("memory, max_iters and max_halvings must be >= 1")
        if not (self.rel_tol > 0 and 0 < self.armijo_c1 < 1):
            raise ValueError("need rel_tol > 0 and 0 < armijo_c1 < 1")


@dataclass
class MinimizeResult:
    gamma: np.ndarray
    trace: list
    iters: int
    converged: bool
    line_search_failed: bool = False

    def __iter__(self):
        # unpacks as (gamma_hat, trace)
        return iter((self.gamma, self.trace))


def _two_loop(g, S, Yv):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Yv)):
        a = (s @ q) / (y @ s)
        alphas.append(a)
        q -= a * y
    s, y = S[-1], Yv[-1]
    q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(S, Yv), reversed(alphas)):
        b = (y @ q) / (y @ s)
        q += (a - b) * s
    return -q


def minimize(problem, gamma0=None, opts: OptimizerOptions | None = None) -> MinimizeResult:
    """L-BFGS with Armijo backtracking (halving) on a convex, possibly non-smooth objective.

    ``problem`` needs ``value_and_grad(gamma)`` and ``size``.  Stops when the
    relative decrease ``(f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1)`` drops
    below ``opts.rel_tol`` or after ``opts.max_iters`` iterations.  When no
    step satisfies the Armijo condition even along the negative subgradient,
    the current iterate is returned with ``line_search_failed`` set.
    """
    opts = opts or OptimizerOptions()
    x = np.zeros(problem.size) if gamma0 is None else np.array(gamma0, dtype=float).ravel()
    if x.size != problem.size:
        raise ValueError(f"gamma0 has {x.size} entries, the problem has {problem.size}")
    fx, g = problem.value_and_grad(x)
    trace = [fx]
    S, Yv = [], []
    step_hint = 1.0
    for it in range(1, opts.max_iters + 1):
        gnorm = np.linalg.norm(g)
        if gnorm == 0.0:
            return MinimizeResult(x, trace, it - 1, True)
        accepted = None
        for quasi_newton in ((True, False) if S else (False,)):
            if quasi_newton:
                direction = _two_loop(g, S, Yv)
                slope = g @ direction
                t = 1.0
                if slope >= 0:
                    continue
            else:
                S.clear()
                Yv.clear()
                direction = -g
                slope = -gnorm**2
                t = step_hint / gnorm
            for _ in range(opts.max_halvings):
                x_new = x + t * direction
                f_new, g_new = problem.value_and_grad(x_new)
                if f_new <= fx + opts.armijo_c1 * t * slope:
                    accepted = (x_new, f_new, g_new)
                    break
                t *= 0.5
            if accepted is not None:
                break
        if accepted is None:
            return MinimizeResult(x, trace, it - 1, False, True)
        x_new, f_new, g_new = accepted
        s, y = x_new - x, g_new - g
        # curvature pairs of a piecewise linear function can be degenerate
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Yv.append(y)
            if len(S) > opts.memory:
                S.pop(0)
                Yv.pop(0)
        step_hint = np.linalg.norm(s)
        rel = (fx - f_new) / max(abs(fx), abs(f_new), 1.0)
        x, fx, g = x_new, f_new, g_new
        trace.append(fx)
        if rel < opts.rel_tol:
            return MinimizeResult(x, trace, it, True)
    return MinimizeResult(x, trace, opts.max_iters, False)


@dataclass(eq=False)
class WaveletMap(TransportMap):
    """Gradient of the fitted potential on the source grid, multilinearly interpolated."""

    map_values: VectorField
    meta: dict = field(default_factory=dict)
    potential: ScalarField | None = field(default=None, repr=False)
    kind = "wavelet"

    @property
    def grid(self) -> Grid:
        return self.map_values.grid

    def __call__(self, points) -> np.ndarray:
        return interpolate(self.map_values, points)

    def to_dict(self) -> dict:
        out = {
            "kind": "wavelet",
            "grid": self.grid.to_dict(),
            "map_values": self.map_values.values.reshape(-1, self.grid.d).tolist(),
            "meta": self.meta,
        }
        if self.potential is not None:
            out["potential"] = self.potential.values.ravel().tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WaveletMap":
        grid = Grid.from_dict(data["grid"])
        potential = data.get("potential")
        return cls(
            VectorField(grid, np.asarray(data["map_values"], float)),
            dict(data.get("meta", {})),
            None if potential is None else ScalarField(grid, np.asarray(potential, float)),
        )


def potential_field(problem: SemidualProblem, gamma) -> ScalarField:
    return problem.field(gamma)


def fit_wavelet(
    X,
    Y,
    source_box: Box,
    target_box: Box,
    N: int = 65,
    J: int = 1,
    opts: OptimizerOptions | None = None,
    envelope: bool = True,
    seed=None,
) -> WaveletMap:
    """Fit the scale-``J`` semi-dual estimator.

    With ``envelope`` (default) the map is the gradient of the convex
    envelope of the fitted potential, otherwise of the raw potential.  The
    raw potential is kept on the model (``potential``) for scale selection.
    """
    grid_x, grid_y = Grid(source_box, N), Grid(target_box, N)
    problem = SemidualProblem(X, Y, grid_x, grid_y, J)
    result = minimize(problem, None, opts)
    f = problem.field(result.gamma)
    shaped = convex_envelope(f, grid_y) if envelope else f
    meta = {
        "J": J,
        "N": N,
        "iters": result.iters,
        "converged": result.converged,
        "line_search_failed": result.line_search_failed,
        "objective_trace": [float(v) for v in result.trace],
        "envelope": envelope,
        "target_box": target_box.to_dict(),
        "seed": seed,
    }
    return WaveletMap(gradient(shaped), meta, f)


def _unit_quadrature(d: int, n: int):
    grid = Grid(unit_box(d), n)
    w = simpson_weights(n, grid.spacing[0])
    weights = w
    for _ in range(d - 1):
        weights = np.multiply.outer(weights, w)
    return grid.nodes(), weights.ravel()


def population_semidual(f: ScalarField, T0, target_grid: Grid, quad_n: int = 33) -> float:
    """``int f dP + int (L f)(T0(x)) dP`` for ``P = Unif([0,1]^d)`` by Simpson's rule.

    ``L f`` is the discrete conjugate on ``target_grid``, interpolated at
    ``T0`` of the quadrature nodes.
    """
    nodes, w = _unit_quadrature(f.grid.d, quad_n)
    conj = legendre_d(f, target_grid)
    return float(w @ interpolate(f, nodes) + w @ interpolate(conj, T0(nodes)))


def select_scale(X, Y, problem, N: int = 65, scales=None, opts=None, envelope: bool = True, quad_n=None):
    """Oracle scale: fit every ``J`` and keep the smallest population semi-dual.

    ``problem`` supplies the boxes and ``eval_T0``.  Returns ``(model, values)``
    with ``values[J]`` the population objective of the raw potential.
    """
    scales = list(range(max_levels(N) + 1)) if scales is None else list(scales)
    if not scales:
        raise ValueError("empty scale list")
    quad_n = quad_n or ((N + 1) // 2) | 1
    target_grid = Grid(problem.target_box, N)
    best, values = None, {}
    for J in scales:
        model = fit_wavelet(X, Y, problem.source_box, problem.target_box, N, J, opts, envelope)
        values[J] = population_semidual(model.potential, problem.eval_T0, target_grid, quad_n)
        if best is None or values[J] < values[best[0]]:
            best = (J, model)
    best[1].meta["scale_values"] = {str(k): v for k, v in values.items()}
    return best[1], values


# ---------------------------------------------------------------------------
# stability certificate


@dataclass(frozen=True)
class StabilityReport:
    gap: float
    l2_dist_sq: float
    M: float
    lower_ok: bool
    upper_ok: bool
    tol: float = 1e-4

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


class _LocalQuadratic:
    """Second-order Taylor models of a grid field around its nodes.

    Finite-difference gradient and Hessian are stored per node; values are
    extrapolated from the nearest node, which is exact at nodes and
    third-order accurate in between.
    """

    def __init__(self, f: ScalarField):
        grid = f.grid
        self.grid, self.values = grid, f.values
        d = grid.d
        grad = gradient(f).values
        hess = np.empty(grid.shape + (d, d))
        for i in range(d):
            for j in range(d):
                hess[..., i, j] = np.gradient(grad[..., i], grid.spacing[j], axis=j, edge_order=2)
        self.grad_field = VectorField(grid, grad)
        self.hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
        self.lo = np.asarray(grid.box.lower)
        self.hi = np.asarray(grid.box.upper)

    def _nearest(self, z):
        idx = np.rint((z - self.lo) / self.grid.spacing).astype(np.int64)
        idx = np.clip(idx, 0, self.grid.n - 1)
        node = self.lo + idx * self.grid.spacing
        return tuple(idx.T), z - node

    def value(self, z):
        idx, delta = self._nearest(z)
        g, H = self.grad_field.values[idx], self.hess[idx]
        return self.values[idx] + np.sum(g * delta, 1) + 0.5 * np.einsum("ni,nij,nj->n", delta, H, delta)

    def grad(self, z):
        idx, delta = self._nearest(z)
        return self.grad_field.values[idx] + np.einsum("nij,nj->ni", self.hess[idx], delta)

    def conjugate(self, y, start, iters: int = 30):
        """``sup_z <z, y> - f(z)`` over the grid box by damped Newton from ``start``."""
        z = np.array(start, dtype=float)
        for _ in range(iters):
            r = self.grad(z) - y
            H = self.hess[self._nearest(z)[0]]
            step = np.linalg.solve(H + 1e-12 * np.eye(len(self.lo)), r[..., None])[..., 0]
            z_new = np.clip(z - step, self.lo, self.hi)
            if np.max(np.abs(z_new - z)) < 1e-13:
                z = z_new
                break
            z = z_new
        refined = np.sum(z * y, 1) - self.value(z)
        # never report less than the best node of the cell around the optimum
        cell = np.clip(np.floor((z - self.lo) / self.grid.spacing).astype(np.int64), 0, self.grid.n - 2)
        best = np.full(len(y), -np.inf)
        for corner in product((0, 1), repeat=len(self.lo)):
            idx = cell + np.asarray(corner)
            x = self.lo + idx * self.grid.spacing
            best = np.maximum(best, np.sum(x * y, 1) - self.values[tuple(idx.T)])
        return np.maximum(refined, best)


def _check_class(f: ScalarField, M: float, name: str) -> None:
    h = f.grid.spacing
    lo, hi = 1.0 / (2 * M), 2 * M
    for axis in range(f.grid.d):
        second = np.diff(f.values, n=2, axis=axis) / h[axis] ** 2
        if second.min() < lo - 1e-9 or second.max() > hi + 1e-9:
            raise ValueError(
                f"{name}: second differences along axis {axis} span "
                f"[{second.min():.4g}, {second.max():.4g}], outside [{lo:.4g}, {hi:.4g}] for M={M}"
            )


def stability_certificate(f: ScalarField, f0: ScalarField, density: ScalarField, M: float, tol: float = 1e-4):
    """Evaluate both sides of the semi-dual stability sandwich.

    ``f`` and ``f0`` live on a common grid whose box contains ``[0,1]^d``;
    ``density`` is the source density on a Simpson grid of ``[0,1]^d``.  The
    target measure is the pushforward of the source by the finite-difference
    gradient of ``f0``.  Conjugates are evaluated at those target points by a
    Newton refinement of the discrete maximum, so the gap is not swamped by
    the ``O(h^2)`` error of a pure grid maximum.
    """
    if f.grid != f0.grid:
        raise ValueError("f and f0 must share a grid")
    if M <= 0:
        raise ValueError("M must be positive")
    d = f.grid.d
    qgrid = density.grid
    if qgrid.box != unit_box(d):
        raise ValueError("the density must live on a grid of the unit cube")
    if not np.all(f.grid.box.contains(np.vstack([np.zeros(d), np.ones(d)]))):
        raise ValueError("the potential grid must contain the unit cube")
    _check_class(f, M, "f")
    _check_class(f0, M, "f0")

    nodes = qgrid.nodes()
    w = simpson_weights(qgrid.n, qgrid.spacing[0])
    weights = w
    for _ in range(d - 1):
        weights = np.multiply.outer(weights, w)
    weights = weights.ravel() * density.values.ravel()

    model, model0 = _LocalQuadratic(f), _LocalQuadratic(f0)
    targets = model0.grad(nodes)

    def semidual(m: _LocalQuadratic) -> float:
        return float(weights @ (m.value(nodes) + m.conjugate(targets, nodes)))

    gap = semidual(model) - semidual(model0)
    dist = float(weights @ np.sum((model.grad(nodes) - targets) ** 2, axis=1))
    return StabilityReport(
        gap, dist, M, gap >= dist / (8 * M) - tol, gap <= 2 * M * dist + tol, tol
    )

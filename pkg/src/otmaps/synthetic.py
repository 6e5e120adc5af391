"""Ground-truth transport problems, samplers and the smooth bump family.

Three problems share the source ``P = Unif([0,1]^d)``:

* ``id``   potential ``|x|^2 / 2``, map the identity;
* ``exp``  potential ``sum_i exp(x_i)``, map ``x -> exp(x)`` coordinatewise;
* ``bump`` potential ``|x|^2 / 2 + sum_j tau_j g_j(x)`` where ``g_j`` is a
  rescaled smooth bump supported in the ``j``-th cell of an ``m^d`` partition
  of the unit cube.  Because every bump and its derivatives vanish on the
  cell faces, the map fixes the faces and sends each cell onto itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import optimize

from .grid import Box, Grid, ScalarField, simpson_integrate, unit_box

__all__ = [
    "TestProblem",
    "BumpSpec",
    "identity_problem",
    "exponential_problem",
    "make_problem",
    "make_bump_problem",
    "bump_profile",
    "monge_ampere_density",
    "sample_source",
    "pushforward_sample",
    "draw_pair",
    "derive_seed",
    "samples_to_dict",
    "samples_from_dict",
]

# nodes of the reference-cell probe behind the bump Hessian check, and the
# number of best probe points refined by local optimisation
REFERENCE_PROBE_BUDGET = 2 * 10**5
REFINE_STARTS = 5


@dataclass(frozen=True, eq=False)
class BumpSpec:
    m: int
    kappa: float
    tau: np.ndarray  # 0/1 per cell, row-major over the m**d cells

    def to_dict(self) -> dict:
        return {"m": self.m, "kappa": self.kappa, "tau": self.tau.astype(int).tolist()}


@dataclass(frozen=True, eq=False)
class TestProblem:
    __test__ = False  # not a pytest collection target

    name: str
    d: int
    source_box: Box
    target_box: Box
    eval_T0: Callable[[np.ndarray], np.ndarray]
    eval_f0: Callable[[np.ndarray], np.ndarray]
    params: BumpSpec | None = None
    hessian: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"name": self.name, "d": self.d}
        if self.params is not None:
            out.update(self.params.to_dict())
        return out


def identity_problem(d: int) -> TestProblem:
    box = Box.cube(-0.5, 1.5, d)
    return TestProblem(
        "id",
        d,
        box,
        box,
        lambda x: np.array(np.atleast_2d(x), dtype=float),
        lambda x: 0.5 * np.sum(np.atleast_2d(x) ** 2, axis=1),
        hessian=lambda x: np.broadcast_to(np.eye(d), (len(np.atleast_2d(x)), d, d)).copy(),
    )


def exponential_problem(d: int) -> TestProblem:
    def hess(x):
        x = np.atleast_2d(x)
        out = np.zeros((len(x), d, d))
        out[:, np.arange(d), np.arange(d)] = np.exp(x)
        return out

    return TestProblem(
        "exp",
        d,
        Box.cube(-0.5, 1.5, d),
        Box.cube(0.0, 4.0, d),
        lambda x: np.exp(np.atleast_2d(x)),
        lambda x: np.sum(np.exp(np.atleast_2d(x)), axis=1),
        hessian=hess,
    )


def make_problem(name: str, d: int, **params) -> TestProblem:
    """Problem by name; ``bump`` forwards ``m``, ``kappa``, ``tau`` and ``seed``."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if name == "id":
        return identity_problem(d)
    if name == "exp":
        return exponential_problem(d)
    if name == "bump":
        return make_bump_problem(d, **params)
    raise ValueError(f"unknown problem {name!r} (expected id, exp or bump)")


def bump_profile(t, deriv: int = 0) -> np.ndarray:
    """``xi(t) = e * exp(-1 / (1 - (2t-1)^2))`` on (0, 1), zero elsewhere, and its derivatives.

    ``sup xi = xi(1/2) = 1``.  ``deriv`` selects the 0th, 1st or 2nd derivative.
    """
    t = np.asarray(t, dtype=float)
    s = 2.0 * t - 1.0
    u = 1.0 - s * s
    # exp(-1/u) underflows long before u reaches this threshold
    inside = u > 1e-3
    u = np.where(inside, u, 1.0)
    xi = np.where(inside, np.exp(1.0 - 1.0 / u), 0.0)
    if deriv == 0:
        return xi
    if deriv == 1:
        return -4.0 * s * xi / u**2
    if deriv == 2:
        return 4.0 * xi * (4.0 * s**2 / u**4 - 2.0 / u**2 - 8.0 * s**2 / u**3)
    raise ValueError("deriv must be 0, 1 or 2")


def _cell_local(x: np.ndarray, m: int, d: int):
    """Row-major cell index and local coordinates in ``[0, 1]^d`` for points of the cube."""
    scaled = np.clip(x, 0.0, 1.0) * m
    cell = np.minimum(np.floor(scaled).astype(np.int64), m - 1)
    local = scaled - cell
    flat = np.ravel_multi_index(tuple(cell.T), (m,) * d) if d > 0 else np.zeros(len(x), int)
    return flat, local


def _bump_parts(local: np.ndarray):
    p0 = bump_profile(local, 0)
    p1 = bump_profile(local, 1)
    p2 = bump_profile(local, 2)
    return p0, p1, p2


def _product_except(p0: np.ndarray, skip: tuple) -> np.ndarray:
    keep = [k for k in range(p0.shape[1]) if k not in skip]
    return np.prod(p0[:, keep], axis=1) if keep else np.ones(len(p0))


def _reference_hessian(local: np.ndarray) -> np.ndarray:
    """Hessian of the unscaled product bump at local cell coordinates."""
    n, d = local.shape
    p0, p1, p2 = _bump_parts(local)
    H = np.empty((n, d, d))
    for i in range(d):
        H[:, i, i] = p2[:, i] * _product_except(p0, (i,))
        for j in range(i + 1, d):
            H[:, i, j] = H[:, j, i] = p1[:, i] * p1[:, j] * _product_except(p0, (i, j))
    return H


def _outside_cube(x: np.ndarray) -> np.ndarray:
    return np.any((x < 0.0) | (x > 1.0), axis=1)


def make_bump_problem(d: int, m: int = 2, kappa: float = 0.01, tau=None, seed: int | None = None) -> TestProblem:
    """Potential ``|x|^2/2 + sum_j tau_j (kappa / m^2) g(m (x - x_j))`` on ``[0,1]^d``.

    ``g`` is the product of ``bump_profile`` over coordinates and ``x_j`` the
    lower corner of cell ``j``.  The ``kappa / m^2`` amplitude keeps the
    Hessian perturbation ``kappa * D^2 g`` independent of ``m``.  ``tau``
    defaults to independent fair bits drawn from ``seed``.  The Hessian
    eigenvalues must lie in ``[1/2, 2]``, which holds for ``kappa`` up to
    about 0.0119 in every dimension; larger values raise ``ValueError``
    stating the admissible ``kappa``.
    Outside the unit cube the potential is the plain quadratic.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    n_cells = m**d
    if tau is None:
        tau = np.random.default_rng(seed).integers(0, 2, size=n_cells)
    tau = np.asarray(tau, dtype=float).ravel()
    if tau.size != n_cells or np.any((tau != 0) & (tau != 1)):
        raise ValueError(f"tau must be a 0/1 vector of length m**d = {n_cells}")
    kappa = float(kappa)

    def f0(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cell, local = _cell_local(x, m, d)
        bump = np.prod(bump_profile(local), axis=1) * tau[cell] * np.where(_outside_cube(x), 0.0, 1.0)
        return 0.5 * np.sum(x**2, axis=1) + kappa / m**2 * bump

    def T0(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cell, local = _cell_local(x, m, d)
        p0, p1, _ = _bump_parts(local)
        grad = np.stack([p1[:, i] * _product_except(p0, (i,)) for i in range(d)], axis=1)
        weight = tau[cell] * np.where(_outside_cube(x), 0.0, 1.0)
        return x + (kappa / m) * weight[:, None] * grad

    def hess(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cell, local = _cell_local(x, m, d)
        weight = tau[cell] * np.where(_outside_cube(x), 0.0, 1.0)
        return np.eye(d) + kappa * weight[:, None, None] * _reference_hessian(local)

    _check_hessian(d, kappa, tau)
    box = Box.cube(-0.5, 1.5, d)
    return TestProblem("bump", d, box, box, T0, f0, BumpSpec(m, kappa, tau.astype(int)), hess)


@lru_cache(maxsize=None)
def _reference_search(d: int):
    """Extreme eigenvalues of the reference bump Hessian over ``[0,1]^d`` and where they occur.

    The bump Hessian of every cell is ``kappa`` times this reference Hessian
    at the local coordinates, whatever ``m``, so one search bounds the whole
    family.  A probe grid of the cell, plus the lower-dimensional extremisers
    padded with the cell centre, seeds a bounded local refinement.
    """
    per_axis = 3
    while (per_axis + 2) ** d <= REFERENCE_PROBE_BUDGET:
        per_axis += 2
    probe = Grid(unit_box(d), per_axis).nodes()
    seeds = []
    if d > 1:
        lower = _reference_search(d - 1)
        seeds = [np.append(lower[2], 0.5), np.append(lower[3], 0.5)]
    found = []
    for sign, column in ((1.0, 0), (-1.0, -1)):

        def objective(z):
            return sign * np.linalg.eigvalsh(_reference_hessian(z[None]))[0, column]

        values = sign * np.linalg.eigvalsh(_reference_hessian(probe))[:, column]
        starts = list(probe[np.argsort(values)[:REFINE_STARTS]]) + seeds
        best_value, best_point = np.inf, None
        for z in starts:
            res = optimize.minimize(objective, z, method="L-BFGS-B", bounds=[(0.0, 1.0)] * d)
            for value, point in ((objective(z), z), (float(res.fun), res.x)):
                if value < best_value:
                    best_value, best_point = value, np.asarray(point, dtype=float)
        found.append((sign * best_value, best_point))
    (lo, z_lo), (hi, z_hi) = found
    return lo, hi, z_lo, z_hi


def _check_hessian(d: int, kappa: float, tau: np.ndarray) -> None:
    if kappa == 0 or not np.any(tau):
        return
    ref_lo, ref_hi = _reference_search(d)[:2]
    lo, hi = 1.0 + kappa * ref_lo, 1.0 + kappa * ref_hi
    if lo >= 0.5 and hi <= 2.0:
        return
    limit = min(0.5 / -ref_lo, 1.0 / ref_hi)
    raise ValueError(
        f"bump Hessian eigenvalues span [{lo:.4g}, {hi:.4g}], outside [1/2, 2]; "
        f"need kappa <= {limit:.6g} (got {kappa})"
    )


def monge_ampere_density(problem: TestProblem, y, max_iter: int = 100, tol: float = 1e-12) -> np.ndarray:
    """Density of ``T0 # Unif([0,1]^d)`` at points ``y`` of the unit cube.

    The preimage is found by damped Newton on ``T0(x) = y`` started at ``x = y``;
    the density is ``1 / det D^2 f0`` there.
    """
    if problem.hessian is None:
        raise ValueError(f"problem {problem.name!r} has no Hessian")
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = y.copy()
    resid = problem.eval_T0(x) - y
    norm = np.linalg.norm(resid, axis=1)
    for _ in range(max_iter):
        active = norm > tol
        if not active.any():
            break
        H = problem.hessian(x[active])
        step = np.linalg.solve(H, resid[active][..., None])[..., 0]
        t = np.ones(active.sum())
        base = x[active]
        for _ in range(30):
            trial = np.clip(base - t[:, None] * step, 0.0, 1.0)
            new_resid = problem.eval_T0(trial) - y[active]
            new_norm = np.linalg.norm(new_resid, axis=1)
            worse = new_norm > (1 - 1e-4 * t) * norm[active]
            if not worse.any():
                break
            t = np.where(worse, 0.5 * t, t)
        x[active] = trial
        resid[active] = new_resid
        norm[active] = new_norm
    else:
        if np.any(norm > tol):
            raise RuntimeError(f"Newton inversion did not converge in {max_iter} iterations")
    return 1.0 / np.linalg.det(problem.hessian(x))


def derive_seed(base_seed: int, *keys: int) -> int:
    """Stable 63-bit seed for a stream identified by integer ``keys``."""
    state = np.random.SeedSequence([int(base_seed), *(int(k) for k in keys)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def sample_source(problem: TestProblem, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. uniform points of ``[0,1]^d``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return np.random.default_rng(seed).random((n, problem.d))


def pushforward_sample(problem: TestProblem, X) -> np.ndarray:
    """``T0`` applied to source points (pass an independent draw for a target sample)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != problem.d:
        raise ValueError(f"points have dimension {X.shape[1]}, problem has {problem.d}")
    if _outside_cube(X).any():
        raise ValueError("source points must lie in the unit cube")
    return problem.eval_T0(X)


def draw_pair(problem: TestProblem, n: int, seed: int):
    """Independent source sample ``X`` and target sample ``Y = T0(X')``."""
    sx, sy = np.random.SeedSequence(seed).spawn(2)
    X = sample_source(problem, n, np.random.default_rng(sx))
    Y = pushforward_sample(problem, sample_source(problem, n, np.random.default_rng(sy)))
    return X, Y


def samples_to_dict(points) -> dict:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return {"d": points.shape[1], "n": points.shape[0], "points": points.tolist()}


def samples_from_dict(data: dict) -> np.ndarray:
    points = np.asarray(data["points"], dtype=float).reshape(int(data["n"]), int(data["d"]))
    return points


def density_integral(problem: TestProblem, n: int | None = None) -> float:
    """Simpson integral of the pushforward density over the unit cube.

    The bump density has steep layers near the cell faces, so the default
    resolution is 64 intervals per cell (``64 m + 1`` nodes per axis); other
    problems default to 33 nodes.
    """
    if n is None:
        n = 64 * problem.params.m + 1 if problem.params is not None else 33
    grid = Grid(unit_box(problem.d), n)
    return simpson_integrate(ScalarField(grid, monge_ampere_density(problem, grid.nodes())))

"""Exact optimal matching between equal-size samples (squared Euclidean cost).

The assignment is solved by the shortest augmenting path method with dual
potentials (one Dijkstra-like sweep per row, ``O(n^3)`` worst case).  Among
several optimal permutations the lexicographically smallest one is returned:
after solving, alternating cycles in the equality subgraph of the reduced
costs are used to move every row, in order, to its smallest feasible column.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .models import TransportMap

__all__ = [
    "Assignment",
    "cost_matrix",
    "solve_assignment",
    "MatchingMap",
    "matching_map",
    "one_nn_extend",
]


@dataclass(frozen=True, eq=False)
class Assignment:
    n: int
    perm: np.ndarray
    cost: float

    def to_dict(self) -> dict:
        return {"n": self.n, "perm": self.perm.tolist(), "cost": self.cost}

    @classmethod
    def from_dict(cls, data: dict) -> "Assignment":
        return cls(int(data["n"]), np.asarray(data["perm"], dtype=np.int64), float(data["cost"]))


def cost_matrix(X, Y) -> np.ndarray:
    """``C[i, j] = ||X_i - Y_j||^2`` accumulated coordinate by coordinate."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    C = np.zeros((X.shape[0], Y.shape[0]))
    for k in range(X.shape[1]):
        C += (X[:, k, None] - Y[None, :, k]) ** 2
    return C


@njit(cache=True)
def _shortest_augmenting_path(C):
    n = C.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)  # owner[j]: row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.empty(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv[:] = inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = owner[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = C[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while True:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[owner[j] - 1] = j - 1
    return perm, u[1:], v[1:]


def _lexicographic_repair(C, perm, u, v):
    n = len(perm)
    scale = max(1.0, float(np.abs(C).max()))
    tight = (C - u[:, None] - v[None, :]) <= 1e-10 * scale
    if tight.sum() == n:
        return perm
    perm = perm.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[perm] = np.arange(n)
    for i in range(n):
        target = perm[i]
        for j in np.flatnonzero(tight[i, :target]):
            path = _alternating_path(tight, perm, owner, i, j, target)
            if path is None:
                continue
            # rows on the path shift one column along the cycle
            perm[i] = j
            for row, col in path:
                perm[row] = col
            owner[perm] = np.arange(n)
            break
    return perm


def _alternating_path(tight, perm, owner, i, start_col, free_col):
    """Rows after ``i`` re-matched so ``start_col``'s owner reaches ``free_col``."""
    first = owner[start_col]
    if first <= i:
        return None
    parent = {first: None}
    queue = deque([first])
    while queue:
        row = queue.popleft()
        for col in np.flatnonzero(tight[row]):
            if col == free_col:
                path = [(row, col)]
                while parent[row] is not None:
                    prev_row = parent[row]
                    path.append((prev_row, perm[row]))
                    row = prev_row
                return path
            nxt = owner[col]
            if nxt > i and nxt not in parent:
                parent[nxt] = row
                queue.append(nxt)
    return None


def solve_assignment(X, Y) -> Assignment:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape != Y.shape:
        raise ValueError(f"sample sets must have equal size and dimension, got {X.shape} and {Y.shape}")
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    C = cost_matrix(X, Y)
    perm, u, v = _shortest_augmenting_path(C)
    perm = _lexicographic_repair(C, perm, u, v)
    cost = float(C[np.arange(len(perm)), perm].mean())
    return Assignment(len(perm), perm, cost)


def _nearest(train: np.ndarray, queries: np.ndarray, chunk: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    idx = np.empty(len(queries), dtype=np.int64)
    dist = np.empty(len(queries))
    for s in range(0, len(queries), chunk):
        D = cost_matrix(queries[s : s + chunk], train)
        idx[s : s + chunk] = np.argmin(D, axis=1)
        dist[s : s + chunk] = D[np.arange(len(D)), idx[s : s + chunk]]
    return idx, dist


@dataclass(eq=False)
class MatchingMap(TransportMap):
    """``X_i -> Y_perm(i)``; off-sample queries need the 1-NN extension."""

    train_X: np.ndarray
    values: np.ndarray
    extended: bool = False
    meta: dict = field(default_factory=dict)
    kind = "matching"

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx, dist = _nearest(self.train_X, points)
        if not self.extended and np.any(dist > 0):
            bad = int(np.flatnonzero(dist > 0)[0])
            raise ValueError(
                f"query {bad} {points[bad].tolist()} is not a training point; "
                "install the 1-NN extension to evaluate off-sample"
            )
        return self.values[idx]

    def to_dict(self) -> dict:
        return {
            "kind": "matching",
            "X": self.train_X.tolist(),
            "Y": self.values.tolist(),
            "extended": self.extended,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MatchingMap":
        return cls(
            np.asarray(data["X"], float),
            np.asarray(data["Y"], float),
            bool(data.get("extended", False)),
            dict(data.get("meta", {})),
        )


def matching_map(assignment: Assignment, X, Y) -> MatchingMap:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return MatchingMap(X.copy(), Y[assignment.perm].copy(), meta={"cost": assignment.cost})


def one_nn_extend(model: MatchingMap) -> MatchingMap:
    return MatchingMap(model.train_X, model.values, True, dict(model.meta))

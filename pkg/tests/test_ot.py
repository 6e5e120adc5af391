import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otmaps.models import model_from_dict
from otmaps.ot import Assignment, MatchingMap, cost_matrix, matching_map, one_nn_extend, solve_assignment


def exhaustive(X, Y):
    """Lexicographically first permutation of minimal cost."""
    C = cost_matrix(X, Y)
    n = len(X)
    best, best_perm = np.inf, None
    for p in itertools.permutations(range(n)):
        c = C[np.arange(n), p].sum()
        if c < best:
            best, best_perm = c, p
    return np.array(best_perm), best / n


def test_examples():
    a = solve_assignment([[0.0], [1.0]], [[0.1], [0.9]])
    np.testing.assert_array_equal(a.perm, [0, 1])
    assert a.cost == pytest.approx(0.01)
    X = np.random.default_rng(0).random((6, 2))
    a = solve_assignment(X, X)
    np.testing.assert_array_equal(a.perm, np.arange(6))
    assert a.cost == 0.0


def test_size_mismatch():
    with pytest.raises(ValueError, match="equal size"):
        solve_assignment(np.zeros((3, 2)), np.zeros((4, 2)))


def test_matches_exhaustive_search():
    rng = np.random.default_rng(1)
    for trial in range(100):
        n = 1 + trial % 7
        X, Y = rng.random((n, 3)), rng.random((n, 3))
        perm, cost = exhaustive(X, Y)
        a = solve_assignment(X, Y)
        np.testing.assert_array_equal(a.perm, perm)
        assert a.cost == pytest.approx(cost, rel=1e-12)


def test_ties_give_lexicographically_smallest():
    # all four pairings of two points on a square cost the same
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    Y = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(solve_assignment(X, Y).perm, [0, 1])
    # integer grid with many optimal plans
    pts = np.array([[i, j] for i in range(3) for j in range(2)], dtype=float)
    Y = pts[::-1] + 0.5
    perm, _ = exhaustive(pts, Y)
    np.testing.assert_array_equal(solve_assignment(pts, Y).perm, perm)


def test_assignment_json():
    a = solve_assignment(np.eye(3), np.eye(3)[::-1])
    back = Assignment.from_dict(a.to_dict())
    assert back.n == 3 and np.array_equal(back.perm, a.perm) and back.cost == a.cost


def test_matching_map_values_and_errors():
    rng = np.random.default_rng(2)
    X, Y = rng.random((3, 2)), rng.random((3, 2))
    perm, _ = exhaustive(X, Y)
    model = matching_map(solve_assignment(X, Y), X, Y)
    np.testing.assert_array_equal(model(X), Y[perm])
    with pytest.raises(ValueError, match="not a training point"):
        model([[0.5, 0.5]])
    same = matching_map(solve_assignment(X, X), X, X)
    assert np.mean(np.sum((same(X) - X) ** 2, 1)) == 0.0


def test_one_nn_extension():
    X = np.array([[0.0], [1.0], [3.0]])
    model = one_nn_extend(MatchingMap(X, np.array([[10.0], [20.0], [30.0]])))
    np.testing.assert_array_equal(model(X), [[10.0], [20.0], [30.0]])
    # 0.5 is equidistant from 0 and 1: smallest index wins
    np.testing.assert_array_equal(model([[0.5], [2.1], [-5.0]]), [[10.0], [30.0], [10.0]])
    single = one_nn_extend(MatchingMap(np.array([[0.3, 0.3]]), np.array([[1.0, 2.0]])))
    np.testing.assert_array_equal(single(np.random.default_rng(0).random((4, 2))), np.tile([1.0, 2.0], (4, 1)))


def test_one_nn_matches_linear_scan():
    rng = np.random.default_rng(3)
    X, V = rng.random((50, 3)), rng.random((50, 3))
    Q = rng.random((200, 3))
    model = one_nn_extend(MatchingMap(X, V))
    scan = [V[min(range(50), key=lambda i: (np.sum((q - X[i]) ** 2), i))] for q in Q]
    np.testing.assert_array_equal(model(Q), np.array(scan))


def test_model_json_round_trip():
    rng = np.random.default_rng(4)
    X, Y = rng.random((5, 2)), rng.random((5, 2))
    model = one_nn_extend(matching_map(solve_assignment(X, Y), X, Y))
    back = model_from_dict(model.to_dict())
    Q = rng.random((10, 2))
    np.testing.assert_array_equal(back(Q), model(Q))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 40), d=st.integers(1, 4))
def test_bijective_and_beats_identity(seed, n, d):
    rng = np.random.default_rng(seed)
    X, Y = rng.random((n, d)), rng.random((n, d))
    a = solve_assignment(X, Y)
    assert sorted(a.perm.tolist()) == list(range(n))
    C = cost_matrix(X, Y)
    assert a.cost == pytest.approx(C[np.arange(n), a.perm].mean(), rel=1e-12)
    assert a.cost <= np.trace(C) / n + 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 60))
def test_one_d_equals_sorting(seed, n):
    rng = np.random.default_rng(seed)
    x, y = rng.random(n), rng.random(n)
    perm = np.empty(n, dtype=int)
    perm[np.argsort(x, kind="stable")] = np.argsort(y, kind="stable")
    np.testing.assert_array_equal(solve_assignment(x[:, None], y[:, None]).perm, perm)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 30))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    X, Y = rng.random((n, 2)), rng.random((n, 2))
    sigma = rng.permutation(n)
    a = solve_assignment(X, Y)
    # Y'[k] = Y[sigma[k]], so row i pairs with the k having sigma[k] = perm[i]
    b = solve_assignment(X, Y[sigma])
    np.testing.assert_array_equal(sigma[b.perm], a.perm)
    assert b.cost == pytest.approx(a.cost, rel=1e-12)

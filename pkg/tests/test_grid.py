import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otmaps.grid import (
    Box,
    Grid,
    ScalarField,
    VectorField,
    gradient,
    interpolate,
    interpolation_matrix,
    make_grid,
    simpson_integrate,
)


def test_make_grid_nodes():
    g = make_grid(Box((0.0,), (1.0,)), 3)
    np.testing.assert_array_equal(g.axes[0], [0.0, 0.5, 1.0])
    g3 = make_grid(Box.cube(-0.5, 1.5, 3), 65)
    assert g3.size == 65**3 and g3.nodes().shape == (65**3, 3)


@pytest.mark.parametrize("n", [2, 4, 1, 64])
def test_make_grid_rejects_even_or_small(n):
    with pytest.raises(ValueError):
        make_grid(Box((0.0,), (1.0,)), n)


def test_box_rejects_inverted():
    with pytest.raises(ValueError):
        Box((1.0,), (0.0,))
    with pytest.raises(ValueError):
        Box((0.0, 0.0), (1.0,))


def test_nodes_row_major():
    g = Grid(Box((0.0, 0.0), (1.0, 2.0)), 3)
    nodes = g.nodes()
    np.testing.assert_array_equal(nodes[1], [0.0, 1.0])
    np.testing.assert_array_equal(nodes[3], [0.5, 0.0])


def test_interpolate_examples():
    g = Grid(Box((0.0,), (1.0,)), 3)
    lin = ScalarField.from_function(g, lambda x: x[:, 0])
    assert interpolate(lin, [[0.25]])[0] == pytest.approx(0.25)
    sq = ScalarField.from_function(g, lambda x: x[:, 0] ** 2)
    # chord between (0, 0) and (0.5, 0.25)
    assert interpolate(sq, [[0.25]])[0] == pytest.approx(0.125)
    assert interpolate(sq, [[0.5]])[0] == 0.25


def test_interpolate_affine_exact_and_vector():
    g = Grid(Box.cube(-1.0, 2.0, 3), 7)
    a, c = np.array([0.3, -1.2, 2.0]), 0.7
    f = ScalarField.from_function(g, lambda x: x @ a + c)
    pts = np.random.default_rng(0).uniform(-1, 2, (50, 3))
    np.testing.assert_allclose(interpolate(f, pts), pts @ a + c, atol=1e-12)
    v = VectorField(g, np.stack([f.values, 2 * f.values, -f.values], axis=-1))
    np.testing.assert_allclose(interpolate(v, pts)[:, 1], 2 * (pts @ a + c), atol=1e-12)


def test_interpolate_outside_names_point_and_axis():
    g = Grid(Box.cube(0.0, 1.0, 2), 5)
    f = ScalarField(g, np.zeros(g.size))
    with pytest.raises(ValueError, match="point 1.*axis 1"):
        interpolate(f, [[0.5, 0.5], [0.5, 1.1]])
    # boundary slack
    interpolate(f, [[1.0 + 1e-13, 0.0]])


def test_interpolation_matrix_matches_interpolate():
    g = Grid(Box.cube(0.0, 1.0, 2), 9)
    rng = np.random.default_rng(1)
    f = ScalarField(g, rng.standard_normal(g.size))
    pts = rng.random((40, 2))
    np.testing.assert_allclose(interpolation_matrix(g, pts) @ f.values.ravel(), interpolate(f, pts), atol=1e-13)


def test_gradient_examples():
    g = Grid(Box.cube(0.0, 1.0, 2), 9)
    f = ScalarField.from_function(g, lambda x: 2 * x[:, 0])
    grad = gradient(f).values
    np.testing.assert_allclose(grad[..., 0], 2.0, atol=1e-12)
    np.testing.assert_allclose(grad[..., 1], 0.0, atol=1e-12)
    g1 = Grid(Box((0.0,), (1.0,)), 9)
    sq = gradient(ScalarField.from_function(g1, lambda x: x[:, 0] ** 2)).values[:, 0]
    np.testing.assert_allclose(sq, 2 * g1.axes[0], atol=1e-12)


def test_gradient_second_order_on_cubic():
    errs = []
    for n in (33, 65):
        g = Grid(Box((0.0,), (1.0,)), n)
        d = gradient(ScalarField.from_function(g, lambda x: x[:, 0] ** 3)).values[:, 0]
        errs.append(np.max(np.abs(d - 3 * g.axes[0] ** 2)))
    h = 1 / 64
    assert errs[1] <= 2.0 * h**2
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_simpson_examples():
    for d in (1, 2, 3):
        g = Grid(Box.cube(0.0, 1.0, d), 9)
        assert simpson_integrate(ScalarField(g, np.ones(g.size))) == pytest.approx(1.0, abs=1e-14)
    g = Grid(Box((0.0,), (1.0,)), 65)
    assert simpson_integrate(ScalarField.from_function(g, lambda x: x[:, 0] ** 2)) == pytest.approx(1 / 3, abs=1e-15)
    assert simpson_integrate(ScalarField.from_function(g, lambda x: np.exp(x[:, 0]))) == pytest.approx(np.e - 1, abs=1e-9)


def test_simpson_weighted():
    g = Grid(Box.cube(0.0, 2.0, 2), 5)
    f = ScalarField.from_function(g, lambda x: x[:, 0])
    w = ScalarField.from_function(g, lambda x: x[:, 1])
    # int_0^2 int_0^2 x y = 4
    assert simpson_integrate(f, w) == pytest.approx(4.0, abs=1e-12)


def test_field_json_round_trip():
    g = Grid(Box((0.0, -1.0), (1.0, 1.0)), 5)
    f = ScalarField(g, np.arange(g.size, dtype=float))
    back = ScalarField.from_dict(f.to_dict())
    assert back.grid == g and np.array_equal(back.values, f.values)
    v = VectorField(g, np.arange(2 * g.size, dtype=float))
    assert np.array_equal(VectorField.from_dict(v.to_dict()).values, v.values)


def test_field_rejects_nonfinite():
    g = Grid(Box((0.0,), (1.0,)), 3)
    with pytest.raises(ValueError):
        ScalarField(g, [0.0, np.nan, 1.0])
    with pytest.raises(ValueError):
        ScalarField(g, [0.0, 1.0])


coef = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(a=coef, b=coef, seed=st.integers(0, 2**31 - 1))
def test_interpolate_linear_in_field(a, b, seed):
    rng = np.random.default_rng(seed)
    g = Grid(Box.cube(0.0, 1.0, 2), 5)
    f, h = (ScalarField(g, rng.standard_normal(g.size)) for _ in range(2))
    pts = rng.random((20, 2))
    lhs = interpolate(f * a + h * b, pts)
    np.testing.assert_allclose(lhs, a * interpolate(f, pts) + b * interpolate(h, pts), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(a=coef, b=coef, seed=st.integers(0, 2**31 - 1))
def test_gradient_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    g = Grid(Box.cube(0.0, 1.0, 2), 7)
    f, h = (ScalarField(g, rng.standard_normal(g.size)) for _ in range(2))
    lhs = gradient(f * a + h * b).values
    np.testing.assert_allclose(lhs, a * gradient(f).values + b * gradient(h).values, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(1, 3))
def test_interpolate_within_range(seed, d):
    rng = np.random.default_rng(seed)
    g = Grid(Box.cube(-1.0, 1.0, d), 5)
    f = ScalarField(g, rng.standard_normal(g.size))
    vals = interpolate(f, rng.uniform(-1, 1, (30, d)))
    assert vals.min() >= f.values.min() - 1e-12 and vals.max() <= f.values.max() + 1e-12


@settings(max_examples=40, deadline=None)
@given(c=st.lists(st.integers(-3, 3), min_size=4, max_size=4), p=st.integers(0, 3), q=st.integers(0, 3))
def test_simpson_exact_on_cubics(c, p, q):
    g = Grid(Box((0.0, -1.0), (2.0, 1.0)), 7)
    f = ScalarField.from_function(g, lambda x: c[0] * x[:, 0] ** p * x[:, 1] ** q + c[1] * x[:, 0] + c[2])

    def mono(k, lo, hi):
        return (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)

    exact = c[0] * mono(p, 0, 2) * mono(q, -1, 1) + c[1] * mono(1, 0, 2) * 2 + c[2] * 4
    assert simpson_integrate(f) == pytest.approx(exact, abs=1e-10)

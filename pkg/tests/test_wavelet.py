import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otmaps.grid import Box, Grid, ScalarField
from otmaps.wavelet import (
    TruncatedSynthesis,
    WaveletCoeffs,
    analyze,
    coeff_count,
    level_lengths,
    max_levels,
    synthesize,
    truncate,
    truncation_error_curve,
)


def unit_grid(n, d):
    return Grid(Box.cube(0.0, 1.0, d), n)


def test_level_bookkeeping():
    assert max_levels(65) == 3 and max_levels(33) == 2 and max_levels(15) == 1 and max_levels(13) == 0
    assert level_lengths(65, 3) == [65, 33, 17, 9]
    assert [coeff_count(65, 1, J) for J in range(4)] == [9, 17, 33, 65]
    assert coeff_count(33, 3, 0) == 9**3


def test_zero_coefficients_give_zero_field():
    f = synthesize(WaveletCoeffs(33, 2, 2, np.zeros(33**2)))
    assert np.all(f.values == 0)


@pytest.mark.parametrize("n,d", [(65, 1), (33, 2), (21, 2), (33, 3), (129, 1), (17, 1)])
def test_perfect_reconstruction(n, d):
    rng = np.random.default_rng(n + d)
    f = ScalarField(unit_grid(n, d), rng.standard_normal(n**d))
    for levels in range(max_levels(n) + 1):
        back = synthesize(analyze(f, levels), f.grid)
        assert np.max(np.abs(back.values - f.values)) <= 1e-10


def test_analyze_inverts_synthesize():
    rng = np.random.default_rng(3)
    c = WaveletCoeffs(33, 2, 2, rng.standard_normal(33**2))
    again = analyze(synthesize(c), 2)
    assert np.max(np.abs(again.data - c.data)) <= 1e-10


def test_unit_coarse_coefficient_round_trip():
    vec = np.zeros(65)
    vec[4] = 1.0
    c = WaveletCoeffs.from_flat(vec, 65, 1, 3)
    profile = synthesize(c)
    # a localised bump, recovered exactly by analysis
    assert np.argmax(np.abs(profile.values)) in range(24, 42)
    np.testing.assert_allclose(analyze(profile, 3).flat(), vec, atol=1e-10)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_constant_field_has_no_details(d):
    n = 33 if d < 3 else 17
    c = analyze(ScalarField(unit_grid(n, d), np.full(n**d, 2.5)))
    for level, band, arr in c.subbands:
        if level > 0:
            assert np.max(np.abs(arr)) <= 1e-12


def test_sine_detail_energy_decays_with_level():
    f = ScalarField.from_function(unit_grid(65, 1), lambda x: np.sin(2 * np.pi * x[:, 0]))
    energy = {}
    for level, _, arr in analyze(f).subbands:
        if level > 0:
            energy[level] = energy.get(level, 0.0) + float(np.sum(arr**2))
    for level in range(2, 4):
        assert energy[level] / energy[level - 1] < 1


def test_coeff_count_matches_probe():
    # number of flat slots a truncated synthesis actually reaches
    for J in range(4):
        vec = np.random.default_rng(J).uniform(1, 2, coeff_count(65, 1, J))
        c = WaveletCoeffs.from_flat(vec, 65, 1, 3)
        assert np.count_nonzero(np.abs(analyze(synthesize(c), 3).flat()) > 1e-12) == vec.size
    assert coeff_count(65, 1, 1) == 9 + 8


def test_coeff_count_monotone_and_errors():
    for n, d in [(65, 1), (33, 3), (65, 2)]:
        counts = [coeff_count(n, d, J) for J in range(max_levels(n) + 1)]
        assert counts == sorted(counts) and counts[-1] == n**d
    with pytest.raises(ValueError):
        coeff_count(65, 1, 4)


def test_analyze_rejects_too_many_levels():
    with pytest.raises(ValueError, match="at most 3"):
        analyze(ScalarField(unit_grid(65, 1), np.zeros(65)), 4)


def test_flat_order_and_json_round_trip():
    rng = np.random.default_rng(5)
    c = analyze(ScalarField(unit_grid(33, 2), rng.standard_normal(33**2)))
    flat = c.flat()
    assert flat.size == c.flat_length == sum(a.size for _, _, a in c.subbands)
    # approximation band first, then the coarsest details
    np.testing.assert_array_equal(flat[:81], c.subbands[0][2].ravel())
    back = WaveletCoeffs.from_dict(c.to_dict())
    assert np.array_equal(back.data, c.data)
    assert np.array_equal(WaveletCoeffs.from_flat(flat, 33, 2, 2).data, c.data)
    bands = [(b["level"], b["band_index"]) for b in c.to_dict()["bands"]]
    assert bands[:4] == [(0, 0), (1, 1), (1, 2), (1, 3)]


def test_truncation_fixpoint():
    rng = np.random.default_rng(6)
    for J in range(3):
        vec = rng.standard_normal(coeff_count(33, 2, J))
        f = synthesize(WaveletCoeffs.from_flat(vec, 33, 2, 2))
        curve = dict(truncation_error_curve(f, 2))
        assert curve[J] <= 1e-12
        if J > 0:
            assert curve[J - 1] > 1e-3


def test_truncation_error_decreases_2d():
    f = ScalarField.from_function(unit_grid(65, 2), lambda x: np.prod(np.sin(2 * np.pi * x), axis=1))
    errors = [e for _, e in truncation_error_curve(f, 3)]
    assert all(b < a for a, b in zip(errors, errors[1:]))


def test_truncation_slope_smooth_field():
    f = ScalarField.from_function(unit_grid(257, 1), lambda x: np.sin(2 * np.pi * x[:, 0]))
    curve = truncation_error_curve(f, 4)
    J = np.array([j for j, _ in curve])
    logs = np.log2([e for _, e in curve])
    assert np.all(np.diff(logs) < 0)
    assert np.polyfit(J, logs, 1)[0] <= -1


def test_truncate_keeps_corner():
    rng = np.random.default_rng(7)
    c = analyze(ScalarField(unit_grid(65, 1), rng.standard_normal(65)))
    t = truncate(c, 1)
    assert np.count_nonzero(t.flat()) == 17
    np.testing.assert_array_equal(t.flat()[:17], c.flat()[:17])


@pytest.mark.parametrize("n,d,J", [(33, 1, 0), (65, 1, 2), (33, 2, 1), (33, 3, 2), (65, 2, 3)])
def test_truncated_synthesis_matches_full_and_adjoint(n, d, J):
    grid = unit_grid(n, d)
    op = TruncatedSynthesis(grid, J)
    rng = np.random.default_rng(n * d + J)
    gamma = rng.standard_normal(op.size)
    full = synthesize(WaveletCoeffs.from_flat(gamma, n, d, max_levels(n)), grid).values
    np.testing.assert_allclose(op.apply(gamma), full, atol=1e-12)
    v = rng.standard_normal(grid.size)
    assert np.dot(op.apply(gamma).ravel(), v) == pytest.approx(np.dot(gamma, op.adjoint(v)), rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    g = unit_grid(33, 2)
    f, h = (ScalarField(g, rng.standard_normal(g.size)) for _ in range(2))
    lhs = analyze(f * a + h * b).data
    np.testing.assert_allclose(lhs, a * analyze(f).data + b * analyze(h).data, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)
    c1, c2 = analyze(f), analyze(h)
    mix = WaveletCoeffs(33, 2, 2, a * c1.data + b * c2.data)
    np.testing.assert_allclose(synthesize(mix, g).values, (f * a + h * b).values, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), J=st.integers(0, 2), K=st.integers(0, 2))
def test_nesting(seed, J, K):
    lo, hi = min(J, K), max(J, K)
    rng = np.random.default_rng(seed)
    f = synthesize(WaveletCoeffs.from_flat(rng.standard_normal(coeff_count(33, 2, lo)), 33, 2, 2))
    # a scale-lo field is reproduced exactly by the scale-hi truncation
    assert dict(truncation_error_curve(f, 2))[hi] <= 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.sampled_from([17, 19, 33, 41, 65]))
def test_round_trip_property(seed, n):
    rng = np.random.default_rng(seed)
    f = ScalarField(unit_grid(n, 1), rng.standard_normal(n) * 10)
    assert np.max(np.abs(synthesize(analyze(f), f.grid).values - f.values)) <= 1e-10

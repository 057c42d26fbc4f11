import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rieszwave.kernels import ConstantMode, qv_limit_constant
from rieszwave.noise import DiamondLatticeSpec, RngStream, sample_diamonds
from rieszwave.qvar import (DegenerateDiffusion, estimate_theta, lp_norm_mc, original_diff_1,
                            original_diff_2, qvar, qvar_report, rate_fit, remainder, riemann_F2,
                            rotated_diff, second_diff, second_diffs)
from rieszwave.wave_sim import LINEAR, DiffusionSpec, LatticeField, march, simulate_pair


def _grid(N, fn):
    t = np.arange(N + 1) / N
    return fn(t[:, None], t[None, :]) * np.ones((N + 1, N + 1))


def _lattice_field(size, fn):
    lat = DiamondLatticeSpec(size)
    idx = np.arange(-size, size + 1) * lat.h
    return LatticeField(lat, fn(idx[:, None], idx[None, :]) * np.ones((2 * size + 1,) * 2))


def test_second_diff_examples():
    N = 10
    assert second_diff(np.full((4, 4), 2.0), 1, 1) == 0.0
    assert second_diff(_grid(N, lambda a, b: a * b), 2, 3) == pytest.approx(1 / N ** 2)
    assert second_diff(_grid(N, lambda a, b: a ** 2 + 0 * b), 1, 2, 3) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(IndexError):
        second_diff(np.zeros((3, 3)), 2, 0)
    with pytest.raises(ValueError):
        second_diff(np.zeros((3, 3)), 0, 0, 0)


def test_second_diffs_matches_scalar():
    f = np.random.default_rng(0).standard_normal((7, 7))
    d = second_diffs(f, 2)
    assert d[1, 3] == pytest.approx(second_diff(f, 1, 3, 2))


def test_original_diffs_examples():
    size = 12
    h = 1 / size
    const = _lattice_field(size, lambda a, b: 0 * a + 0 * b + 5.0)
    assert original_diff_1(const, 2, 2, 1) == 0.0
    prod = _lattice_field(size, lambda a, b: a * b)
    for m in (1, 2, 3):
        eps = m * h / math.sqrt(2)
        assert original_diff_1(prod, 4, 2, m) == pytest.approx(-2 * eps ** 2, rel=1e-12)
        assert original_diff_2(prod, 4, 2, m) == pytest.approx(2 * eps ** 2, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 3), st.integers(-3, 5), st.integers(0, 5))
def test_original_stencils_match_rotated_diffs(seed, m, i, j):
    # original-coordinate stencils equal rotated second differences at the image node
    v = march(sample_diamonds(DiamondLatticeSpec(12), 0.7, RngStream(seed)), DiffusionSpec.one_plus_sin())
    if i - m + j < 0 or i + m > 12 or j + m > 12 or i - m < -12:
        return
    assert original_diff_1(v, i, j, m) == rotated_diff(v, i, j, m, -1)
    assert original_diff_2(v, i, j, m) == rotated_diff(v, i, j, m, +1)


def test_original_diff_off_lattice():
    f = _lattice_field(4, lambda a, b: a + b)
    with pytest.raises(IndexError):
        original_diff_2(f, 3, 3, 2)


def test_rotated_diff_sign():
    f = _lattice_field(4, lambda a, b: a * b)
    with pytest.raises(ValueError):
        rotated_diff(f, 0, 0, 1, 0)
    vec = rotated_diff(f, np.array([1, 2]), np.array([0, 1]), 1, 1)
    assert vec == pytest.approx([1 / 16, 1 / 16])


def test_qvar_examples():
    assert qvar(np.ones((5, 5)), 0.7) == 0.0
    assert qvar(_grid(10, lambda a, b: a * b), 0.5) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        qvar(np.ones((3, 4)), 0.5)


@given(st.integers(1, 8), st.floats(0.5, 0.99), st.integers(0, 1000))
def test_qvar_nonneg_and_even(N, H, seed):
    f = np.random.default_rng(seed).standard_normal((N + 1, N + 1))
    q = qvar(f, H)
    assert q >= 0
    assert qvar(-f, H) == q


def test_riemann_F2_examples():
    f = np.random.default_rng(1).standard_normal((6, 6))
    assert riemann_F2(f, DiffusionSpec.constant(1.0)) == pytest.approx(1.0)
    assert riemann_F2(f, DiffusionSpec.constant(3.0, 7.0)) == pytest.approx(9.0)
    assert riemann_F2(np.zeros((6, 6)), DiffusionSpec.one_plus_sin()) == pytest.approx(1.0)


def test_estimate_theta_examples():
    N = 8
    # synthetic field whose unit second differences all equal 1/N: qvar = N^0 * N^2 / N^2 = 1
    f = _grid(N, lambda a, b: N * a * b)
    rep = qvar_report(f, DiffusionSpec.constant(1.0), 0.5)
    assert rep.q_value == pytest.approx(1.0)
    assert estimate_theta(f, DiffusionSpec.constant(1.0), 0.5).theta_hat == pytest.approx(2.0)
    assert estimate_theta(np.zeros((5, 5)), LINEAR, 0.5).theta_hat == 0.0
    with pytest.raises(DegenerateDiffusion):
        estimate_theta(f, DiffusionSpec.constant(0.0), 0.5)


@given(st.integers(0, 1000), st.floats(0.5, 0.95), st.floats(0.1, 10))
def test_estimator_consistency_and_equivariance(seed, H, c):
    f = np.random.default_rng(seed).standard_normal((9, 9))
    F = DiffusionSpec.one_plus_sin()
    est = estimate_theta(f, F, H)
    r = est.inputs
    assert est.theta_hat ** 2 * r.limit_constant * r.riemann_F2 == pytest.approx(r.q_value, rel=1e-12)
    # scaling the increments by c scales qvar by c^2; with F constant the Riemann sum is unchanged
    G = DiffusionSpec.constant(1.3)
    assert estimate_theta(c * f, G, H).theta_hat == pytest.approx(c * estimate_theta(f, G, H).theta_hat,
                                                                  rel=1e-12)


@pytest.mark.parametrize("H", [0.55, 0.75])
def test_constant_mode_ratio(H):
    f = np.random.default_rng(2).standard_normal((9, 9))
    F = DiffusionSpec.one_plus_sin()
    paper = estimate_theta(f, F, H, ConstantMode.PAPER_LEMMA).theta_hat
    derived = estimate_theta(f, F, H, ConstantMode.DERIVED_NORMALIZATION).theta_hat
    assert paper / derived == pytest.approx(math.sqrt(2 / (2 * H + 1)), rel=1e-12)


def test_theta_c_substitution_invariance():
    noise = sample_diamonds(DiamondLatticeSpec(16), 0.6, RngStream(5))
    c = 2.5
    a = march(noise, DiffusionSpec.constant(1.0, theta=2.0))
    b = march(noise, DiffusionSpec.constant(c, theta=2.0 / c))
    assert np.allclose(a.values, b.values, rtol=1e-14, atol=1e-16)


def test_remainder_vanishes_for_constant_F():
    noise = sample_diamonds(DiamondLatticeSpec(16), 0.75, RngStream(3))
    for F in (LINEAR, DiffusionSpec.constant(2.0)):
        v, V = simulate_pair(noise, F)
        i, j = np.meshgrid(np.arange(2, 10), np.arange(2, 10), indexing="ij")
        for sign in (1, -1):
            assert np.allclose(remainder(v, V, F, i, j, 2, sign), 0.0, atol=1e-15)


def test_remainder_nonzero_for_sin():
    noise = sample_diamonds(DiamondLatticeSpec(16), 0.75, RngStream(3))
    F = DiffusionSpec.one_plus_sin()
    v, V = simulate_pair(noise, F)
    r = remainder(v, V, F, 5, 5, 2, 1)
    assert isinstance(r, float) and r != 0.0


def test_lp_norm_mc():
    assert lp_norm_mc([3, 4], 2) == pytest.approx(3.535534, abs=1e-6)
    assert lp_norm_mc([3, 4], 1) == pytest.approx(3.5)
    assert lp_norm_mc([0, 0, 0], 3) == 0.0
    with pytest.raises(ValueError):
        lp_norm_mc([], 2)
    with pytest.raises(ValueError):
        lp_norm_mc([1.0], 0.5)


def test_rate_fit():
    s = np.array([0.1, 0.2, 0.4, 0.8])
    fit = rate_fit(list(zip(s, s ** 1.5)))
    assert fit.slope == pytest.approx(1.5)
    assert fit.r_squared == pytest.approx(1.0)
    assert rate_fit([(0.1, 0.03), (0.01, 0.003), (0.001, 0.0003)]).slope == pytest.approx(1.0)
    assert rate_fit([(1, 2.0), (2, 2.0), (4, 2.0)]).slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        rate_fit([(1, 1.0), (2, 0.0), (3, 1.0)])
    with pytest.raises(ValueError):
        rate_fit([(1, 1.0), (2, 1.0)])


@given(st.lists(st.tuples(st.floats(0.01, 100), st.floats(0.01, 100)), min_size=3, max_size=8,
                unique_by=lambda p: p[0]))
def test_rate_fit_r2_in_unit_interval(levels):
    fit = rate_fit(levels)
    assert 0.0 <= fit.r_squared <= 1.0


def test_qv_of_linear_field_near_constant():
    H = 0.5
    vals = [qvar(march(sample_diamonds(DiamondLatticeSpec(32), H, RngStream(21, r)), LINEAR).square(), H)
            for r in range(200)]
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - qv_limit_constant(H)) < 4 * se

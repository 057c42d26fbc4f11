import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from rieszwave.kernels import (ConstantMode, Diamond, HurstParam, diamond_constant,
                               diamond_covariance, diamond_variance, fgn_covariance,
                               interval_cross_covariance, qv_limit_constant, region_covariance,
                               riesz_split_integral, riesz_square_integral, slab_triangle_covariance,
                               spectral_constant, triangle_profile)

hursts = st.floats(min_value=0.5, max_value=0.99)
rough = st.floats(min_value=0.51, max_value=0.99)


def test_hurst_param_bounds():
    assert HurstParam(0.5).white_noise
    assert not HurstParam(0.75).white_noise
    for bad in (0.4, 1.0, float("nan"), -1):
        with pytest.raises(ValueError):
            HurstParam(bad)


def test_constant_mode_parse():
    assert ConstantMode.parse("paper") is ConstantMode.PAPER_LEMMA
    assert ConstantMode.parse("derived_normalization") is ConstantMode.DERIVED_NORMALIZATION
    with pytest.raises(ValueError):
        ConstantMode.parse("bogus")


@pytest.mark.parametrize("a, b, H, want", [
    (0, 1, 0.75, 2.666667),
    (1, 1, 0.75, 0.0),
    (0, 2, 0.60, 19.144976),
])
def test_riesz_square_examples(a, b, H, want):
    assert riesz_square_integral(a, b, H) == pytest.approx(want, rel=1e-6, abs=1e-12)


@pytest.mark.parametrize("a, b, H, want", [
    (0, 2, 0.75, 1.104570),
    (0, 0, 0.9, 0.0),
    (0, 2, 0.90, 1.029307),
])
def test_riesz_split_examples(a, b, H, want):
    assert riesz_split_integral(a, b, H) == pytest.approx(want, rel=1e-6, abs=1e-12)


def test_riesz_errors():
    with pytest.raises(ValueError, match="white-noise"):
        riesz_square_integral(0, 1, 0.5)
    with pytest.raises(ValueError, match="white-noise"):
        riesz_split_integral(0, 1, 0.5)
    with pytest.raises(ValueError):
        riesz_square_integral(2, 1, 0.75)


def test_riesz_square_against_dblquad():
    # integrate over the lower triangle in (x, u = x - y) so the singularity sits on an edge
    H, a, b = 0.7, 0.3, 1.4
    val, _ = integrate.dblquad(lambda u, x: u ** (2 * H - 2), a, b, 0, lambda x: x - a,
                               epsabs=0, epsrel=1e-12)
    assert riesz_square_integral(a, b, H) == pytest.approx(2 * val, rel=1e-8)


@given(rough, st.floats(-5, 5), st.floats(0.01, 5))
def test_split_below_half_square(H, a, L):
    assert riesz_split_integral(a, a + L, H) <= 0.5 * riesz_square_integral(a, a + L, H) * (1 + 1e-12)


@given(rough, st.floats(-5, 5), st.floats(0.01, 5), st.floats(-3, 3))
def test_riesz_translation_invariant(H, a, L, shift):
    assert riesz_square_integral(a + shift, a + shift + L, H) == pytest.approx(
        riesz_square_integral(a, a + L, H), rel=1e-9)


@pytest.mark.parametrize("args, want", [
    ((0, 1, 0, 1, 0.75), 1.0),
    ((0, 1, 1, 2, 0.5), 0.0),
    ((0, 1, 1, 2, 0.75), 0.414214),
])
def test_interval_cross_covariance_examples(args, want):
    assert interval_cross_covariance(*args) == pytest.approx(want, abs=1e-6)


def test_interval_cross_covariance_matches_kernel_quadrature():
    H = 0.75
    val, _ = integrate.dblquad(lambda y, x: abs(x - y) ** (2 * H - 2), 0, 1, 1, 2, epsrel=1e-12)
    assert interval_cross_covariance(0, 1, 1, 2, H) == pytest.approx(H * (2 * H - 1) * val, rel=1e-8)


def test_interval_cross_covariance_errors_and_degenerate():
    with pytest.raises(ValueError):
        interval_cross_covariance(1, 0, 0, 1, 0.6)
    assert interval_cross_covariance(0.3, 0.3, 0, 1, 0.6) == 0.0


@given(hursts, st.floats(-3, 3), st.floats(0, 2), st.floats(-3, 3), st.floats(0, 2))
def test_interval_cross_covariance_symmetric(H, a, la, c, lc):
    x = interval_cross_covariance(a, a + la, c, c + lc, H)
    y = interval_cross_covariance(c, c + lc, a, a + la, H)
    assert x == pytest.approx(y, abs=1e-12)


def test_interval_cross_covariance_vectorised():
    a = np.array([0.0, 0.0])
    out = interval_cross_covariance(a, a + 1, a + np.array([0.0, 1.0]), a + np.array([1.0, 2.0]), 0.75)
    assert out == pytest.approx([1.0, 0.414214], abs=1e-6)


@pytest.mark.parametrize("lag, dx, H, want", [(0, 1, 0.6, 1.0), (1, 1, 0.5, 0.0), (1, 1, 0.75, 0.414214)])
def test_fgn_covariance_examples(lag, dx, H, want):
    assert fgn_covariance(lag, dx, H) == pytest.approx(want, abs=1e-6)


@given(hursts, st.integers(0, 50), st.floats(0.01, 3))
def test_fgn_covariance_is_interval_covariance(H, lag, dx):
    want = interval_cross_covariance(0, dx, lag * dx, (lag + 1) * dx, H)
    assert fgn_covariance(lag, dx, H) == pytest.approx(want, rel=1e-9, abs=1e-12)
    assert fgn_covariance(lag, dx, H) >= -1e-15


@pytest.mark.parametrize("H", [0.5, 0.6, 0.75, 0.9])
def test_fgn_telescoping(H):
    dx = 0.37
    for n in (1, 2, 7, 33, 64):
        k = np.arange(n)
        total = fgn_covariance(np.abs(k[:, None] - k[None, :]), dx, H).sum()
        assert total == pytest.approx((n * dx) ** (2 * H), rel=1e-10)


@pytest.mark.parametrize("eps, H, want, rel", [
    (1.0, 0.5, 1.0, 1e-12),
    (0.5, 0.75, 0.168186, 1e-4),  # example value comes from a Monte Carlo oracle
    (1.0, 0.9, 0.942507, 1e-5),
])
def test_diamond_variance_examples(eps, H, want, rel):
    assert diamond_variance(eps, H) == pytest.approx(want, rel=rel)


@pytest.mark.parametrize("H", [0.5, 0.6, 0.75, 0.9])
def test_diamond_variance_scale_invariant(H):
    ratios = [diamond_variance(e, H) / e ** (2 * H + 1) for e in (1 / 8, 1 / 4, 1 / 2, 1)]
    assert np.ptp(ratios) < 1e-10


@pytest.mark.parametrize("H", [0.5, 0.62, 0.75, 0.93])
def test_diamond_variance_from_quadrature(H):
    # int over the diamond's time extent of width(t)^2H
    eps = 0.8
    half = eps / math.sqrt(2)
    val, _ = integrate.quad(lambda t: (2 * min(t, 2 * half - t)) ** (2 * H), 0, 2 * half,
                            points=[half], epsrel=1e-12)
    assert diamond_variance(eps, H) == pytest.approx(val, rel=1e-10)
    d = Diamond(0.0, 0.0, eps)
    assert region_covariance(d.profile(), d.profile(), H) == pytest.approx(val, rel=1e-10)


def _quad_covariance(A, B, H):
    pa, pb = A.profile(), B.profile()

    def section(profile, t):
        for t0, t1, l0, ls, r0, rs in profile:
            if t0 <= t <= t1:
                return l0 + ls * (t - t0), r0 + rs * (t - t0)
        return None

    def integrand(t):
        sa, sb = section(pa, t), section(pb, t)
        if sa is None or sb is None:
            return 0.0
        return interval_cross_covariance(*sa, *sb, H)

    lo = max(A.t_bottom, B.t_bottom)
    hi = min(A.t_bottom + 2 * A.half_height, B.t_bottom + 2 * B.half_height)
    if hi <= lo:
        return 0.0
    kinks = sorted({A.t_bottom + A.half_height, B.t_bottom + B.half_height})
    val, _ = integrate.quad(integrand, lo, hi, points=[k for k in kinks if lo < k < hi],
                            epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


@pytest.mark.parametrize("H", [0.5, 0.6, 0.75, 0.9])
@pytest.mark.parametrize("offset", [(0, 1), (1, -1), (1, 0), (0, 3), (2, -1), (1, 2), (3, -2)])
def test_diamond_covariance_matches_quad(H, offset):
    A = Diamond(0.0, 0.0, 1.0)
    B = Diamond(float(offset[0]), float(offset[1]), 1.0)
    assert diamond_covariance(A, B, H) == pytest.approx(_quad_covariance(A, B, H), rel=1e-8, abs=1e-12)


def test_diamond_covariance_examples():
    A = Diamond(0.0, 0.0, 1.0)
    assert diamond_covariance(A, A, 0.5) == pytest.approx(1.0)
    # spatially adjacent on one anti-diagonal
    B = Diamond(-1.0, 1.0, 1.0)
    assert diamond_covariance(A, B, 0.5) == pytest.approx(0.0, abs=1e-14)
    assert diamond_covariance(A, B, 0.75) == pytest.approx(0.3124542988, rel=1e-8)
    # next anti-diagonal
    assert diamond_covariance(A, Diamond(1.0, 0.0, 1.0), 0.75) == pytest.approx(0.118921, abs=1e-6)


@given(hursts, st.integers(-4, 4), st.integers(-4, 4))
@settings(max_examples=40)
def test_diamond_covariance_symmetric_and_local(H, di, dj):
    A = Diamond(4.0, 4.0, 1.0)
    B = Diamond(4.0 + di, 4.0 + dj, 1.0)
    ab = diamond_covariance(A, B, H)
    assert ab == pytest.approx(diamond_covariance(B, A, H), abs=1e-12)
    if abs(di + dj) >= 2:
        assert ab == 0.0


def test_diamond_geometry():
    d = Diamond(1.0, 2.0, 0.5)
    bottom, left, right, top = d.vertices()
    assert bottom == pytest.approx((3 / math.sqrt(2), 1 / math.sqrt(2)))
    assert top[0] - bottom[0] == pytest.approx(2 * d.half_height)
    assert left[1] < bottom[1] < right[1]
    with pytest.raises(ValueError):
        Diamond(-1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        Diamond(0.0, 0.0, 0.0)


@pytest.mark.parametrize("H", [0.5, 0.55, 0.75])
def test_qv_limit_constant(H):
    paper = qv_limit_constant(H, ConstantMode.PAPER_LEMMA)
    derived = qv_limit_constant(H, ConstantMode.DERIVED_NORMALIZATION)
    assert paper / derived == pytest.approx((2 * H + 1) / 2, rel=1e-12)
    assert derived == pytest.approx(diamond_constant(H) / 4, rel=1e-14)


def test_qv_limit_constant_examples():
    assert qv_limit_constant(0.5, "paper_lemma") == 0.25
    assert qv_limit_constant(0.5, "derived_normalization") == pytest.approx(0.25, rel=1e-15)
    assert qv_limit_constant(0.75, "paper") == pytest.approx(0.297302, abs=1e-6)
    assert qv_limit_constant(0.75, "derived") == pytest.approx(0.237841, abs=1e-6)


def test_spectral_constant():
    assert spectral_constant(0.5) == pytest.approx(0.159155, abs=1e-6)
    mp = mpmath.gamma(2.5) * mpmath.sin(3 * mpmath.pi / 4) / (2 * mpmath.pi)
    assert spectral_constant(0.75) == pytest.approx(float(mp), rel=1e-13)
    assert spectral_constant(0.999999) < 1e-5


@pytest.mark.parametrize("H", [0.5, 0.75])
def test_slab_triangle_covariance(H):
    cov = slab_triangle_covariance(6, H, True)
    assert cov == pytest.approx(cov.T)
    area_var = (2 ** (2 * H) / (2 * H + 1))  # int_0^1 (2t)^2H dt
    assert np.diag(cov) == pytest.approx(area_var, rel=1e-12)
    up = triangle_profile(0.0, 0.0, 1.0, True)
    down = triangle_profile(0.0, 1.0, 1.0, False)
    assert cov[0, 1] == pytest.approx(region_covariance(up, down, H), rel=1e-12, abs=1e-15)
    assert np.linalg.eigvalsh(cov).min() > -1e-10

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from wavefit import model as wm

K = wm.GammaKernel(8.0, 0.51)


def test_gompertz_peak_height_and_location():
    t = np.linspace(0, 100, 100001)
    f = wm.gompertz_rate(t, 40.0, 0.09)
    assert t[np.argmax(f)] == pytest.approx(40.0, abs=1e-3)
    assert f.max() == pytest.approx(0.09 / np.e, rel=1e-9)
    assert wm.GompertzPeak(1e6, 0.09, 40.0).height == pytest.approx(1e6 * 0.09 / np.e)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.02, 0.3), st.floats(-50, 200))
def test_gompertz_integrates_to_one(lam, t0):
    val, _ = integrate.quad(lambda t: wm.gompertz_rate(t, t0, lam), t0 - 60 / lam, t0 + 60 / lam, limit=200)
    assert val == pytest.approx(1.0, abs=1e-7)


def test_gompertz_far_tails_are_exact_zero_without_warnings():
    with np.errstate(all="raise"):
        f = wm.gompertz_rate(np.array([-1e6, 1e6]), 0.0, 0.1)
    assert f[0] == 0.0 and f[1] == 0.0


def test_gompertz_shift_covariance():
    t = np.linspace(-20, 80, 301)
    np.testing.assert_allclose(wm.gompertz_rate(t + 13.0, 43.0, 0.07), wm.gompertz_rate(t, 30.0, 0.07), rtol=1e-12)


def test_gamma_pdf_matches_scipy():
    s = np.linspace(0, 60, 241)
    np.testing.assert_allclose(wm.gamma_pdf(s, 8.0, 0.51), stats.gamma.pdf(s, 8.0, scale=1 / 0.51), rtol=1e-12, atol=1e-300)
    with pytest.raises(ValueError):
        wm.gamma_pdf(np.array([-1.0]), 8.0, 0.51)


def test_kernel_moments():
    assert K.mean == pytest.approx(8.0 / 0.51)
    assert K.cv == pytest.approx(8.0**-0.5)
    k = wm.GammaKernel.from_mean_cv(15.0, 0.4)
    assert (k.mean, k.cv) == pytest.approx((15.0, 0.4))


def test_death_shape_is_normalized_and_lagged():
    t = np.arange(-40.0, 400.0, 1.0)
    d = wm.death_shape(t, 50.0, 0.09, K)
    assert np.sum(d) == pytest.approx(1.0, abs=1e-6)
    # the peak moves by roughly the kernel mode
    assert 50.0 + (K.alpha - 1) / K.beta - 3 < t[np.argmax(d)] < 50.0 + K.mean + 3


def test_death_shape_against_adaptive_quadrature():
    t0, lam = 50.0, 0.09
    for tk in (40.0, 66.0, 90.0):
        ref, _ = integrate.quad(
            lambda tau: wm.gompertz_rate(tau, t0, lam) * wm.gamma_pdf(tk - tau, K.alpha, K.beta),
            -60.0, tk, limit=400,
        )
        assert wm.death_shape(np.array([tk]), t0, lam, K, step=0.05)[0] == pytest.approx(ref, rel=2e-4)


def test_narrow_kernel_reproduces_the_cases_shape():
    """A near-Dirac kernel at lag m shifts the cases curve by m."""
    m = 10.0
    k = wm.GammaKernel(1e4, 1e4 / m)
    t = np.linspace(40.0, 90.0, 11)
    got = wm.death_shape(t, 50.0, 0.08, k, step=0.005)
    np.testing.assert_allclose(got, wm.gompertz_rate(t - m, 50.0, 0.08), rtol=2e-3)


def test_deaths_curve_superposition():
    m = wm.RegionModel(
        "X", [wm.GompertzPeak(1e6, 0.08, 40.0), wm.GompertzPeak(5e5, 0.1, 90.0)], [3e3, 1e3],
        wm.LinearBackground(5.0, 0.1), wm.LinearBackground(2.0, -0.01), K,
    )
    t = np.arange(10.0, 140.0, 7.0)
    expect = 2.0 - 0.01 * t + 3e3 * wm.death_shape(t, 40.0, 0.08, K) + 1e3 * wm.death_shape(t, 90.0, 0.1, K)
    np.testing.assert_allclose(wm.deaths_curve(m, t), expect, rtol=1e-13)
    expect_c = 5.0 + 0.1 * t + 1e6 * wm.gompertz_rate(t, 40.0, 0.08) + 5e5 * wm.gompertz_rate(t, 90.0, 0.1)
    np.testing.assert_allclose(wm.cases_curve(m, t), expect_c, rtol=1e-13)


def test_retained_death_peaks():
    m = wm.RegionModel(
        "X", [wm.GompertzPeak(1e6, 0.08, 40.0), wm.GompertzPeak(5e5, 0.1, 90.0)], [3e3],
        wm.LinearBackground(0, 0), wm.LinearBackground(0, 0), K, death_peaks=[1],
    )
    t = np.array([100.0, 120.0])
    np.testing.assert_allclose(wm.deaths_curve(m, t), 3e3 * wm.death_shape(t, 90.0, 0.1, K))


def _fd(fun, x, h=1e-5):
    return (fun(x * (1 + h)) - fun(x * (1 - h))) / (2 * h * x)


def test_cases_partials_match_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(50):
        lam, t0 = rng.uniform(0.04, 0.12), rng.uniform(30, 120)
        t = np.array([t0 + rng.uniform(-2, 3) / lam])
        d_t0, d_lam = wm.partials_cases(t, t0, lam)
        np.testing.assert_allclose(d_t0, _fd(lambda x: wm.gompertz_rate(t, x, lam), t0), rtol=1e-5)
        np.testing.assert_allclose(d_lam, _fd(lambda x: wm.gompertz_rate(t, t0, x), lam), rtol=1e-5)


def test_deaths_partials_match_finite_differences_exact_mode():
    rng = np.random.default_rng(2)
    for _ in range(15):
        lam, t0 = rng.uniform(0.04, 0.12), rng.uniform(30, 120)
        a = rng.uniform(4, 12)
        b = a / rng.uniform(12, 20)
        t = np.array([t0 + a / b + rng.uniform(-1, 2) / lam])
        P = wm.partials_deaths(t, t0, lam, wm.GammaKernel(a, b), mode="exact")[:, 0]
        fd = [
            _fd(lambda x: wm.death_shape(t, x, lam, wm.GammaKernel(a, b)), t0),
            _fd(lambda x: wm.death_shape(t, t0, x, wm.GammaKernel(a, b)), lam),
            _fd(lambda x: wm.death_shape(t, t0, lam, wm.GammaKernel(x, b)), a),
            _fd(lambda x: wm.death_shape(t, t0, lam, wm.GammaKernel(a, x)), b),
        ]
        np.testing.assert_allclose(P, np.ravel(fd), rtol=1e-4)


def test_paper_mode_alpha_column_offset():
    """The two alpha-derivative forms differ by (digamma(a) - ln a) times the shape."""
    t = np.linspace(30.0, 120.0, 10)
    ex = wm.partials_deaths(t, 50.0, 0.09, K, mode="exact")
    pa = wm.partials_deaths(t, 50.0, 0.09, K, mode="paper")
    gap = special.digamma(K.alpha) - np.log(K.alpha)
    shape = wm.death_shape(t, 50.0, 0.09, K)
    np.testing.assert_allclose(pa[2], ex[2] + gap * shape, rtol=1e-9, atol=1e-15)
    np.testing.assert_array_equal(pa[[0, 1, 3]], ex[[0, 1, 3]])


def test_invalid_inputs():
    with pytest.raises(ValueError):
        wm.GompertzPeak(1.0, -0.1, 0.0)
    with pytest.raises(ValueError):
        wm.GammaKernel(0.0, 1.0)
    with pytest.raises(ValueError):
        wm.gamma_partials(np.ones(2), 2.0, 1.0, mode="other")
    with pytest.raises(ValueError):
        wm.death_shape(np.ones(2), 0.0, 0.1, K, step=0.0)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.04, 0.12), st.floats(30.0, 120.0), st.floats(4.0, 12.0), st.floats(12.0, 20.0),
)
def test_death_shape_mass_over_window_past_both_tails(lam, t0, alpha, mean):
    """Unit mass once the window covers the kernel bulk and the slow right tail of the cases peak."""
    k = wm.GammaKernel(alpha, alpha / mean)
    t = np.arange(t0 - 60.0 / lam, t0 + 5 * k.mean + 15.0 / lam, 0.25)
    d = wm.death_shape(t, t0, lam, k)
    assert integrate.trapezoid(d, t) == pytest.approx(1.0, abs=1e-3)

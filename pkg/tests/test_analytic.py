import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sint
from scipy import stats

from fpquant.analytic import (
    Gaussian,
    StudentT,
    Uniform,
    clipping_error,
    expected_mse,
    monte_carlo_mse,
    moment_integral_I,
    moment_integral_J,
    parse_distribution,
    quadrature_mse_oracle,
    rounding_error,
    scalar_product_mse,
    scalar_product_mse_approx,
    scalar_product_terms,
    sqnr,
)
from fpquant.analytic.mse import _db
from fpquant.formats import FpFormat, QuantGrid, bias_from_max, enumerate_grid
from fpquant.quantsim import quantize_fp


def _kinks(d, a, b):
    # the uniform density jumps at its support ends
    pts = [getattr(d, "a", None), getattr(d, "b", None)] if isinstance(d, Uniform) else []
    return [p for p in pts if p is not None and a < p < b] or None


def scipy_I(d, a, b, x0):
    f = lambda w: (w - x0) ** 2 * float(d.pdf(w))
    return sint.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200, points=_kinks(d, a, b))[0]


def scipy_J(d, a, b, x0):
    f = lambda w: w * (w - x0) * float(d.pdf(w))
    return sint.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=200, points=_kinks(d, a, b))[0]


def gauss_fp(m, e, c):
    return enumerate_grid(FpFormat(m, e, bias_from_max(c, m, e)))


pytestmark = pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")

STD = Gaussian(0.0, 1.0, -8.0, 8.0)
UNI = Uniform(-1.0, 1.0)


def test_trivial_moments():
    assert moment_integral_I(UNI, -1, 1, 0) == pytest.approx(1 / 3, rel=1e-15)
    assert moment_integral_I(UNI, 0.3, 0.3, 5.0) == 0.0
    assert moment_integral_J(STD, 0.3, 0.3, 5.0) == 0.0
    assert moment_integral_J(STD, -0.2, 1.7, 0.0) == pytest.approx(moment_integral_I(STD, -0.2, 1.7, 0.0), rel=1e-14)


def test_gaussian_total_second_moment():
    # the tails beyond 8 sigma hold 2 * (8 phi(8) + Q(8)) ~ 8.2e-14 of w**2
    assert moment_integral_I(STD, -8, 8, 0) == pytest.approx(1.0, abs=1e-12)
    assert moment_integral_I(STD, -8, 8, 0) == pytest.approx(scipy_I(STD, -8, 8, 0), rel=1e-12)


def test_gaussian_J_example():
    assert moment_integral_J(STD, 0, 1, 0.5) == pytest.approx(scipy_J(STD, 0, 1, 0.5), rel=1e-12)


@pytest.mark.parametrize("bad", [(1.0, 0.5), (-9.0, 0.0), (0.0, 8.5)])
def test_interval_validation(bad):
    with pytest.raises(ValueError):
        moment_integral_I(STD, *bad, 0.0)
    with pytest.raises(ValueError):
        moment_integral_J(STD, *bad, 0.0)


dists = st.sampled_from(
    [
        STD,
        Gaussian(-1e-3, 1.7e-2, -0.35, 0.35),
        Gaussian(0.06, 0.11, 0.0, 3.63),
        Gaussian(2.0, 0.5, -1.0, 6.0),
        UNI,
        Uniform(0.0, 3.0, -1.0, 4.0),
    ]
)


@given(dists, st.floats(0, 1), st.floats(0, 1), st.floats(-1.5, 1.5))
def test_closed_forms_match_scipy_quad(d, u, v, t):
    lo, hi = d.lo, d.hi
    a, b = sorted((lo + u * (hi - lo), lo + v * (hi - lo)))
    x0 = lo + t * (hi - lo)
    for ours, ref in ((moment_integral_I, scipy_I), (moment_integral_J, scipy_J)):
        want = ref(d, a, b, x0)
        assert ours(d, a, b, x0) == pytest.approx(want, rel=1e-9, abs=1e-14 * max(1.0, x0 * x0))



def _mp_gauss_IJ(mu, sigma, a, b, x0):
    # erf antiderivatives at 400 digits: cancellation-free at this precision
    import mpmath as mp

    with mp.workdps(400):
        mu, s, a, b, x0 = (mp.mpf(float(v)) for v in (mu, sigma, a, b, x0))
        al, be = (a - mu) / s, (b - mu) / s
        pa, pb = mp.npdf(al), mp.npdf(be)
        t0 = mp.ncdf(be) - mp.ncdf(al)
        t1 = pa - pb
        t2 = t0 + al * pa - be * pb
        d = mu - x0
        i = s * s * t2 + 2 * s * d * t1 + d * d * t0
        return float(i), float(i + x0 * (s * t1 + d * t0))


@pytest.mark.parametrize(
    "a, b, x0",
    [
        (2.220921830867597, 3.4702862059531805, 1.8344297502262024),  # 19 sigma out
        (3.5620077455646695, 3.6010421679056703, 3.586741364155352),  # x0 inside, 32 sigma
        (-2.9850842138957194, -2.9850842138956075, -2.9850842138956577),  # 1e-13 wide, lower tail
        (0.06 - 1e-9, 0.06 + 1e-9, 0.06),
        (1.0, 1.0 + 1e-7, 5.0),
        (-0.5, 0.7, 0.1),
    ],
)
def test_gaussian_moments_in_tails_and_narrow_intervals(a, b, x0):
    d = Gaussian(0.06, 0.11, -3.0, 4.0)
    ref_i, ref_j = _mp_gauss_IJ(0.06, 0.11, a, b, x0)
    assert d.moment_I(a, b, x0) == pytest.approx(ref_i, rel=1e-11)
    assert d.moment_J(a, b, x0) == pytest.approx(ref_j, rel=1e-11)


@given(st.floats(-8, 8), st.floats(-12, 0), st.floats(-0.5, 1.5))
def test_gaussian_moments_against_mpmath(a, logw, frac):
    b = min(a + 10.0**logw, 8.0)
    x0 = a + (b - a) * frac
    ref_i, ref_j = _mp_gauss_IJ(0.0, 1.0, a, b, x0)
    d = Gaussian()
    assert d.moment_I(a, b, x0) == pytest.approx(ref_i, rel=1e-10, abs=1e-300)
    assert abs(d.moment_J(a, b, x0) - ref_j) <= 1e-10 * abs(ref_j) + 1e-300


def test_quadrature_oracle_splits_at_uniform_support_ends():
    d = Uniform(0.0, 3.0, -1.0, 4.0)
    a, b, x0 = np.array([-0.7, 2.2, -1.0]), np.array([0.4, 3.9, 4.0]), np.array([0.1, 3.5, 1.0])
    assert np.allclose(d.quad_moment_I(a, b, x0, atol=0.0, rtol=1e-13), d.moment_I(a, b, x0), rtol=1e-12, atol=0)
    assert d.moment_I(3.2, 3.9, 0.0) == 0.0


@pytest.mark.parametrize("nu", [1.0, 2.0, 5.0, 10.0])
def test_student_t_closed_form_where_series_applies(nu):
    d = StudentT(nu)
    rng = np.random.default_rng(int(nu))
    lim = math.sqrt(24 * nu)
    for _ in range(25):
        a, b = np.sort(rng.uniform(-lim, lim, 2))
        x0 = rng.uniform(-5, 5)
        assert d.closed_moment_I(a, b, x0) == pytest.approx(scipy_I(d, a, b, x0), rel=1e-9, abs=1e-13)
        assert d.closed_moment_J(a, b, x0) == pytest.approx(scipy_J(d, a, b, x0), rel=1e-9, abs=1e-13)


def test_student_t_pdf_matches_scipy():
    w = np.linspace(-50, 50, 101)
    for nu in (1.0, 2.0, 7.5):
        np.testing.assert_allclose(StudentT(nu).pdf(w), stats.t.pdf(w, nu), rtol=1e-13)


def test_uniform_rounding_error_is_step_squared_over_12():
    for n in (8, 64, 255):
        grid = QuantGrid(np.linspace(-1, 1, n + 1))
        s = 2.0 / n
        assert rounding_error(grid, UNI) == pytest.approx(s * s / 12, rel=1e-6)
        assert clipping_error(grid, UNI) == 0.0


def test_uniform_clipping_example():
    grid = QuantGrid([-0.5, 0.5])
    assert clipping_error(grid, UNI) == pytest.approx(1 / 24, rel=1e-14)
    assert rounding_error(grid, UNI) == pytest.approx(1 / 24, rel=1e-14)


def test_student_t_tiny_grid_is_tail_dominated():
    d = StudentT(2.0)
    grid = QuantGrid([-1.0, 1.0])
    err = expected_mse(grid, d)
    tail = 2 * scipy_I(d, 1.0, 100.0, 1.0)
    assert err.clipping == pytest.approx(tail, rel=1e-9)
    assert err.clipping > 10 * err.rounding


def test_rounding_error_vanishes_under_refinement():
    errs = [rounding_error(QuantGrid(np.linspace(-1, 1, n)), UNI) for n in (3, 33, 333, 3333)]
    assert all(x > y for x, y in zip(errs, errs[1:]))
    assert errs[-1] < 1e-7


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=12, unique=True), st.floats(-3, 3))
def test_adding_a_point_never_increases_rounding_error(pts, extra):
    d = Gaussian(0.3, 1.1, -8, 8)
    g = QuantGrid(pts)
    if not g.alpha_min < extra < g.alpha_max:
        return
    g2 = QuantGrid(list(pts) + [extra])
    assert rounding_error(g2, d) <= rounding_error(g, d) * (1 + 1e-12) + 1e-16


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10))
def test_negation_symmetry_and_nonnegativity(pts):
    g = QuantGrid(pts)
    gneg = QuantGrid([-p for p in pts])
    for d in (STD, UNI):
        e1, e2 = expected_mse(g, d), expected_mse(gneg, d)
        assert e1.rounding >= 0 and e1.clipping >= 0
        assert e1.total == pytest.approx(e2.total, rel=1e-10, abs=1e-16)


@given(st.floats(0.01, 100))
def test_scale_covariance(lam):
    g = gauss_fp(3, 4, 2.5)
    for d, dl in (
        (UNI, Uniform(-lam, lam)),
        (Gaussian(0.2, 0.9, -8, 8), Gaussian(0.2 * lam, 0.9 * lam, -8 * lam, 8 * lam)),
    ):
        assert expected_mse(g.scaled(lam), dl).total == pytest.approx(lam**2 * expected_mse(g, d).total, rel=1e-9)


@pytest.mark.parametrize("d", [STD, UNI, Gaussian(0.06, 0.11, 0.0, 3.63)])
@pytest.mark.parametrize("me", [(5, 2), (4, 3), (2, 5)])
def test_quadrature_oracle_agrees_with_closed_form(d, me):
    m, e = me
    g = gauss_fp(m, e, 0.6 * d.max_abs)
    closed = expected_mse(g, d, "closed").total
    q = quadrature_mse_oracle(g, d)
    assert q.value == pytest.approx(closed, rel=1e-9)
    assert q.error < 1e-10


def test_quadrature_oracle_mirror_symmetry():
    g = QuantGrid([-2.0, -0.3, 0.0, 0.7, 1.5])
    gm = QuantGrid([2.0, 0.3, 0.0, -0.7, -1.5])
    assert quadrature_mse_oracle(g, STD).value == pytest.approx(quadrature_mse_oracle(gm, STD).value, rel=1e-12)


def test_monte_carlo_agreement_5m2e():
    grid_fmt = FpFormat.from_max(4.37, 5, 2)
    analytic = expected_mse(enumerate_grid(grid_fmt), STD).total
    mean, se = monte_carlo_mse(STD, lambda w: quantize_fp(w, grid_fmt), 1_000_000, np.random.default_rng(11))
    assert abs(mean - analytic) < 3 * se


def test_sqnr():
    g = gauss_fp(4, 3, 4.0)
    s1 = sqnr(STD, g)
    assert s1 == pytest.approx(10 * math.log10(1.0 / expected_mse(g, STD).total), rel=1e-12)
    assert _db(1.0, 0.0) == math.inf
    assert _db(1.0, 2e-4) == pytest.approx(_db(1.0, 1e-4) - 10 * math.log10(2), abs=1e-12)


def test_sqnr_analytic_vs_empirical():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(1_000_000)
    for m, e in ((5, 2), (3, 4)):
        f = FpFormat.from_max(4.0, m, e)
        emp = 10 * math.log10(np.mean(x * x) / np.mean((x - quantize_fp(x, f)) ** 2))
        assert abs(emp - sqnr(STD, enumerate_grid(f))) < 0.5


def _mc_dot(dw, qw, dx, qx, n, rng):
    w = dw.sample(rng, n)
    x = dx.sample(rng, n)
    inside = (w >= dw.lo) & (w <= dw.hi) & (x >= dx.lo) & (x <= dx.hi)
    w, x = np.where(inside, w, 0.0), np.where(inside, x, 0.0)
    err = ((qw(w) * qx(x) - w * x) ** 2) * inside
    return err.mean(), err.std(ddof=1) / math.sqrt(n)


def test_scalar_product_full_formula_against_monte_carlo():
    dw = Gaussian(0.0, 1.0, -8, 8)
    dx = Gaussian(0.5, 1.0, -3.0, 3.0)
    fw = FpFormat.from_max(2.5, 2, 2)
    fx = FpFormat.from_max(2.0, 1, 3)
    full = scalar_product_mse(enumerate_grid(fw), dw, enumerate_grid(fx), dx)
    mean, se = _mc_dot(dw, lambda v: quantize_fp(v, fw), dx, lambda v: quantize_fp(v, fx), 2_000_000, np.random.default_rng(2))
    assert abs(mean - full) < 3 * se
    # flipping the sign of E_s in the mixed terms is clearly rejected
    t = scalar_product_terms(enumerate_grid(fw), dw, enumerate_grid(fx), dx)
    flipped = full - 4 * (t.e_rw * t.e_sx + t.e_rx * t.e_sw)
    assert abs(mean - flipped) > 6 * se


def test_cross_moment_equals_expectation_of_w_times_error():
    d = Gaussian(0.5, 1.0, -3.0, 3.0)
    f = FpFormat.from_max(2.0, 1, 3)
    g = enumerate_grid(f)
    t = scalar_product_terms(g, d, g, d)
    ref = sint.quad(lambda w: w * (float(quantize_fp(w, f)) - w) * float(d.pdf(w)), -3, 3, points=list(g.values[1:-1]), limit=500)[0]
    assert t.e_sw == pytest.approx(ref, rel=1e-7)


def test_surviving_term_when_weights_are_exact():
    dx = STD
    gx = gauss_fp(3, 4, 4.0)
    dw = Uniform(-1.0, 1.0)
    gw = QuantGrid(np.linspace(-1, 1, 2**16 + 1))
    t = scalar_product_terms(gw, dw, gx, dx)
    assert t.full == pytest.approx(t.m_w * t.e_rx, rel=1e-6)


def test_approx_close_for_standard_gaussians():
    for m, e in ((5, 2), (4, 3), (3, 4), (2, 5)):
        g = gauss_fp(m, e, 4.0)
        full = scalar_product_mse(g, STD, g, STD)
        assert scalar_product_mse_approx(g, STD, g, STD) == pytest.approx(full, rel=0.1)


def test_parse_distribution():
    assert parse_distribution("gauss:mu=1,sigma=2,lo=-3,hi=5") == Gaussian(1, 2, -3, 5)
    assert parse_distribution("uniform:a=-1,b=1") == Uniform(-1, 1)
    assert parse_distribution("t:nu=2") == StudentT(2.0, -100, 100)
    for bad in ("cauchy:x=1", "gauss:mu", "gauss:foo=1", "gauss:sigma=-1", "t:nu=2,lo=5,hi=1"):
        with pytest.raises(ValueError):
            parse_distribution(bad)

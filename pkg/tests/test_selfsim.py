import numpy as np
import pytest
from scipy import integrate, special

from bubbleflow import selfsim as S

NUS = (0.6, 0.75, 0.9)


@pytest.fixture(scope="module")
def bases():
    return {nu: S.lnu_basis(nu) for nu in NUS}


def _closed_form_moment(nu):
    f = lambda z: z * S.kummer_y1(nu, np.array([z]))[0]
    return integrate.quad(f, 0, 1, epsabs=1e-14)[0] + integrate.quad(f, 1, np.inf, epsabs=1e-14)[0]


@pytest.mark.parametrize("nu", NUS)
def test_basis_matches_confluent_closed_forms(bases, nu):
    b = bases[nu]
    s = np.geomspace(1e-4, 19.0, 300)
    assert np.max(np.abs(b.eval_y1(s)[0] / S.kummer_y1(nu, s) - 1)) < 1e-7
    assert np.max(np.abs(b.eval_y2(s)[0] / S.kummer_y2(nu, s) - 1)) < 1e-10
    assert b.c2 == pytest.approx(S.kummer_y2(nu, np.array([0.0]))[0], rel=1e-9)
    assert b.moment == pytest.approx(_closed_form_moment(nu), rel=1e-8)


@pytest.mark.parametrize("nu", NUS)
def test_y1_normalised_at_origin(bases, nu):
    b = bases[nu]
    s = np.geomspace(1e-4, 1e-3, 20)
    f = s * b.eval_y1(s)[0]
    # extrapolate the smooth function s y1 to s = 0
    limit = np.polyval(np.polyfit(s, f, 2), 0.0)
    assert abs(limit - 1) < 1e-4
    assert abs(f[0] - 1) < 1e-4
    # at s = 1e-3 the linear term f'(0) s is already visible; check it against the expansion
    s3 = np.array([1e-3])
    expansion = 1 + b.fprime0 * 1e-3 + 0.5 * b.fsecond0 * 1e-6
    assert (s3 * b.eval_y1(s3)[0])[0] == pytest.approx(expansion, abs=1e-9)


@pytest.mark.parametrize("nu", NUS)
def test_y2_algebraic_tail(bases, nu):
    b = bases[nu]
    s = np.linspace(8, 16, 40)
    scaled = s ** (2 * nu) * b.eval_y2(s)[0]
    limit = np.polyval(np.polyfit(s ** -2.0, scaled, 2), 0.0)
    assert abs(limit - 1) < 1e-3
    big = np.array([1e3])
    assert (big ** (2 * nu) * b.eval_y2(big)[0])[0] == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("nu", NUS)
def test_fprime_identity(bases, nu):
    b = bases[nu]
    assert b.fprime0 == pytest.approx((nu - 1) * b.moment, rel=1e-4)
    # f''(0) = 1/2 - nu from the power series of f = s y1
    assert b.fsecond0 == pytest.approx(0.5 - nu, abs=1e-5)


@pytest.mark.parametrize("nu", NUS)
def test_wronskian_constant(bases, nu):
    w = bases[nu].wronskian_constant(0.5, 5.0)
    assert np.ptp(w) / abs(np.mean(w)) < 1e-6
    # s^2 e^{s^2/4} W = c2 from the reduction-of-order construction
    assert np.mean(w) == pytest.approx(bases[nu].c2, rel=1e-6)


@pytest.mark.parametrize("nu", NUS)
def test_ode_residuals_and_order(nu):
    coarse = S.lnu_basis(nu, n=1000)
    fine = S.lnu_basis(nu, n=2000)
    assert max(fine.residuals()) < 1e-6
    assert max(coarse.residuals()) > max(fine.residuals())


def test_basis_positive(bases):
    # beyond s ~ 38 the Gaussian factor underflows double precision
    s = np.geomspace(1e-4, 35, 500)
    for b in bases.values():
        assert np.all(b.eval_y1(s)[0] > 0)
        assert np.all(b.eval_y2(s)[0] > 0)


def test_gaussian_tail_log_derivative(bases):
    b = bases[0.75]
    s = np.array([8.0])
    y, dy = b.eval_y1(s)
    slope = (dy / y)[0]
    # y1 ~ c1 e^{-s^2/4} s^{2nu-3}
    assert slope == pytest.approx(-4 + (2 * 0.75 - 3) / 8, rel=2e-3)
    # amplitude c1 against the confluent asymptote Gamma(3/2-nu)/(2 sqrt(pi)) 4^{3/2-nu}
    assert b.c1 == pytest.approx(S.gamma_fn(0.75) / (2 * np.sqrt(np.pi)) * 4 ** 0.75, rel=1e-9)


def test_gaussian_tail_exponent_4nu_minus_3_is_off(bases):
    # the s^{4nu-3} power would give -4 at nu = 3/4; the true slope differs by ~5%
    b = bases[0.75]
    y, dy = b.eval_y1(np.array([8.0]))
    assert abs((dy / y)[0] / -4.0 - 1) > 0.02


def test_nu_outside_range_rejected():
    with pytest.raises(S.SelfSimilarError):
        S.lnu_basis(0.4)
    with pytest.raises(S.SelfSimilarError):
        S.lnu_basis(1.0)


# ---------------------------------------------------------------- outer profiles


def test_regime_dispatch():
    assert S.regime_of(1.5) == "gamma_lt2"
    assert S.regime_of(2.0) == "gamma_eq2"
    assert S.regime_of(3.0) == "gamma_gt2"
    with pytest.raises(S.SelfSimilarError):
        S.regime_of(1.0)


def test_gamma_lt2_coefficient(bases):
    prof = S.outer_profile(1.5, 1.0, basis=bases[0.75])
    expected = 2 * S.kummer_y2(0.75, np.array([0.0]))[0] / (0.5 * _closed_form_moment(0.75))
    assert prof.d > 0
    assert prof.d == pytest.approx(expected, rel=1e-8)
    s = np.array([1e-4, 1e-3])
    g = prof.profile(s)[0]
    assert np.all(np.abs(g - prof.d / s) < 1e-2)
    far = np.array([200.0, 400.0])
    assert np.allclose(far ** 1.5 * prof.profile(far)[0], 1.0, rtol=1e-4)


def test_gamma_lt2_invariant_under_domain_doubling():
    a = S.outer_profile(1.5, 1.0)
    b = S.outer_profile(1.5, 1.0, basis=S.lnu_basis(0.75, s_max=40.0, n=4000))
    assert b.d == pytest.approx(a.d, rel=1e-8)


def test_gamma_lt2_solves_ode(bases):
    prof = S.outer_profile(1.5, 2.0, basis=bases[0.75])
    s = np.geomspace(0.01, 15, 400)
    g, g1, _ = prof.profile(s)
    # second derivative from a spline of g', not from the equation
    from scipy.interpolate import CubicSpline
    g2 = CubicSpline(np.log(s), g1)(np.log(s), 1) / s
    res = g2 + (2 / s + s / 2) * g1 + 0.75 * g
    assert np.max(np.abs(res) / (np.abs(g2) + np.abs(g1) + np.abs(g))) < 1e-5


@pytest.fixture(scope="module")
def gamma2():
    return S.outer_profile(2.0, 1.0)


def test_gamma2_constants(gamma2):
    assert gamma2.b == 0.0
    assert gamma2.k == pytest.approx(1 / (2 * np.sqrt(np.pi)), rel=1e-12)
    # k = 1 / (2 ∫ z g0) with g0 = e^{-z^2/4}/z
    mom = integrate.quad(lambda z: np.exp(-z * z / 4), 0, np.inf)[0]
    assert gamma2.k == pytest.approx(1 / (2 * mom), rel=1e-12)
    assert gamma2.dbar == pytest.approx(-np.euler_gamma / 2, rel=1e-10)
    assert gamma2.omega == pytest.approx(np.log(2) / 2, rel=1e-8)
    assert gamma2.d == pytest.approx((np.log(2) - np.euler_gamma / 2) / np.sqrt(np.pi), rel=1e-8)


def test_gamma2_flux_balance_by_direct_quadrature(gamma2):
    rep = S.gamma2_identity_check(gamma2)
    assert rep.identity_residual < 1e-14
    assert abs(rep.flux_balance) < 1e-8
    assert rep.h_linear_measured == pytest.approx(rep.h_linear_expected, abs=1e-4)
    assert abs(rep.h_linear_measured - rep.h_linear_alternative) > 0.1


def test_gamma2_profile_behaviour(gamma2):
    s = np.array([1e-5])
    h = gamma2.h(s)[0]
    assert abs(h[0] - gamma2.d / s[0]) < 1e-5
    far = np.array([300.0, 600.0])
    assert np.allclose(far ** 2 * gamma2.h(far)[0], gamma2.A, rtol=1e-3)


def test_gamma2_invalid_B_rejected():
    with pytest.raises(S.SelfSimilarError):
        S.outer_profile(2.0, 1.0, B=5.0)


def test_gamma_gt2():
    prof = S.outer_profile(3.0, 1.0, u0_moment=np.sqrt(np.pi))
    assert prof.d == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(S.SelfSimilarError):
        S.outer_profile(3.0, 1.0)


def test_heat_profiles():
    s = np.geomspace(0.01, 12, 300)
    h = 1e-6
    for fn in (S.g0_eval, S.g1_eval):
        g, g1, g2 = fn(s)
        fd = (fn(s + h)[0] - fn(s - h)[0]) / (2 * h)
        assert np.allclose(g1, fd, rtol=1e-6, atol=1e-8)
        fd2 = (fn(s + h)[1] - fn(s - h)[1]) / (2 * h)
        assert np.allclose(g2, fd2, rtol=1e-5, atol=1e-7)
    # g1 is the regular solution: g1(0) = 1
    assert S.g1_eval(np.array([1e-6]))[0][0] == pytest.approx(1.0, abs=1e-10)


# ---------------------------------------------------------------- barrier


@pytest.fixture(scope="module")
def barrier():
    return S.barrier_profile(1.5)


def _erf_barrier_oracle(x, h=S.default_h0):
    """nu = 1/2: y1 = erfc(s/2)/s, y2 = erf(s/2)/s, s^2 e^{s^2/4} W = 1/sqrt(pi)."""
    a = integrate.quad(lambda z: special.erfcx(z / 2) * h(z) * z, x, np.inf,
                       limit=400, epsabs=0, epsrel=1e-13)[0]
    b = integrate.quad(lambda z: special.erf(z / 2) * h(z) * z * np.exp((z * z - x * x) / 4), 0, x,
                       limit=400, epsabs=0, epsrel=1e-13)[0]
    return np.sqrt(np.pi) * (special.erf(x / 2) / x * a + special.erfcx(x / 2) / x * b)


def test_barrier_matches_erf_closed_form(barrier):
    s = np.array([1e-3, 0.1, 1.0, 5.0, 20.0])
    exact = np.array([_erf_barrier_oracle(x) for x in s])
    assert np.max(np.abs(barrier(s)[0] / exact - 1)) < 1e-8


def test_barrier_endpoint_shape(barrier):
    v = barrier(np.array([1e-3]))[0][0]
    assert np.isfinite(v / 1e-3) and v > 0
    tail = 20.0 ** 3 * barrier(np.array([20.0]))[0][0]
    assert np.isfinite(tail) and tail > 0
    # the s^{-3} amplitude is 1 / (3/2 - nu) for h ~ s^{-3}
    big = np.array([35.0])
    assert (big ** 3 * barrier(big)[0])[0] == pytest.approx(1.0, rel=5e-3)


@pytest.mark.parametrize("beta", [1.5, 1.75])
def test_barrier_residual_and_order(beta):
    s = np.geomspace(0.01, 20, 5000)
    coarse = S.barrier_profile(beta, n=2000)
    fine = S.barrier_profile(beta, n=4000)
    assert fine.residual(s) < 1e-6
    assert fine.residual(s) < 1e-7
    assert coarse.residual(s) > 4 * fine.residual(s)
    assert np.all(fine.phi > 0)


@pytest.mark.parametrize("beta", [1.5, 1.75, 2.25])
def test_barrier_two_routes_agree(beta):
    s = np.array([1e-3, 0.1, 1.0, 5.0, 20.0])
    fd = S.barrier_profile(beta, method="bvp")
    if 0 < beta - 1 < 1:
        quad = S.barrier_profile(beta)
        assert np.max(np.abs(fd(s)[0] / quad(s)[0] - 1)) < 1e-5
    assert fd.residual(np.geomspace(0.01, 20, 2000)) < 1e-3


def test_barrier_heat_defect(barrier):
    rng = np.random.default_rng(7)
    r = rng.uniform(0.1, 5, 10)
    t = rng.uniform(1, 20, 10)
    target = t ** -1.5 * S.default_h0(r / np.sqrt(t))
    got = barrier.heat_defect(r, t)
    assert np.max(np.abs(got - target) / np.abs(target)) < 1e-5
    # the opposite sign is not what the chain rule gives
    assert np.all(np.abs(got + target) > np.abs(target))


def test_barrier_resonant_beta_rejected():
    with pytest.raises(S.SelfSimilarError):
        S.barrier_profile(2.5)

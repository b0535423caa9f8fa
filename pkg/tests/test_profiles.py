import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbleflow import profiles as P
from bubbleflow.grid import GridError, RadialField, RadialGrid

C3 = 3 ** 0.25
# 30-digit composite Gauss-Legendre value (mpmath) of the solvability constant
PI0_REFERENCE = -2.58410528166999294


def test_bubble_values():
    assert P.bubble_eval(0.0, 1.0)[0] == pytest.approx(1.3160740129524924, abs=1e-15)
    assert P.bubble_eval(1.0, 1.0)[0] == pytest.approx(C3 / np.sqrt(2), rel=1e-15)
    assert P.bubble_eval(0.0, 4.0)[0] == pytest.approx(C3 / 2, rel=1e-15)


def test_bubble_rejects_bad_scale():
    with pytest.raises(ValueError):
        P.bubble_eval(1.0, 0.0)
    with pytest.raises(ValueError):
        P.bubble_eval(1.0, -2.0)


@given(st.floats(0, 1e3), st.floats(1e-3, 1e3))
@settings(max_examples=60, deadline=None)
def test_bubble_scaling_covariance(r, mu):
    a = P.bubble_eval(r, mu)
    b = P.bubble_eval(r / mu, 1.0)
    assert a[0] == pytest.approx(mu ** -0.5 * b[0], rel=1e-13, abs=1e-300)
    assert a[1] == pytest.approx(mu ** -1.5 * b[1], rel=1e-13, abs=1e-300)
    assert a[2] == pytest.approx(mu ** -2.5 * b[2], rel=1e-13, abs=1e-300)


def test_bubble_derivatives_match_differences():
    r = np.linspace(0.1, 20, 50)
    h = 1e-5
    w, w1, w2 = P.bubble_eval(r)
    fd1 = (P.bubble_eval(r + h)[0] - P.bubble_eval(r - h)[0]) / (2 * h)
    fd2 = (P.bubble_eval(r + h)[1] - P.bubble_eval(r - h)[1]) / (2 * h)
    assert np.allclose(w1, fd1, rtol=1e-8, atol=1e-12)
    assert np.allclose(w2, fd2, rtol=1e-8, atol=1e-12)


def test_yamabe_residual():
    assert P.yamabe_residual(np.linspace(0.01, 100, 20001)) < 1e-12
    assert P.yamabe_residual(np.array([1.0])) < 1e-14
    assert P.yamabe_residual(RadialGrid.uniform(0.01, 100, 500)) < 1e-12


def test_yamabe_residual_of_perturbed_bubble():
    r = np.linspace(0.01, 100, 2001)
    # analytic oracle: for 1.01 w the residual is (1.01^5 - 1.01) w^5
    expected = (1.01 ** 5 - 1.01) * np.max(P.bubble_eval(r)[0] ** 5)
    got = P.yamabe_residual(r, scale=1.01)
    assert got > 1e-3
    assert got == pytest.approx(expected, rel=1e-10)


def test_yamabe_residual_rejects_origin():
    with pytest.raises(GridError):
        P.yamabe_residual(np.array([0.0, 1.0]))


def test_z0_closed_form():
    z, z1, z2 = P.z0_eval(np.array([1.0, 1e8]))
    assert z[0] == 0.0
    assert z[1] * 1e8 == pytest.approx(C3 / 2, rel=1e-12)
    r = np.geomspace(1e-3, 1e3, 400)
    z, z1, z2 = P.z0_eval(r)
    assert np.max(np.abs(z2 + 2 * z1 / r + P.potential(r) * z)) < 1e-12
    # Z0 = -(w/2 + r w')
    w, w1, _ = P.bubble_eval(r)
    assert np.allclose(z, -(w / 2 + r * w1), rtol=1e-13, atol=1e-15)


def test_ztilde_solves_kernel_equation():
    r = np.geomspace(1e-2, 1e3, 400)
    z, z1, z2 = P.ztilde_eval(r)
    scale = np.abs(z2) + np.abs(2 * z1 / r) + np.abs(P.potential(r) * z)
    assert np.max(np.abs(z2 + 2 * z1 / r + P.potential(r) * z) / scale) < 1e-12
    h = 1e-6 * r
    fd = (P.ztilde_eval(r + h)[0] - P.ztilde_eval(r - h)[0]) / (2 * h)
    assert np.allclose(z1, fd, rtol=1e-6)
    assert P.ztilde_eval(1e-6)[0] * 1e-6 == pytest.approx(1.0, rel=1e-9)
    assert P.ztilde_eval(1e9)[0] == pytest.approx(1.0, rel=1e-12)


def test_wronskian_of_kernel_pair():
    r = np.geomspace(1e-2, 1e4, 100)
    z, z1, _ = P.z0_eval(r)
    zt, zt1, _ = P.ztilde_eval(r)
    assert np.allclose(r * r * (z * zt1 - z1 * zt), P.WRONSKIAN_Z, rtol=1e-10)


def test_pi0_two_quadratures_agree():
    a = P.pi0_value("quad")
    b = P.pi0_value("mapped")
    assert abs(a - b) < 1e-8
    assert a == pytest.approx(PI0_REFERENCE, abs=1e-10)


def test_phi1_residual(phi1):
    r = np.linspace(0.05, 50, 5000)
    assert phi1.residual(r) < 1e-6
    grid = RadialGrid.stretched(50.0, 400, 1e-3)
    m = grid.r >= 0.05
    assert phi1.residual(grid.r[m]) < 1e-6


def test_phi1_against_shooting(phi1):
    """Outward integration of L0 Phi = Z0 from Phi(0) = pi0 reproduces the table."""
    sol = P.shoot_phi1(phi1.pi0, r_end=300.0)
    r = np.array([0.01, 0.3, 1.0, 2.0, 7.0, 40.0, 300.0])
    val, der = phi1(r)
    assert np.allclose(val, sol(r)[0], rtol=1e-8, atol=1e-8)
    assert np.allclose(der, sol(r)[1], rtol=1e-7, atol=1e-8)
    assert phi1(0.0)[0] == pytest.approx(phi1.pi0, abs=1e-12)


def test_phi1_tail_window_finite_and_grid_stable(phi1):
    r = np.linspace(10, 50, 2001)
    a = phi1.tail_weighted_sup(r, 2 - P.SIGMA)
    coarse = P.solve_phi1(per_decade=100)
    b = coarse.tail_weighted_sup(r, 2 - P.SIGMA)
    assert np.isfinite(a) and a > 0
    assert abs(a - b) < 1e-6 * a


def test_phibar_log_tail(phi1):
    """Phibar ~ (5 * 3^{1/4} ln r + b)/r: the weight r^{1-σ} stays bounded."""
    r = np.array([1e6, 1e9, 1e12])
    v = phi1.phibar(r)[0] * r
    slope = np.diff(v) / np.diff(np.log(r))
    assert np.allclose(slope, 5 * C3, rtol=1e-6)
    big = np.geomspace(1, 1e13, 300)
    assert phi1.tail_weighted_sup(big, 1 - P.SIGMA) < 10


def test_eigenpair(eigenpair):
    e = eigenpair
    assert e.lambda0 < 0
    assert abs(e.lambda0 - e.lambda_matrix) / abs(e.lambda0) < 1e-4
    assert e.lambda_second > 0
    assert np.all(e.Z > 0)
    slope = P.decay_slope(e)
    assert slope == pytest.approx(-np.sqrt(-e.lambda0), rel=0.02)
    norm = 4 * np.pi * np.trapezoid((e.r * e.Z) ** 2, e.r)
    assert norm == pytest.approx(1.0, rel=1e-3)


def test_eigenvalue_grid_refinement():
    a = P.matrix_eigenvalue(40.0, 4000)[0]
    b = P.matrix_eigenvalue(40.0, 8001)[0]
    assert abs(a - b) < 1e-4 * abs(a)


def test_eigen_requires_large_ball():
    with pytest.raises(P.ProfileError):
        P.eigen_negative(r_max=20.0)


def test_quadratic_form_values(eigenpair):
    e = eigenpair
    grid = RadialGrid(e.r)
    Z = RadialField(grid, e.Z, slope=e.dZ)
    assert P.quadratic_form(Z, Z) == pytest.approx(e.lambda0, rel=0.01)

    g = RadialGrid.stretched(1e4, 20000, 1e-3)
    z, z1, _ = P.z0_eval(g.r)
    Z0 = RadialField(g, z, slope=z1)
    q = P.quadratic_form(Z0, Z0)
    # integration by parts leaves only the boundary flux 4π R^2 Z0 Z0'(R)
    boundary = 4 * np.pi * g.r_max ** 2 * z[-1] * z1[-1]
    assert abs(q - boundary) < 1e-6
    assert abs(q) < 1e-3


def test_quadratic_form_bump():
    g = RadialGrid.uniform(1e-3, 15, 6001)
    r = g.r
    x = np.clip((r - 10) / 2, 0, 1)
    phi = np.where((r > 10) & (r < 12), np.sin(np.pi * x) ** 2, 0.0)
    f = RadialField(g, phi)
    grad = 4 * np.pi * np.trapezoid(np.gradient(phi, r) ** 2 * r * r, r)
    assert P.quadratic_form(f, f) == pytest.approx(grad, rel=2e-3)


def test_quadratic_form_symmetric_bilinear():
    g = RadialGrid.uniform(1e-3, 20, 801)
    rng = np.random.default_rng(3)
    a = RadialField(g, np.exp(-g.r) * rng.normal(size=g.n))
    b = RadialField(g, np.exp(-g.r / 2) * np.cos(g.r))
    c = RadialField(g, np.exp(-g.r ** 2))
    qab, qba = P.quadratic_form(a, b), P.quadratic_form(b, a)
    na = np.sqrt(abs(P.quadratic_form(a, a)))
    nb = np.sqrt(abs(P.quadratic_form(b, b)))
    assert abs(qab - qba) < 1e-12 * na * nb
    lin = RadialField(g, 2 * a.values - 3 * c.values)
    assert P.quadratic_form(lin, b) == pytest.approx(2 * qab - 3 * P.quadratic_form(c, b), rel=1e-12)


def test_quadratic_form_rejects_mismatched_grids():
    a = RadialField(RadialGrid.uniform(0.1, 1, 5), np.ones(5))
    b = RadialField(RadialGrid.uniform(0.1, 2, 5), np.ones(5))
    with pytest.raises(GridError):
        P.quadratic_form(a, b)


def test_coercivity(eigenpair):
    res = [P.coercivity_constant(R, pair=eigenpair) for R in (10, 20, 40)]
    betas = np.array([c.beta for c in res])
    assert np.all(betas > 0)
    assert np.max(np.abs(betas / betas.mean() - 1)) < 0.2
    # without orthogonality the negative direction shows up, close to λ0
    for c in res:
        assert c.min_quotient_unconstrained < 0
        assert c.min_quotient_unconstrained == pytest.approx(eigenpair.lambda0, rel=1e-3)
        assert c.hardy_constant > 0

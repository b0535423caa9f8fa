"""Stationary profiles of the critical heat flow in R^3.

The bubble w(r) = 3^{1/4}(1+r^2)^{-1/2} solves Δw + w^5 = 0.  Around it the
linearised operator L0 = Δ + 5w^4 has the scaling kernel Z0, a second kernel
solution Zt (singular at the origin), a corrector Phi1 with L0 Phi1 = Z0,
and exactly one negative eigenvalue.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .grid import GridError, RadialField, RadialGrid

C3 = 3.0 ** 0.25
SIGMA = 0.55
# r^2 (Z0 Zt' - Z0' Zt), constant for two solutions of L0 phi = 0
WRONSKIAN_Z = C3 / 2.0

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class ProfileError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# closed forms


def bubble_eval(r, mu=1.0):
    """w_mu(r) = mu^{-1/2} w(r/mu) with its first two radial derivatives."""
    if not np.all(np.asarray(mu) > 0):
        raise ValueError("bubble scale mu must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    x = r / mu
    q = 1.0 / (1.0 + x * x)
    w = C3 * np.sqrt(q)
    w1 = -C3 * x * q ** 1.5
    w2 = C3 * (2 * x * x - 1) * q ** 2.5
    s = mu ** -0.5
    return s * w, s / mu * w1, s / mu ** 2 * w2


def potential(r):
    """5 w^4 = 15/(1+r^2)^2."""
    return 15.0 / (1.0 + np.asarray(r, dtype=float) ** 2) ** 2


def yamabe_residual(r, scale=1.0) -> float:
    """max |u'' + 2u'/r + u^5| for u = scale * w, closed-form derivatives."""
    if isinstance(r, RadialGrid):
        r = r.r
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 0):
        raise GridError("residual nodes must lie in (0, r_max]")
    w, w1, w2 = bubble_eval(r)
    u, u1, u2 = scale * w, scale * w1, scale * w2
    return float(np.max(np.abs(u2 + 2 * u1 / r + u ** 5)))


def z0_eval(r):
    """Scaling kernel Z0 = -(w/2 + r w') and its two derivatives."""
    r = np.asarray(r, dtype=float)
    q = 1.0 / (1.0 + r * r)
    z = 0.5 * C3 * (r * r - 1) * q ** 1.5
    z1 = 0.5 * C3 * r * (5 - r * r) * q ** 2.5
    z2 = 0.5 * C3 * (5 - 23 * r * r + 2 * r ** 4) * q ** 3.5
    return z, z1, z2


def ztilde_eval(r):
    """Second kernel solution Zt = (r^4 - 6r^2 + 1) / (r (1+r^2)^{3/2}).

    Zt ~ 1/r at the origin and Zt -> 1 at infinity.  Written in terms of
    q = 1/(1+r^2) so that large radii do not overflow.
    """
    r = np.asarray(r, dtype=float)
    q = 1.0 / (1.0 + r * r)
    sq = np.sqrt(q)
    # (1+r^2)^2 - 8 r^2 over r (1+r^2)^{3/2}
    z = 1.0 / (r * sq) - 8.0 * r * q * sq
    z1 = -sq / (r * r) + 8.0 * (2.0 * r * r - 1.0) * q * q * sq
    z2 = q * sq / r + 2.0 * sq / r ** 3 + 8.0 * r * (9.0 - 6.0 * r * r) * q ** 3 * sq
    return z, z1, z2


# --------------------------------------------------------------------------
# cell-wise Gauss-Legendre cumulative quadrature


def _cumulative_gl(f, nodes):
    """∫_{nodes[0]}^{nodes[i]} f for every i, 8-point Gauss-Legendre per cell."""
    a, b = nodes[:-1], nodes[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _GL_X[None, :]
    cell = half * (f(x) @ _GL_W)
    return np.concatenate([[0.0], np.cumsum(cell)])


def _pi0_source(r, pi0):
    """Pi0 = (Z0 - 3^{1/4}/(2r)) - 5 w^4 (3^{1/4} r/4 + pi0), cancellation-free."""
    r = np.asarray(r, dtype=float)
    q = 1.0 / (1.0 + r * r)
    # Z0 - c/(2r) = (c/2) [ (r^2-1) r q^{3/2} - 1 ] / r
    # (r^2-1) r q^{3/2} - 1 = -[(1+r^2)^{3/2} - r^3 + r] q^{3/2}
    s = np.sqrt(1.0 + r * r)
    # (1+r^2)^{3/2} - r^3 = (3r^4 + 3r^2 + 1)/((1+r^2)^{3/2} + r^3)... use the
    # identity a^3 - b^3 = (a-b)(a^2+ab+b^2) with a - b = 1/(s + r)
    a_minus_b = 1.0 / (s + r)
    cube_gap = a_minus_b * (s * s + s * r + r * r)
    head = -0.5 * C3 * (cube_gap + r) * q ** 1.5 / r
    return head - potential(r) * (0.25 * C3 * r + pi0)


def pi0_value(method: str = "quad") -> float:
    """Constant term of Phi1 at infinity (the solvability value).

    It makes Pi0 orthogonal to Z0, ∫ Pi0 Z0 s^2 ds = 0.  Two independent
    quadratures are available: adaptive QUADPACK on [0,1] ∪ [1,∞) and a
    fixed composite Gauss-Legendre rule in the compactified variable
    x = r/(1+r).
    """
    def num_density(r):
        return _pi0_source(r, 0.0) * z0_eval(r)[0] * r * r

    def den_density(r):
        return potential(r) * z0_eval(r)[0] * r * r

    if method == "quad":
        num = den = 0.0
        for lo, hi in ((0.0, 1.0), (1.0, np.inf)):
            a, ea = integrate.quad(num_density, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=400)
            b, eb = integrate.quad(den_density, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=400)
            if max(ea, eb) > 1e-10:
                raise ProfileError(f"pi0 quadrature did not converge on [{lo},{hi}] (err {max(ea, eb):.2e})")
            num += a
            den += b
    elif method == "mapped":
        x = np.linspace(0.0, 1.0, 4001)

        def mapped(f):
            def g(x):
                r = x / (1.0 - x)
                return f(r) / (1.0 - x) ** 2
            return g

        with np.errstate(divide="ignore", invalid="ignore"):
            num = _cumulative_gl(lambda x: np.nan_to_num(mapped(num_density)(x)), x)[-1]
            den = _cumulative_gl(lambda x: np.nan_to_num(mapped(den_density)(x)), x)[-1]
    else:
        raise ValueError(f"unknown quadrature method {method!r}")
    # Pi0 = base - pi0 * 5 w^4, orthogonality fixes pi0
    return num / den


# --------------------------------------------------------------------------
# corrector Phi1


@dataclass(frozen=True)
class CorrectorProfile:
    """Phi1 = 3^{1/4} r/4 + pi0 + Phibar tabulated through its two integrals.

    Phibar = [Zt Ia - Z0 Ib]/W with Ia = ∫_0^r Pi0 Z0 s^2, Ib = ∫_0^r Pi0 Zt s^2.
    Ia and Ib are stored on a geometric table and interpolated by cubic
    Hermite splines in ln r using their exact derivatives; beyond the table
    the asymptotic tails are used.
    """

    r: np.ndarray
    ia: np.ndarray
    ib: np.ndarray
    pi0: float
    slope: float = C3 / 4.0

    def __post_init__(self):
        lr = np.log(self.r)
        dia = _pi0_source(self.r, self.pi0) * z0_eval(self.r)[0] * self.r ** 3
        dib = _pi0_source(self.r, self.pi0) * ztilde_eval(self.r)[0] * self.r ** 3
        object.__setattr__(self, "_sa", CubicHermiteSpline(lr, self.ia, dia))
        object.__setattr__(self, "_sb", CubicHermiteSpline(lr, self.ib, dib))
        # Phibar ~ (5 c ln r + b)/r at infinity; fit b from the table end
        rend = self.r[-1]
        pend = self._bar(np.array([rend]))[0][0]
        object.__setattr__(self, "tail_b", float(pend * rend - 5 * C3 * np.log(rend)))

    def _integrals(self, r):
        r = np.asarray(r, dtype=float)
        lo, hi = self.r[0], self.r[-1]
        lr = np.log(np.clip(r, lo, hi))
        return self._sa(lr), self._sb(lr)

    def _bar(self, r):
        ia, ib = self._integrals(r)
        z, z1, _ = z0_eval(r)
        zt, zt1, _ = ztilde_eval(r)
        val = (zt * ia - z * ib) / WRONSKIAN_Z
        der = (zt1 * ia - z1 * ib) / WRONSKIAN_Z
        return val, der

    def phibar(self, r):
        """Phibar and its derivative."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        val, der = np.empty_like(r), np.empty_like(r)
        inside = (r <= self.r[-1]) & (r >= self.r[0])
        if np.any(inside):
            val[inside], der[inside] = self._bar(r[inside])
        # regular series at the origin: Phi1 = pi0 + a r^2 with 6a = Z0(0) - 15 pi0
        near = r < self.r[0]
        if np.any(near):
            rn = r[near]
            a = (-0.5 * C3 - 15.0 * self.pi0) / 6.0
            val[near] = a * rn * rn - self.slope * rn
            der[near] = 2 * a * rn - self.slope
        out = r > self.r[-1]
        if np.any(out):
            ro = r[out]
            num = 5 * C3 * np.log(ro) + self.tail_b
            val[out] = num / ro
            der[out] = (5 * C3 - num) / ro ** 2
        return val, der

    def __call__(self, r):
        """Phi1 and Phi1'."""
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        val, der = self.phibar(r)
        val = val + self.slope * np.atleast_1d(r) + self.pi0
        der = der + self.slope
        if scalar:
            return float(val[0]), float(der[0])
        return val, der

    def second_derivative(self, r):
        """Phi1'' from the equation: Z0 - 2 Phi1'/r - 5 w^4 Phi1.

        At r = 0, Phi1'/r -> Phi1''(0), so Phi1''(0) = (Z0 - 5 w^4 Phi1)/3 there.
        """
        r = np.asarray(r, dtype=float)
        val, der = self(r)
        rest = z0_eval(r)[0] - potential(r) * val
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r == 0, rest / 3, rest - 2 * der / r)

    def residual(self, r) -> float:
        """max |L0 Phi1 - Z0| with Phi1'' taken from the tabulated integrals.

        The second derivative here is assembled from the variation-of-
        parameters formula (Zt'' Ia - Z0'' Ib + Pi0 r^2 W / r^2) / W, so a
        wrong Wronskian or source shows up directly.
        """
        r = np.asarray(r, dtype=float)
        ia, ib = self._integrals(r)
        z, z1, z2 = z0_eval(r)
        zt, zt1, zt2 = ztilde_eval(r)
        pi = _pi0_source(r, self.pi0)
        bar = (zt * ia - z * ib) / WRONSKIAN_Z
        bar1 = (zt1 * ia - z1 * ib) / WRONSKIAN_Z
        bar2 = (zt2 * ia - z2 * ib + r * r * pi * (zt1 * z - z1 * zt)) / WRONSKIAN_Z
        phi = self.slope * r + self.pi0 + bar
        phi1 = self.slope + bar1
        lhs = bar2 + 2 * phi1 / r + potential(r) * phi
        return float(np.max(np.abs(lhs - z)))

    def tail_weighted_sup(self, r, power: float) -> float:
        r = np.asarray(r, dtype=float)
        return float(np.max(r ** power * np.abs(self.phibar(r)[0])))


def solve_phi1(grid: RadialGrid | None = None, r_min=1e-6, r_max=1e14, per_decade=200,
               pi0_method="quad") -> CorrectorProfile:
    """Build Phi1 on a geometric table covering [r_min, r_max].

    If a grid is passed its extent sets the table range (widened to
    include [1e-6, 1e14] so that scaled arguments r/mu stay in range).
    """
    if grid is not None:
        r_min = min(r_min, grid.r[0])
        r_max = max(r_max, grid.r_max)
    pi0 = pi0_value(pi0_method)
    n = int(np.ceil(per_decade * np.log10(r_max / r_min))) + 1
    r = np.geomspace(r_min, r_max, n)

    def fa(s):
        return _pi0_source(s, pi0) * z0_eval(s)[0] * s * s

    def fb(s):
        return _pi0_source(s, pi0) * ztilde_eval(s)[0] * s * s

    # near zero: Pi0 Z0 s^2 ~ (c^2/4) s, Pi0 Zt s^2 ~ -c/2
    ia0 = integrate.quad(fa, 0.0, r_min, epsabs=1e-300)[0]
    ib0 = integrate.quad(fb, 0.0, r_min, epsabs=1e-300)[0]
    ib = ib0 + _cumulative_gl(fb, r)
    # Ia -> 0 at infinity (orthogonality): integrate from the far end to avoid
    # cancellation; ∫_{r_max}^∞ Pi0 Z0 s^2 = -5c^2/(2 r_max) to leading order
    tail_end = 2.5 * C3 * C3 / r_max
    back = _cumulative_gl(fa, r[::-1])[::-1]  # = ∫_{r_max}^{r_i} fa = -∫_{r_i}^{r_max} fa
    ia = back + tail_end
    # small-r consistency check between the two routes
    forward = ia0 + _cumulative_gl(fa, r)
    gap = np.max(np.abs(forward[r < 10] - ia[r < 10]))
    if gap > 1e-8:
        raise ProfileError(f"Ia forward/backward quadratures disagree by {gap:.2e}")
    # below r = 1 Ia multiplies the singular partner of Z0, so the forward
    # integral (exactly zero at the origin) keeps Phi1' regular there
    ia = np.where(r < 1.0, forward, ia)
    return CorrectorProfile(r=r, ia=ia, ib=ib, pi0=pi0)


def shoot_phi1(pi0: float, r_end: float = 200.0, rtol=1e-12):
    """Regular solution of L0 Phi = Z0 with Phi(0) = pi0, integrated outward.

    Used as an independent cross-check of the quadrature construction; the
    result is a dense ``solve_ivp`` solution in the variable r.
    """
    # series at the origin: Phi = pi0 + a r^2, 6a + 15 pi0 = Z0(0) = -c/2
    a = (-0.5 * C3 - 15 * pi0) / 6.0
    r0 = 1e-4

    def rhs(r, y):
        return [y[1], z0_eval(r)[0] - 2 * y[1] / r - potential(r) * y[0]]

    sol = integrate.solve_ivp(rhs, (r0, r_end), [pi0 + a * r0 ** 2, 2 * a * r0],
                              method="DOP853", rtol=rtol, atol=1e-14, dense_output=True)
    if not sol.success:
        raise ProfileError(sol.message)
    return sol.sol


# --------------------------------------------------------------------------
# negative eigenpair


@dataclass(frozen=True)
class EigenPair:
    lambda0: float
    r: np.ndarray
    Z: np.ndarray
    dZ: np.ndarray
    lambda_matrix: float
    lambda_second: float

    def __call__(self, r):
        return np.interp(r, self.r, self.Z)


def _matrix_eigs(r_max: float, n: int):
    """Two lowest eigenvalues of -v'' - 5w^4 v on (0, r_max), v(0)=v(r_max)=0."""
    h = r_max / (n + 1)
    x = h * np.arange(1, n + 1)
    d = 2.0 / h ** 2 - potential(x)
    e = -np.ones(n - 1) / h ** 2
    vals = linalg.eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, 1))
    return vals


def matrix_eigenvalue(r_max: float = 40.0, n: int = 16000):
    """Richardson-extrapolated lowest two eigenvalues (grid n and 2n+1)."""
    coarse = _matrix_eigs(r_max, n)
    fine = _matrix_eigs(r_max, 2 * n + 1)
    return (4 * fine - coarse) / 3.0


def _shoot_mismatch(lam, r_match, r_max, want_solution=False):
    k = np.sqrt(-lam)
    # v = r phi; outward from series phi = 1 - (lam+15) r^2/6
    r0 = 1e-3
    a = -(lam + 15.0) / 6.0

    def rhs(r, y):
        return [y[1], -(lam + potential(r)) * y[0]]

    v0 = [r0 * (1 + a * r0 * r0), 1 + 3 * a * r0 * r0]
    out = integrate.solve_ivp(rhs, (r0, r_match), v0, method="DOP853",
                              rtol=1e-12, atol=1e-14, dense_output=want_solution)
    # inward from the decaying branch v = exp(-k (r - r_max))
    inn = integrate.solve_ivp(rhs, (r_max, r_match), [1.0, -k], method="DOP853",
                              rtol=1e-12, atol=1e-14, dense_output=want_solution)
    vo, vo1 = out.y[:, -1]
    vi, vi1 = inn.y[:, -1]
    wr = (vo * vi1 - vo1 * vi) / np.hypot(vo, vo1) / np.hypot(vi, vi1)
    if want_solution:
        return wr, out, inn
    return wr


def eigen_negative(grid: RadialGrid | None = None, r_max: float = 40.0, r_match: float = 2.0,
                   n_matrix: int = 16000, tol: float = 1e-4) -> EigenPair:
    """Negative eigenpair of L0 by shooting, cross-checked by a matrix method."""
    if grid is not None:
        r_max = grid.r_max
    if r_max < 30:
        raise ProfileError("eigenproblem needs a computational radius of at least 30")
    mat = matrix_eigenvalue(r_max, n_matrix)
    lam_m, lam_2 = float(mat[0]), float(mat[1])
    if lam_m >= 0:
        raise ProfileError("matrix method found no negative eigenvalue")
    lo, hi = lam_m * 1.05, lam_m * 0.95
    lam = brentq(_shoot_mismatch, lo, hi, args=(r_match, r_max), xtol=1e-15, rtol=1e-14)
    if abs(lam - lam_m) > tol * abs(lam):
        raise ProfileError(f"shooting {lam} and matrix {lam_m} eigenvalues disagree")
    # assemble the eigenfunction from the two shooting branches
    _, out, inn = _shoot_mismatch(lam, r_match, r_max, want_solution=True)
    scale = out.y[0, -1] / inn.y[0, -1]
    if grid is None:
        r = np.concatenate([np.geomspace(1e-3, r_match, 400, endpoint=False),
                            np.linspace(r_match, r_max, 2000)])
    else:
        r = grid.r
    v = np.where(r < r_match, out.sol(np.maximum(r, 1e-3))[0], scale * inn.sol(np.maximum(r, r_match))[0])
    v1 = np.where(r < r_match, out.sol(np.maximum(r, 1e-3))[1], scale * inn.sol(np.maximum(r, r_match))[1])
    Z = v / r
    dZ = (v1 - Z) / r
    norm = np.sqrt(4 * np.pi * integrate.simpson(v * v, x=r))
    sign = 1.0 if Z[0] > 0 else -1.0
    Z, dZ = sign * Z / norm, sign * dZ / norm
    if np.any(Z <= 0):
        raise ProfileError("eigenfunction changes sign")
    return EigenPair(lambda0=float(lam), r=np.asarray(r), Z=Z, dZ=dZ,
                     lambda_matrix=lam_m, lambda_second=lam_2)


def decay_slope(pair: EigenPair, lo=15.0, hi=30.0) -> float:
    """Least-squares slope of log(r Z) on [lo, hi]."""
    m = (pair.r >= lo) & (pair.r <= hi)
    return float(np.polyfit(pair.r[m], np.log(pair.r[m] * pair.Z[m]), 1)[0])


# --------------------------------------------------------------------------
# quadratic form and coercivity


def quadratic_form(phi: RadialField, psi: RadialField) -> float:
    """Q(phi, psi) = 4π ∫ (phi' psi' - 5 w^4 phi psi) r^2 dr by Simpson's rule."""
    if phi.grid is not psi.grid and not np.array_equal(phi.grid.r, psi.grid.r):
        raise GridError("quadratic form needs both fields on the same grid")
    r = phi.grid.r
    dens = (phi.derivative() * psi.derivative() - potential(r) * phi.values * psi.values) * r * r
    return float(4 * np.pi * integrate.simpson(dens, x=r))


def _p1_matrices(x, weight_fn, pot_fn):
    """P1 finite-element stiffness/mass/potential matrices on interior nodes of x.

    Integrals are in the half-line variable with v(x[0]) = v(x[-1]) = 0;
    element integrals of the potential use 3-point Gauss rules.
    """
    n = x.size
    h = np.diff(x)
    K = np.zeros((n, n))
    Mw = np.zeros((n, n))
    P = np.zeros((n, n))
    gx, gw = np.polynomial.legendre.leggauss(3)
    for e in range(n - 1):
        a, b = x[e], x[e + 1]
        pts = 0.5 * (a + b) + 0.5 * (b - a) * gx
        wts = 0.5 * (b - a) * gw
        phi = np.vstack([(b - pts) / (b - a), (pts - a) / (b - a)])
        ke = np.array([[1, -1], [-1, 1]]) / h[e]
        me = (phi * wts * weight_fn(pts)) @ phi.T
        pe = (phi * wts * pot_fn(pts)) @ phi.T
        idx = [e, e + 1]
        K[np.ix_(idx, idx)] += ke
        Mw[np.ix_(idx, idx)] += me
        P[np.ix_(idx, idx)] += pe
    inner = slice(1, n - 1)
    return K[inner, inner], Mw[inner, inner], P[inner, inner]


@dataclass(frozen=True)
class CoercivityResult:
    R: float
    beta: float
    min_quotient: float
    min_quotient_unconstrained: float
    hardy_constant: float


def _ball_nodes(R2, n):
    # fine near the core, graded outward
    return R2 * np.sinh(3.0 * np.linspace(0, 1, n)) / np.sinh(3.0)


def coercivity_constant(R: float, n: int = 700, pair: EigenPair | None = None) -> CoercivityResult:
    """R^2 times the least Rayleigh quotient of Q on H0^1(B_2R) ⊥ Z.

    Works with v = r phi so that Q = 4π ∫ (v'^2 - 5w^4 v^2) dr and
    ∫ phi^2 = 4π ∫ v^2 dr.  Orthogonality to Z is imposed by restricting to
    the null space of the discrete constraint.  Also returns the ℓ = 2
    Hardy-type constant min Q_2(v)/∫ v^2/r^2.
    """
    if pair is None:
        pair = eigen_negative()
    x = _ball_nodes(2.0 * R, n)
    K, M, P = _p1_matrices(x, lambda s: np.ones_like(s), potential)
    A = K - P
    full = linalg.eigh(A, M, eigvals_only=True, subset_by_index=(0, 0))[0]
    xi = x[1:-1]
    u = xi * pair(xi)
    c = M @ u
    N = linalg.null_space(c[None, :])
    low = linalg.eigh(N.T @ A @ N, N.T @ M @ N, eigvals_only=True, subset_by_index=(0, 0))[0]
    if low <= 0:
        raise ProfileError(f"Q is not positive on the complement of Z (min quotient {low:.3e})")
    # ℓ = 2: Q_2 = ∫ v'^2 + 6 v^2/r^2 - 5 w^4 v^2, against ∫ v^2 / r^2
    K2, M2, P2 = _p1_matrices(x, lambda s: 1.0 / s ** 2, lambda s: potential(s) - 6.0 / s ** 2)
    hardy = linalg.eigh(K2 - P2, M2, eigvals_only=True, subset_by_index=(0, 0))[0]
    return CoercivityResult(R=R, beta=float(R * R * low), min_quotient=float(low),
                            min_quotient_unconstrained=float(full), hardy_constant=float(hardy))

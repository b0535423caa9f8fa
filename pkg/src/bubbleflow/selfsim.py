"""Self-similar solutions of the heat equation in the variable s = r / sqrt(t).

The radial operator L_nu y = y'' + (2/s + s/2) y' + nu y has a solution y2
regular at the origin with algebraic decay s^{-2nu}, and a solution y1 with a
1/s singularity at the origin and Gaussian decay.  From these we build the
outer profiles for the three decay regimes of the initial datum, and the
barrier profile used in the weighted norms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as gamma_fn

import numpy as np
from scipy import integrate, linalg, special
from scipy.interpolate import BPoly, CubicHermiteSpline, CubicSpline

EULER_GAMMA = float(np.euler_gamma)
SQRT_PI = float(np.sqrt(np.pi))

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class SelfSimilarError(RuntimeError):
    pass


def _cumulative_gl(f, nodes):
    a, b = nodes[:-1], nodes[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _GL_X[None, :]
    return np.concatenate([[0.0], np.cumsum(half * (f(x) @ _GL_W))])


# --------------------------------------------------------------------------
# L_nu basis


def _series_coefficients(nu, n_terms=80):
    """Even power-series coefficients of the solution regular at s = 0, a_0 = 1."""
    a = np.zeros(n_terms)
    a[0] = 1.0
    for j in range(n_terms - 1):
        k = 2 * j
        a[j + 1] = -(k / 2 + nu) * a[j] / ((k + 2) * (k + 3))
    return a


def asymptotic_coefficients(nu, n_terms=6):
    """s^{2nu} y2 = sum_j b_j s^{-2j} at infinity (odd powers are absent)."""
    b = np.zeros(n_terms)
    b[0] = 1.0
    for j in range(1, n_terms):
        m = -2 * nu - 2 * (j - 1)
        b[j] = b[j - 1] * m * (m + 1) / j
    return b


@dataclass(frozen=True)
class OdeBasis:
    """Tabulated y1, y2 for one nu, with constants and callables.

    ``c2 = y2(0)``; ``c1`` is the Gaussian-tail amplitude of y1, i.e.
    y1 ~ c1 e^{-s^2/4} s^{2nu-3}; ``moment`` is ∫ s y1 ds.
    """

    nu: float
    s: np.ndarray
    y1: np.ndarray
    dy1: np.ndarray
    y2: np.ndarray
    dy2: np.ndarray
    c1: float
    c2: float
    moment: float
    fprime0: float
    fsecond0: float
    _y2fn: object = field(repr=False, compare=False, default=None)
    _ifn: object = field(repr=False, compare=False, default=None)

    def eval_y2(self, s):
        """y2 and y2' at arbitrary s > 0."""
        return self._y2fn(np.asarray(s, dtype=float))

    def eval_y1(self, s):
        """y1 and y1' at arbitrary s > 0, via y1 = c2 y2 ∫_s^∞ e^{-z^2/4}/(y2 z)^2 dz."""
        s = np.asarray(s, dtype=float)
        y2, d2 = self.eval_y2(s)
        ii = self._ifn(s)
        y1 = self.c2 * y2 * ii
        dy1 = self.c2 * (d2 * ii - np.exp(-s * s / 4) / (y2 * s * s))
        return y1, dy1

    def residuals(self, s=None):
        """max relative ODE residual of y1 and y2 over the table.

        Written for L = ln y: L'' + L'^2 + (2/s + s/2) L' + nu = 0, with L'
        exact at the nodes and L'' from a cubic spline of L' in ln s.
        """
        s = self.s if s is None else np.asarray(s, dtype=float)
        out = []
        for y, dy in (self.eval_y1(s), self.eval_y2(s)):
            lp = dy / y
            lpp = CubicSpline(np.log(s), lp)(np.log(s), 1) / s
            drift = (2 / s + s / 2) * lp
            res = lpp + lp * lp + drift + self.nu
            scale = np.abs(lpp) + lp * lp + np.abs(drift) + self.nu
            out.append(float(np.max(np.abs(res) / scale)))
        return tuple(out)

    def wronskian_constant(self, lo=0.5, hi=5.0):
        """s^2 e^{s^2/4} (y1 y2' - y1' y2) on [lo, hi], derivatives by splines in ln s."""
        m = (self.s >= lo) & (self.s <= hi)
        ls = np.log(self.s)
        d1 = CubicSpline(ls, self.y1)(ls, 1) / self.s
        d2 = CubicSpline(ls, self.y2)(ls, 1) / self.s
        w = self.y1 * d2 - d1 * self.y2
        return (self.s ** 2 * np.exp(self.s ** 2 / 4) * w)[m]


def lnu_basis(nu: float, s_max: float = 20.0, n: int = 2000, s_min: float = 1e-4,
              _allow_any_nu: bool = False) -> OdeBasis:
    """Build y1, y2 for L_nu.

    y2 is integrated outward from its convergent series at s = 1 (outward is
    the stable direction, since the other solution decays like e^{-s^2/4})
    and then scaled so that s^{2nu} y2 -> 1, using the asymptotic series at
    s_max.  y1 follows from the reduction-of-order quadrature, normalised so
    that s y1 -> 1 at the origin.
    """
    if not _allow_any_nu and not 0.5 < nu < 1.0:
        raise SelfSimilarError(f"nu = {nu} outside (1/2, 1)")
    coef = _series_coefficients(nu)
    s_join = 1.0

    def series(s):
        x = s * s
        val = np.polynomial.polynomial.polyval(x, coef)
        der = 2 * s * np.polynomial.polynomial.polyval(x, coef[1:] * np.arange(1, coef.size))
        return val, der

    y0, d0 = series(s_join)

    def rhs(s, y):
        return [y[1], -(2 / s + s / 2) * y[1] - nu * y[0]]

    sol = integrate.solve_ivp(rhs, (s_join, s_max), [y0, d0], method="DOP853",
                              rtol=1e-13, atol=1e-300, dense_output=True)
    if not sol.success:
        raise SelfSimilarError(sol.message)
    bcoef = asymptotic_coefficients(nu)

    def asym(s):
        x = 1.0 / (s * s)
        ser = np.polynomial.polynomial.polyval(x, bcoef)
        dser = -2 * x / s * np.polynomial.polynomial.polyval(x, bcoef[1:] * np.arange(1, bcoef.size))
        val = s ** (-2 * nu) * ser
        der = -2 * nu * s ** (-2 * nu - 1) * ser + s ** (-2 * nu) * dser
        return val, der

    y_end = sol.y[0, -1]
    scale = asym(s_max)[0] / y_end
    c2 = scale  # y2(0) = scale * series(0) = scale

    def y2fn(s):
        s = np.asarray(s, dtype=float)
        val = np.empty_like(s)
        der = np.empty_like(s)
        lo = s <= s_join
        mid = (s > s_join) & (s <= s_max)
        hi = s > s_max
        if np.any(lo):
            v, d = series(s[lo])
            val[lo], der[lo] = scale * v, scale * d
        if np.any(mid):
            v = sol.sol(s[mid])
            val[mid], der[mid] = scale * v[0], scale * v[1]
        if np.any(hi):
            val[hi], der[hi] = asym(s[hi])
        return val, der

    if np.any(y2fn(np.geomspace(s_min, 4 * s_max, 400))[0] <= 0):
        raise SelfSimilarError("y2 is not positive")

    # I(s) = ∫_s^∞ e^{-z^2/4} / (y2 z)^2 dz, integrated in ln z from the far end
    s_tab = np.geomspace(s_min, s_max, n)
    ls = np.log(s_tab)

    def integrand_log(lz):
        z = np.exp(lz)
        return np.exp(-z * z / 4) / (y2fn(z)[0] ** 2 * z)

    tail = integrate.quad(lambda z: np.exp(-z * z / 4) / (asym(z)[0] * z) ** 2, s_max, np.inf,
                          epsabs=0, epsrel=1e-13)[0]
    back = _cumulative_gl(integrand_log, ls[::-1])[::-1]  # ∫_{ln s_max}^{ln s}
    itab = tail - back
    # near 0 the integrand is 1/(c2 z)^2 + C0 + O(z^2) with C0 = (nu/3 - 1/4)/c2^2,
    # so I(s) = 1/(c2^2 s) + K - C0 s + O(s^3)
    C0 = (nu / 3.0 - 0.25) / c2 ** 2
    K = itab[0] - 1.0 / (c2 * c2 * s_min) + C0 * s_min
    # I spans many decades; interpolate ln I (smooth) with its exact first and
    # second derivatives, so that y1'' is as consistent as y1 itself
    q = integrand_log(ls)
    y2s, dy2s = y2fn(s_tab)
    dq = q * (-0.5 * s_tab ** 2 - 2 * s_tab * dy2s / y2s - 1)  # d q / d ln z
    dlnI = -q / itab
    d2lnI = -dq / itab - dlnI ** 2
    ispline = BPoly.from_derivatives(ls, np.column_stack([np.log(itab), dlnI, d2lnI]))

    def ifn(s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        inside = (s >= s_min) & (s <= s_max)
        out[inside] = np.exp(ispline(np.log(s[inside])))
        small = s < s_min
        if np.any(small):
            ss = s[small]
            out[small] = 1.0 / (c2 * c2 * ss) + K - C0 * ss
        big = s > s_max
        if np.any(big):
            # y1 = c1 e^{-s^2/4} s^{2nu-3} R(s) and I = y1 / (c2 y2)
            sb = s[big]
            y1b = c1 * np.exp(-sb * sb / 4) * sb ** (2 * nu - 3) * _y1_tail_series(nu, sb)
            out[big] = y1b / (c2 * asym(sb)[0])
        return out

    y2t, dy2t = y2fn(s_tab)
    y1t = c2 * y2t * itab
    dy1t = c2 * (dy2t * itab - np.exp(-s_tab ** 2 / 4) / (y2t * s_tab ** 2))
    if np.any(y1t <= 0):
        raise SelfSimilarError("y1 is not positive")
    c1 = float(y1t[-1] * np.exp(s_max ** 2 / 4) * s_max ** (3 - 2 * nu) / _y1_tail_series(nu, s_max))
    # f = s y1: moment ∫_0^∞ f ds (f ~ 1 below s_min), f'(0) = c2^2 K
    f_log = _cumulative_gl(lambda lz: np.exp(2 * lz) * c2 * y2fn(np.exp(lz))[0] * np.exp(ispline(lz)), ls)
    fprime0 = c2 * c2 * K
    moment = s_min * (1 + 0.5 * fprime0 * s_min) + f_log[-1]
    # tail beyond s_max is of order e^{-s_max^2/4}; include it anyway
    moment += integrate.quad(lambda z: z * c2 * asym(z)[0] * ifn(np.array([z]))[0], s_max, np.inf)[0]
    # f''(0) from a quadratic fit of (f - 1 - f'(0) s)/s^2 on small s
    ss = s_tab[(s_tab > 1e-3) & (s_tab < 2e-2)]
    fs = ss * c2 * y2fn(ss)[0] * ifn(ss)
    q = (fs - 1 - fprime0 * ss) / ss ** 2
    fsecond0 = 2 * np.polyval(np.polyfit(ss, q, 2), 0.0)
    return OdeBasis(nu=nu, s=s_tab, y1=y1t, dy1=dy1t, y2=y2t, dy2=dy2t, c1=c1, c2=float(c2),
                    moment=float(moment), fprime0=float(fprime0), fsecond0=float(fsecond0),
                    _y2fn=y2fn, _ifn=ifn)


def kummer_y1(nu, s):
    """y1 in closed form: Gamma(3/2-nu)/(2 sqrt(pi)) e^{-s^2/4} U(3/2-nu, 3/2, s^2/4)."""
    s = np.asarray(s, dtype=float)
    return gamma_fn(1.5 - nu) / (2 * SQRT_PI) * np.exp(-s * s / 4) * special.hyperu(1.5 - nu, 1.5, s * s / 4)


def kummer_y2(nu, s):
    """y2 in closed form: Gamma(3/2-nu)/(Gamma(3/2) 4^nu) M(nu, 3/2, -s^2/4)."""
    s = np.asarray(s, dtype=float)
    return gamma_fn(1.5 - nu) / (gamma_fn(1.5) * 4 ** nu) * special.hyp1f1(nu, 1.5, -s * s / 4)


# --------------------------------------------------------------------------
# heat self-similar functions for nu = 1


def g0_eval(s):
    """g0 = e^{-s^2/4}/s with two derivatives."""
    s = np.asarray(s, dtype=float)
    e = np.exp(-s * s / 4)
    g = e / s
    g1 = -e * (1 / (s * s) + 0.5)
    g2 = -(2 / s + s / 2) * g1 - g
    return g, g1, g2


def g1_eval(s):
    """g1 = s^{-1} e^{-s^2/4} ∫_0^s e^{z^2/4} dz = 2 D(s/2)/s, D = Dawson's integral."""
    s = np.asarray(s, dtype=float)
    D = special.dawsn(s / 2)
    dD = 1 - s * D  # D'(x) = 1 - 2 x D(x) at x = s/2
    g = 2 * D / s
    g1 = dD / s - 2 * D / (s * s)
    g2 = -(2 / s + s / 2) * g1 - g
    return g, g1, g2


# --------------------------------------------------------------------------
# outer profiles

REGIMES = ("gamma_lt2", "gamma_eq2", "gamma_gt2")


def regime_of(gamma: float) -> str:
    if gamma <= 1:
        raise SelfSimilarError("decay exponent must exceed 1")
    if gamma < 2:
        return "gamma_lt2"
    if gamma == 2:
        return "gamma_eq2"
    return "gamma_gt2"


@dataclass(frozen=True)
class OuterProfile:
    """Coefficients and profile functions for one regime.

    ``profile(s)`` returns (G, G', G'') for the time-independent factor, i.e.
    u_out = t^{-gamma/2} G(s) for gamma < 2 and t^{-1} d g0(s) for gamma > 2;
    for gamma = 2 ``profile`` returns h and ``g0`` carries the log-t part.
    """

    regime: str
    gamma: float
    A: float
    d: float
    k: float | None = None
    b: float | None = None
    omega: float | None = None
    dbar: float | None = None
    B: float | None = None
    basis: OdeBasis | None = field(default=None, repr=False)
    _j1: object = field(default=None, repr=False, compare=False)

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        if self.regime == "gamma_lt2":
            y1, dy1 = self.basis.eval_y1(s)
            y2, dy2 = self.basis.eval_y2(s)
            g = self.d * y1 + self.A * y2
            g1 = self.d * dy1 + self.A * dy2
            g2 = -(2 / s + s / 2) * g1 - self.basis.nu * g
            return g, g1, g2
        if self.regime == "gamma_gt2":
            g, g1, g2 = g0_eval(s)
            return self.d * g, self.d * g1, self.d * g2
        return self.h(s)

    def j0(self, s):
        """∫_0^s z g0 dz = sqrt(pi) erf(s/2)."""
        return SQRT_PI * special.erf(np.asarray(s, dtype=float) / 2)

    def j1(self, s):
        """∫_0^s z g1 dz (tabulated)."""
        return self._j1(np.asarray(s, dtype=float))

    def h(self, s):
        """h = g0 [d - kA J1] + g1 kA J0 with two derivatives (gamma = 2)."""
        s = np.asarray(s, dtype=float)
        kA = self.k * self.A
        a0, a1, a2 = g0_eval(s)
        b0, b1, b2 = g1_eval(s)
        P = self.d - kA * self.j1(s)
        Q = (self.b or 0.0) + kA * self.j0(s)
        h = a0 * P + b0 * Q
        h1 = a1 * P + b1 * Q
        h2 = kA * a0 - (2 / s + s / 2) * h1 - h
        return h, h1, h2

    @property
    def linear_coefficient(self):
        """c in G(s) = d/s + c s + ... at the origin (from the regime's formulas)."""
        if self.regime == "gamma_gt2":
            return -self.d / 4
        if self.regime == "gamma_eq2":
            return -(self.d - 2 * self.k * self.A) / 4
        # y2 is even, so only y1 = 1/s + f'(0) + (1 - 2 nu) s/4 + ... contributes
        return self.d * (1 - 2 * self.basis.nu) / 4


def _j1_table(s_max=200.0, n=4000):
    """J1(s) = ∫_0^s z g1(z) dz = 4 ∫_0^{s/2} D(x) dx, spline + log tail."""
    s = np.concatenate([[0.0], np.geomspace(1e-6, s_max, n)])
    integrand = lambda z: z * g1_eval(z)[0]
    vals = np.concatenate([[0.0], 0.5e-12 + _cumulative_gl(integrand, s[1:])])
    spline = CubicHermiteSpline(s, vals, np.concatenate([[0.0], integrand(s[1:])]))
    # large s: z g1 = 2 z D(z/2)/z ... ~ 2/z + 4/z^3 + 24/z^5
    end = vals[-1]

    def j1(x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(spline(np.minimum(x, s_max)), dtype=float)
        big = x > s_max
        if np.any(big):
            xb = x[big]
            out[big] = end + 2 * np.log(xb / s_max) - 2 * (xb ** -2 - s_max ** -2) - 6 * (xb ** -4 - s_max ** -4)
        return out
    return j1


def gamma2_constants(A: float, B: float = 0.0):
    """k, dbar, omega and d for gamma = 2.

    d solves dbar + 2 ∫_0^∞ s^{-1} (s h)' ds = B, where the integral equals
    -(d/2) sqrt(pi) + omega; hence d = (dbar + 2 omega - B)/sqrt(pi).
    """
    mom0 = integrate.quad(lambda z: np.exp(-z * z / 4), 0, np.inf, epsabs=1e-15)[0]
    k = 1.0 / (2.0 * mom0)
    kA = k * A
    # dbar = -4Ak ∫ s^{-1} ln s (s g0' + g0) ds = 2Ak ∫ ln s e^{-s^2/4} ds
    dbar = 2 * A * k * integrate.quad(lambda z: np.log(z) * np.exp(-z * z / 4), 0, np.inf,
                                      epsabs=1e-14, limit=200)[0]
    j1 = _j1_table()
    first = 0.5 * kA * integrate.quad(lambda z: np.exp(-z * z / 4) * j1(np.array([z]))[0], 0, np.inf,
                                      epsabs=1e-14, limit=200)[0]

    def second_density(z):
        # s^{-1} (s g1)' J0 with (s g1)' = 1 - s D(s/2)
        z = np.asarray(z, dtype=float)
        return (1 - z * special.dawsn(z / 2)) / z * SQRT_PI * special.erf(z / 2)

    sec = kA * (integrate.quad(second_density, 0, 30, epsabs=1e-14, limit=400)[0]
                + integrate.quad(second_density, 30, np.inf, epsabs=1e-14, limit=200)[0])
    omega = first + sec
    d = (dbar + 2 * omega - B) / mom0
    return dict(k=k, dbar=dbar, omega=omega, d=d, mom0=mom0, j1=j1)


def outer_profile(gamma: float, A: float, u0_moment: float | None = None, B: float = 0.0,
                  basis: OdeBasis | None = None) -> OuterProfile:
    """Dispatch on gamma and compute the matching coefficient d."""
    if A <= 0:
        raise SelfSimilarError("tail amplitude A must be positive")
    regime = regime_of(gamma)
    if regime == "gamma_lt2":
        nu = gamma / 2
        basis = basis if basis is not None and basis.nu == nu else lnu_basis(nu)
        d = 2 * A * basis.c2 / ((2 - gamma) * basis.moment)
        prof = OuterProfile(regime, gamma, A, d, basis=basis)
    elif regime == "gamma_eq2":
        c = gamma2_constants(A, B)
        prof = OuterProfile(regime, gamma, A, c["d"], k=c["k"], b=0.0, omega=c["omega"],
                            dbar=c["dbar"], B=B, _j1=c["j1"])
    else:
        if u0_moment is None:
            raise SelfSimilarError("gamma > 2 needs the first radial moment of the initial datum")
        mom0 = integrate.quad(lambda z: np.exp(-z * z / 4), 0, np.inf, epsabs=1e-15)[0]
        prof = OuterProfile(regime, gamma, A, u0_moment / mom0)
    if not prof.d > 0:
        raise SelfSimilarError(f"matching coefficient d = {prof.d:.6g} is not positive")
    return prof


@dataclass(frozen=True)
class Gamma2Report:
    identity_residual: float
    h_linear_measured: float
    h_linear_expected: float
    h_linear_alternative: float
    flux_log_coefficient: float
    flux_balance: float


def gamma2_identity_check(profile: OuterProfile, s_points=(0.1, 1.0, 5.0)) -> Gamma2Report:
    """Pointwise and integral identities of the gamma = 2 outer profile.

    flux_balance is dbar + 2 ∫ s^{-1}(s h)' ds - B evaluated by direct
    quadrature of the tabulated h, which should vanish.
    """
    if profile.regime != "gamma_eq2":
        raise SelfSimilarError("identity check only applies to gamma = 2")
    s = np.asarray(s_points, dtype=float)
    g, g1, _ = g0_eval(s)
    ident = float(np.max(np.abs(s * g1 + g + s * s / 2 * g)))
    s0 = 1e-3
    measured = float((profile.h(np.array([s0]))[0][0] - profile.d / s0) / s0)
    kA = profile.k * profile.A
    expected = -(profile.d - 2 * kA) / 4
    alternative = -(profile.d + 10 * kA) / 4
    log_coef = 4 * profile.A * profile.k * integrate.quad(
        lambda z: (z * g0_eval(z)[1] + g0_eval(z)[0]) / z, 0, np.inf, epsabs=1e-14)[0]

    def flux_density(z):
        h, h1, _ = profile.h(np.array([z]))
        return (z * h1[0] + h[0]) / z

    flux = 0.0
    for lo, hi in ((0, 1), (1, 10), (10, 100), (100, np.inf)):
        flux += integrate.quad(flux_density, lo, hi, epsabs=1e-13, limit=200)[0]
    balance = profile.dbar + 2 * flux - profile.B
    return Gamma2Report(ident, measured, expected, alternative, log_coef, float(balance))


# --------------------------------------------------------------------------
# barrier profile


def default_h0(s):
    """Model source with h ~ 1/s at 0 and h ~ 1/s^3 at infinity."""
    s = np.asarray(s, dtype=float)
    return 1.0 / (s * (1.0 + s * s))


@dataclass(frozen=True)
class BarrierProfile:
    beta: float
    s: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    h: object = field(repr=False, compare=False)
    method: str = "bvp"
    _fn: object = field(default=None, repr=False, compare=False)

    def __call__(self, s):
        return self._fn(np.asarray(s, dtype=float))

    def residual(self, s):
        """max |phi'' + (2/s + s/2) phi' + (beta-1) phi + h| with spline phi''."""
        s = np.asarray(s, dtype=float)
        phi, dphi = self(s)
        d2 = CubicSpline(np.log(s), dphi)(np.log(s), 1) / s
        return float(np.max(np.abs(d2 + (2 / s + s / 2) * dphi + (self.beta - 1) * phi + self.h(s))))

    def heat_defect(self, r, t):
        """∂_t psi - Δ psi for psi = t^{1-beta} phi(r/sqrt(t)) by the chain rule.

        phi'' comes from differentiating the tabulated phi', not from the ODE.
        """
        s = np.asarray(r / np.sqrt(t), dtype=float)
        phi, dphi = self(s)
        ls = np.log(self.s)
        d2 = CubicSpline(ls, self.dphi)(np.log(s), 1) / s
        psi_t = t ** (-self.beta) * ((1 - self.beta) * phi - 0.5 * s * dphi)
        lap = t ** (-self.beta) * (d2 + 2 * dphi / s)
        return psi_t - lap


def barrier_profile(beta: float, h=default_h0, s_max: float = 80.0, n: int = 4000,
                    method: str = "auto") -> BarrierProfile:
    """Solution of phi'' + (2/s + s/2) phi' + (beta - 1) phi + h = 0, bounded at 0, ~ s^{-3} at ∞.

    ``method="quadrature"`` uses variation of parameters with the L_nu basis
    (valid for 0 < beta - 1 < 1); ``method="bvp"`` solves the two-point
    problem by Richardson-extrapolated differences.  ``"auto"`` picks the
    quadrature route whenever the basis exists.
    """
    nu = beta - 1
    if nu >= 1.5:
        raise SelfSimilarError("beta - 1 >= 3/2: the s^{-3} tail is resonant or growing")
    if method == "auto":
        method = "quadrature" if 0 < nu < 1 else "bvp"
    s_min = 1e-4
    if method == "quadrature":
        if not 0 < nu < 1:
            raise SelfSimilarError("quadrature route needs 0 < beta - 1 < 1")
        s_max = min(s_max, 30.0)  # keeps e^{s^2/4} representable
        s, phi, dphi = _barrier_quadrature(nu, h, s_min, s_max, n)
    elif method == "bvp":
        s_max = min(s_max, 40.0)
        coarse = _barrier_fd(nu, h, s_min, s_max, 8 * n)
        fine = _barrier_fd(nu, h, s_min, s_max, 16 * n)
        s = coarse[0]
        phi = (4 * fine[1][::2] - coarse[1]) / 3
        dphi = (4 * fine[2][::2] - coarse[2]) / 3
    else:
        raise SelfSimilarError(f"unknown method {method!r}")
    if np.any(phi <= 0):
        raise SelfSimilarError("barrier profile is not positive")
    spline = CubicHermiteSpline(np.log(s), phi, dphi * s)
    dspline = CubicSpline(np.log(s), dphi)

    def fn(x):
        x = np.asarray(x, dtype=float)
        lx = np.log(np.clip(x, s_min, s_max))
        val = spline(lx)
        der = dspline(lx)
        big = x > s_max
        if np.any(big):
            val[big] = phi[-1] * (s_max / x[big]) ** 3
            der[big] = -3 * val[big] / x[big]
        small = x < s_min
        if np.any(small):
            val[small] = phi[0] + dphi[0] * (x[small] - s_min)
            der[small] = dphi[0]
        return val, der

    return BarrierProfile(beta=beta, s=s, phi=phi, dphi=dphi, h=h, method=method, _fn=fn)


def _barrier_quadrature(nu, h, s_min, s_max, n):
    """phi = [y2 ∫_s^∞ p h y1 + y1 ∫_0^s p h y2] / c2 with p = s^2 e^{s^2/4} and p W = c2."""
    basis = lnu_basis(nu, s_max=s_max, n=n, _allow_any_nu=True)
    s = np.geomspace(s_min, s_max, n)
    y1, d1 = basis.eval_y1(s)
    y2, d2 = basis.eval_y2(s)
    ls = np.log(s)
    lo = _cumulative_gl(lambda lz: _p_h_y(lz, h, basis.eval_y2), ls)
    lo += integrate.quad(lambda z: z * z * np.exp(z * z / 4) * h(z) * basis.eval_y2(np.array([z]))[0][0],
                         0, s_min)[0]
    far = -_cumulative_gl(lambda lz: _p_h_y(lz, h, basis.eval_y1), ls[::-1])[::-1]
    # beyond s_max, y1 e^{s^2/4} = c1 s^{2nu-3} R(s) with R the asymptotic series
    far += basis.c1 * integrate.quad(lambda z: z ** (2 * nu - 1) * h(z) * _y1_tail_series(nu, z),
                                     s_max, np.inf, epsabs=0, epsrel=1e-12)[0]
    phi = (y2 * far + y1 * lo) / basis.c2
    dphi = (d2 * far + d1 * lo) / basis.c2
    return s, phi, dphi


def _y1_tail_series(nu, s, terms=8):
    """Σ_j (3/2-nu)_j (1-nu)_j / j! (-4/s^2)^j, the large-s correction to y1 e^{s^2/4} s^{3-2nu}."""
    total, term = 1.0, 1.0
    for j in range(terms):
        term *= (1.5 - nu + j) * (1 - nu + j) / (j + 1) * (-4.0 / s ** 2)
        total += term
    return total


def _p_h_y(lz, h, yfn):
    z = np.exp(lz)
    return z ** 3 * np.exp(z * z / 4) * h(z) * yfn(z)[0]


def _barrier_fd(nu, h, s_min, s_max, n):
    """Second-order differences in x = ln s for the barrier equation.

    phi_xx + (1 + s^2/2) phi_x + s^2 (nu phi + h) = 0, with the flux
    condition s phi_x = -∫_0^s z^2 h at s_min.  At s_max the value is the
    decaying solution of the far-field balance (s/2) p' + nu p = -h,
    p = s^{-2nu} ∫_s^∞ 2 z^{2nu-1} h dz; a Robin condition would not do,
    since the s^{-2nu} mode satisfies the same balance.
    """
    x = np.linspace(np.log(s_min), np.log(s_max), n + 1)
    dx = x[1] - x[0]
    z = np.exp(x)
    a = 1 + z * z / 2
    lower = 1 / dx ** 2 - a / (2 * dx)
    upper = 1 / dx ** 2 + a / (2 * dx)
    diag = -2 / dx ** 2 + nu * z * z
    b = -z * z * h(z)
    flux0 = integrate.quad(lambda q: q * q * h(q), 0, s_min)[0]
    g_left = -flux0 / s_min
    p_end = s_max ** (-2 * nu) * integrate.quad(lambda q: 2 * q ** (2 * nu - 1) * h(q), s_max, np.inf,
                                                epsabs=0, epsrel=1e-12)[0]
    # ghost phi_{-1} = phi_1 - 2 dx g_left
    upper[0] += lower[0]
    b[0] += lower[0] * 2 * dx * g_left
    # Dirichlet row at the far end
    diag[-1], lower[-1], b[-1] = 1.0, 0.0, p_end
    ab = np.zeros((3, n + 1))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    phi = linalg.solve_banded((1, 1), ab, b)
    # second pass: add the curvature term phi'' + 2phi'/s ~ Q (s_max/s)^5 to the far balance
    d1 = np.gradient(phi, dx, edge_order=2)
    d2 = np.gradient(d1, dx, edge_order=2)
    q_end = (d2[-3] + d1[-3]) / z[-3] ** 2 * (z[-3] / s_max) ** 5
    ab[1, -1] = 1.0
    b[-1] = p_end + 2 * q_end / (5 - 2 * nu)
    phi = linalg.solve_banded((1, 1), ab, b)
    dphi_x = np.gradient(phi, dx, edge_order=2)
    dphi_x[0] = g_left
    return z, phi, dphi_x / z

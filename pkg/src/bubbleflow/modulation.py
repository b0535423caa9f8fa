"""Scale modulation: the nonlocal operator on the correction and its inverse.

Time-dependent quantities live on a graded grid starting at t0.  The
correction phi0 solves a heat equation whose source has amplitude
alpha(t) = 3^{1/4} mu0^{-1/2} (mu0 Lambda)', and its value at the origin is
a weakly singular convolution of alpha against

    k(u) = u^{-1/2} (1 - exp(-M^2 / (4 u))),    M = sqrt(t0).

Writing beta' = c_D alpha turns phi0(0, t) = h(t) into a first-kind Volterra
equation for beta', solved here by product integration with exact weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, special
from scipy.interpolate import CubicSpline

from .norms import log_starts, weighted_time_norm
from .params import AnsatzParams

SQRT_PI = float(np.sqrt(np.pi))
C3 = 3 ** 0.25
C_DUHAMEL = 1.0 / SQRT_PI
"""phi0(0, t) = C_DUHAMEL ∫ alpha(s) k(t - s) ds when mu = 0."""
OMEGA_BAR = C3 * C_DUHAMEL


class ModulationError(RuntimeError):
    pass


def mu0_of_t(params: AnsatzParams, t):
    """mu0, mu0', mu0'' for the regime of ``params``."""
    return params.mu0(t)


# --------------------------------------------------------------------------
# kernel


def kernel_primitive(u, a):
    """P(u) = ∫_0^u v^{-1/2} (1 - e^{-a/v}) dv in closed form.

    P(u) = 2 sqrt(u) (1 - e^{-a/u}) + 2 sqrt(pi a) erfc(sqrt(a/u)).
    """
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    up = u[pos]
    x = a / up
    out[pos] = 2 * np.sqrt(up) * -np.expm1(-x) + 2 * np.sqrt(np.pi * a) * special.erfc(np.sqrt(x))
    return out


def duhamel_kernel(u, a):
    """k(u) = u^{-1/2}(1 - e^{-a/u}); a = M^2/4 from the heat kernel, a = M^2 for the other convention."""
    u = np.asarray(u, dtype=float)
    return -np.expm1(-a / u) / np.sqrt(u)


@dataclass(frozen=True)
class KernelModel:
    """Rescaled kernel K(eta) = (1 - e^{-c/eta})/sqrt(eta) and its resolvent.

    In the variable a = (t - t0)/M^2 the Duhamel kernel becomes K with
    c = 1/4; c = 1 is the alternative normalisation of the exponent.
    ``resolvent`` is G with L(G)(xi) = 1/(xi L(K)(xi)), so that G * K = 1.
    """

    c: float = 0.25
    M: float = 10.0
    c_D: float = C_DUHAMEL

    def __call__(self, eta):
        return duhamel_kernel(eta, self.c)

    def laplace(self, xi):
        """L(K)(xi) by quadrature with an analytic far tail."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return np.array([self._laplace_one(x) for x in xi])

    def _laplace_one(self, xi):
        c = self.c
        if xi <= 0:
            raise ModulationError("Laplace variable must be positive")
        if xi >= 1:
            # q = sqrt(xi) p:  (2/sqrt(xi)) ∫ e^{-q^2} (1 - e^{-c xi/q^2}) dq
            f = lambda q: np.exp(-q * q) * -np.expm1(-c * xi / (q * q)) if q > 0 else 1.0
            val = integrate.quad(f, 0, 10, epsabs=0, epsrel=1e-12, limit=200)[0]
            return 2 * val / np.sqrt(xi)
        # eta = p^2: 2 ∫ e^{-xi p^2} (1 - e^{-c/p^2}) dp, split at P with an exact 1/p^2 tail
        P = 50.0 * np.sqrt(c) + 1.0
        f = lambda p: np.exp(-xi * p * p) * -np.expm1(-c / (p * p)) if p > 0 else 1.0
        head = integrate.quad(f, 0, P, epsabs=0, epsrel=1e-12, limit=200)[0]
        # c ∫_P^∞ e^{-xi p^2} p^{-2} dp
        lead = c * (np.exp(-xi * P * P) / P - np.sqrt(np.pi * xi) * special.erfc(np.sqrt(xi) * P))
        g = lambda p: np.exp(-xi * p * p) * (-np.expm1(-c / (p * p)) - c / (p * p))
        rest = integrate.quad(g, P, np.inf, epsabs=1e-15, limit=200)[0]
        return 2 * (head + lead + rest)

    def laplace_at_zero(self):
        """∫_0^∞ K, the limit of L(K)(xi) as xi -> 0."""
        f = lambda eta: -np.expm1(-self.c / eta) / np.sqrt(eta)
        head = integrate.quad(f, 0, 1, epsabs=1e-14, limit=200)[0]
        # eta = 1/v^2 on [1, ∞): 2 ∫_0^1 (1 - e^{-c v^2}) v^{-2} dv
        tail = integrate.quad(lambda v: 2 * -np.expm1(-self.c * v * v) / (v * v) if v > 0 else 2 * self.c,
                              0, 1, epsabs=1e-14)[0]
        return head + tail

    @property
    def c1(self):
        """Large-time limit of G, 1 / ∫K."""
        return 1.0 / (2.0 * np.sqrt(np.pi * self.c))

    @property
    def c2(self):
        return 1.0 / (2.0 * np.pi)

    @property
    def c3(self):
        """Small-time coefficient, G ~ c3 / sqrt(t)."""
        return 1.0 / np.pi

    def resolvent(self, t, terms: int = 40):
        """G(t) = (1/(pi sqrt t)) Σ_{n>=0} e^{-n^2 c/t}.

        Term-by-term inversion of 1/(sqrt(pi xi)(1 - e^{-2 sqrt(c xi)})) as a
        geometric series; for t > c/pi the sum is re-expanded by Poisson
        summation so both branches converge in a handful of terms.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        n = np.arange(1, terms)
        small = t <= self.c / np.pi
        ts = t[small]
        if ts.size:
            out[small] = (0.5 + 0.5 * (1 + 2 * np.exp(-np.outer(self.c / ts, n * n)).sum(1))) / (np.pi * np.sqrt(ts))
        tb = t[~small]
        if tb.size:
            theta = np.sqrt(np.pi * tb / self.c) * (1 + 2 * np.exp(-np.outer(np.pi ** 2 * tb / self.c, n * n)).sum(1))
            out[~small] = 0.5 * (1 + theta) / (np.pi * np.sqrt(tb))
        return out

    def convolution_identity(self, t):
        """∫_0^t G(t - s) K(s) ds, which equals 1 for every t > 0."""
        t = float(t)
        h = 0.5 * t
        # s = u^2 on [0, t/2], t - s = v^2 on [t/2, t]
        f1 = lambda u: 2 * u * self.resolvent(t - u * u)[0] * self(u * u) if u > 0 else 2 * self.resolvent(t)[0]
        f2 = lambda v: 2 * v * self.resolvent(v * v)[0] * self(t - v * v) if v > 0 else 2 * self(t) / np.pi
        a = integrate.quad(f1, 0, np.sqrt(h), epsabs=0, epsrel=1e-11, limit=200)[0]
        b = integrate.quad(f2, 0, np.sqrt(h), epsabs=0, epsrel=1e-11, limit=200)[0]
        return a + b


def kernel_laplace(xi, c: float = 1.0):
    """Laplace transform of (1 - e^{-c/eta})/sqrt(eta)."""
    out = KernelModel(c=c).laplace(xi)
    return out if np.ndim(xi) else float(out[0])


# --------------------------------------------------------------------------
# time grid and modulation state


def time_grid(t0: float, t_end: float, n: int = 1200, first: float = 1e-2) -> np.ndarray:
    """Nodes t0 = t_0 < ... < t_end, geometric in t - t0 + first."""
    if t_end <= t0:
        raise ModulationError("empty time window")
    x = np.geomspace(first, t_end - t0 + first, n)
    t = t0 + x - first
    t[0], t[-1] = t0, t_end
    return t


def _tail_integral(t, f):
    """∫_{t[-1]}^∞ f from a power-law fit of the last two samples."""
    if f[-1] == 0 and f[-2] == 0:
        return 0.0
    if f[-1] * f[-2] <= 0:
        raise ModulationError("tail changes sign; extend the window")
    p = np.log(f[-1] / f[-2]) / np.log(t[-1] / t[-2])
    if p >= -1:
        raise ModulationError(f"tail decays like t^{p:.3g}, not integrable")
    return float(-f[-1] * t[-1] / (p + 1))


def integral_to_infinity(t, f):
    """∫_t^∞ f at every node: cubic-spline integral plus a power-law tail."""
    spline = CubicSpline(t, f)
    prim = spline.antiderivative()
    return prim(t[-1]) - prim(t) + _tail_integral(t, f)


@dataclass(frozen=True)
class ModulationState:
    """Time samples of the modulation quantities on one grid.

    mu = mu0 (1 + Lambda)^2, Lambda = ∫_t^∞ lambda, beta' = c_D alpha and
    tau(t) = ∫_{t0}^t mu0^{-2}.
    """

    params: AnsatzParams
    t: np.ndarray
    lam: np.ndarray
    Lam: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    dbeta: np.ndarray
    mu0: np.ndarray
    dmu0: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    _alpha_fn: object = field(default=None, repr=False, compare=False)
    _mu_fn: object = field(default=None, repr=False, compare=False)

    @property
    def nu(self) -> float:
        """Exponent with tau^{-nu} ≍ mu0^{3/2} t^{-1} (up to logs when gamma = 2)."""
        g = self.params.gamma
        if g >= 2:
            return 5.0 / 6.0
        return (1.5 * (g - 1) + 1) / (2 * g - 1)

    def alpha_bar(self, s):
        """alpha, frozen at alpha(t0) before t0."""
        s = np.asarray(s, dtype=float)
        return np.where(s < self.t[0], self.alpha[0], self._alpha_fn(np.clip(s, self.t[0], self.t[-1])))

    def mu_of(self, s):
        s = np.asarray(s, dtype=float)
        return self._mu_fn(np.clip(s, self.t[0], self.t[-1]))

    def sharp_norm(self, samples: int = 17):
        """sup mu0^{-1} t (||lambda|| + [lambda]_sigma) over unit windows."""
        fn = CubicSpline(self.t, self.lam)
        weight = lambda s: s / self.params.mu0(s)[0]
        starts = log_starts(self.t[0], self.t[-1])
        return weighted_time_norm(fn, weight, starts, self.params.sigma, samples)[0]

    def flat_norm(self, samples: int = 17):
        """sup mu0^{-3/2} t (||alpha|| + [alpha]_sigma) over unit windows."""
        weight = lambda s: s * self.params.mu0(s)[0] ** -1.5
        starts = log_starts(self.t[0], self.t[-1])
        return weighted_time_norm(self._alpha_fn, weight, starts, self.params.sigma, samples)[0]


def alpha_of_lambda(params: AnsatzParams, t, lam, Lam):
    """alpha = 3^{1/4} mu0^{-1/2} (mu0' Lambda - mu0 lambda)."""
    mu0, dmu0, _ = params.mu0(t)
    return C3 * mu0 ** -0.5 * (dmu0 * np.asarray(Lam) - mu0 * np.asarray(lam))


def lambda_of_beta(params: AnsatzParams, t, beta, dbeta=None):
    """Lambda and lambda = -Lambda' from beta.

    omega Lambda = mu0^{-1/2} beta + (mu0^{-1}/2) ∫_t^∞ beta mu0^{-1/2} mu0',
    with omega = 3^{1/4} c_D.  ``dbeta`` defaults to the spline derivative.
    """
    t = np.asarray(t, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if dbeta is None:
        dbeta = CubicSpline(t, beta)(t, 1)
    mu0, dmu0, _ = params.mu0(t)
    J = integral_to_infinity(t, beta * mu0 ** -0.5 * dmu0) if np.any(beta) else np.zeros_like(t)
    Lam = (mu0 ** -0.5 * beta + 0.5 * J / mu0) / OMEGA_BAR
    dLam = (mu0 ** -0.5 * dbeta - mu0 ** -1.5 * dmu0 * beta - 0.5 * dmu0 * J / mu0 ** 2) / OMEGA_BAR
    return Lam, -dLam


def _finish_state(params, t, lam, Lam, alpha, beta, dbeta):
    mu0, dmu0, _ = params.mu0(t)
    mu = mu0 * (1 + Lam) ** 2
    if np.any(mu <= 0):
        raise ModulationError("mu is not positive")
    tau = np.concatenate([[0.0], integrate.cumulative_trapezoid(mu0 ** -2.0, t)])
    alpha_fn = CubicSpline(t, alpha)
    mu_fn = CubicSpline(t, mu)
    return ModulationState(params, t, np.asarray(lam, float), np.asarray(Lam, float), np.asarray(alpha, float),
                           np.asarray(beta, float), np.asarray(dbeta, float), mu0, dmu0, mu, tau,
                           _alpha_fn=alpha_fn, _mu_fn=mu_fn)


def state_from_lambda(params: AnsatzParams, t, lam, Lam=None) -> ModulationState:
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if Lam is None:
        Lam = integral_to_infinity(t, lam) if np.any(lam) else np.zeros_like(t)
    alpha = alpha_of_lambda(params, t, lam, Lam)
    dbeta = C_DUHAMEL * alpha
    beta = -integral_to_infinity(t, dbeta) if np.any(dbeta) else np.zeros_like(t)
    return _finish_state(params, t, lam, Lam, alpha, beta, dbeta)


def state_from_beta(params: AnsatzParams, t, beta, dbeta=None) -> ModulationState:
    """Reconstruct Lambda, lambda from beta, then alpha from lambda (independently of beta')."""
    t = np.asarray(t, dtype=float)
    Lam, lam = lambda_of_beta(params, t, beta, dbeta)
    alpha = alpha_of_lambda(params, t, lam, Lam)
    db = CubicSpline(t, beta)(t, 1) if dbeta is None else np.asarray(dbeta, float)
    return _finish_state(params, t, lam, Lam, alpha, beta, db)


def zero_state(params: AnsatzParams, t=None) -> ModulationState:
    """Lambda ≡ 0, hence alpha ≡ 0 and mu = mu0."""
    t = time_grid(params.t0, 100 * params.t0, 200) if t is None else np.asarray(t, float)
    z = np.zeros_like(t)
    return _finish_state(params, t, z, z, z, z, z)


# --------------------------------------------------------------------------
# the nonlocal operator and the Duhamel correction


def _exponent_scale(M, convention):
    if convention == "derived":
        return M * M / 4
    if convention == "as_written":
        return M * M
    raise ModulationError(f"unknown kernel convention {convention!r}")


def T_apply(state: ModulationState, t, convention: str = "derived", alpha_bar=None) -> float:
    """c_D ∫_{t0-1}^t alpha_bar(s) k(t - s) ds by adaptive quadrature.

    With u = sqrt(t - s) the integrand 2 alpha_bar(t - u^2)(1 - e^{-a/u^2})
    is smooth apart from the kink of alpha_bar at t0.
    """
    t0 = state.params.t0
    a = _exponent_scale(state.params.M, convention)
    ab = state.alpha_bar if alpha_bar is None else alpha_bar
    f = lambda u: 2 * ab(t - u * u) * -np.expm1(-a / (u * u)) if u > 0 else 2 * ab(t)
    u_kink = np.sqrt(max(t - t0, 0.0))
    u_end = np.sqrt(t - t0 + 1)
    val = 0.0
    if u_kink > 0:
        val += integrate.quad(f, 0, u_kink, epsabs=1e-15, epsrel=1e-11, limit=400)[0]
    val += integrate.quad(f, u_kink, u_end, epsabs=1e-15, epsrel=1e-11, limit=200)[0]
    return C_DUHAMEL * val


def _heat_source_at(x, tau, mu, M):
    """∫_{|y|<M} G_tau(x - y) / (mu + |y|) dy for the 3-D heat kernel G_tau."""
    if x == 0:
        # rho = 2 sqrt(tau) z
        st = 2 * np.sqrt(tau)
        f = lambda z: z * z * np.exp(-z * z) / (mu + st * z)
        zmax = M / st
        return 4 / SQRT_PI * integrate.quad(f, 0, min(zmax, 12.0), epsabs=0, epsrel=1e-11, limit=200)[0]
    sd = np.sqrt(4 * tau)

    def f(rho):
        # difference of Gaussians, written to avoid cancellation for small tau
        e1 = np.exp(-((x - rho) / sd) ** 2)
        return rho / (mu + rho) * e1 * -np.expm1(-x * rho / tau)

    lo, hi = max(0.0, x - 12 * sd), min(M, x + 12 * sd)
    if lo >= hi:
        return 0.0
    pts = [x] if lo < x < hi else None
    val = integrate.quad(f, lo, hi, points=pts, epsabs=0, epsrel=1e-11, limit=200)[0]
    return val / (x * np.sqrt(np.pi) * sd)


def duhamel_phi0(state: ModulationState, x: float, t: float, alpha_bar=None, mu=None,
                 rtol: float = 1e-9) -> float:
    """phi0(x, t) from the radial reduction of the Duhamel formula.

    ``alpha_bar`` and ``mu`` override the state's amplitude and scale (both
    callables of time).  The time integral uses s = t - u^2.
    """
    params = state.params
    ab = state.alpha_bar if alpha_bar is None else alpha_bar
    mu_fn = state.mu_of if mu is None else mu
    t0, M = params.t0, params.M

    def f(u):
        if u == 0:
            return 0.0 if x == 0 else 2 * u * ab(t) / (mu_fn(t) + x) * (x < M)
        s = t - u * u
        return 2 * u * ab(s) * _heat_source_at(float(x), u * u, float(mu_fn(s)), M)

    u_kink = np.sqrt(max(t - t0, 0.0))
    u_end = np.sqrt(t - t0 + 1)
    val, err = 0.0, 0.0
    for lo, hi in ((0.0, u_kink), (u_kink, u_end)):
        if hi > lo:
            v, e = integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=rtol, limit=200)
            val += v
            err += e
    if err > 1e-6 * max(abs(val), 1e-300) + 1e-12:
        raise ModulationError(f"Duhamel quadrature error estimate {err:.3g} for value {val:.3g}")
    return float(val)


def t_hat(state: ModulationState, t: float) -> float:
    """phi0(0, t) - T(t): the part of the origin value due to mu > 0.

    The kernel 1/(mu + |y|) - 1/|y| = -mu/(|y|(mu + |y|)) is integrated directly.
    """
    M, t0 = state.params.M, state.params.t0

    def inner(tau, mu):
        st = 2 * np.sqrt(tau)
        g = lambda z: z * np.exp(-z * z) * mu / (mu + st * z)
        return -4 / SQRT_PI / st * integrate.quad(g, 0, min(M / st, 12.0), epsabs=0, epsrel=1e-11, limit=200)[0]

    def f(u):
        if u == 0:
            # 2u (1/mu - 1/sqrt(pi u^2)) -> -2/sqrt(pi)
            return -2 / SQRT_PI * float(state.alpha_bar(t))
        s = t - u * u
        return 2 * u * state.alpha_bar(s) * inner(u * u, float(state.mu_of(s)))

    u_kink = np.sqrt(max(t - t0, 0.0))
    u_end = np.sqrt(t - t0 + 1)
    val = 0.0
    for lo, hi in ((0.0, u_kink), (u_kink, u_end)):
        if hi > lo:
            val += integrate.quad(f, lo, hi, epsabs=1e-15, epsrel=1e-10, limit=200)[0]
    return float(val)


def duhamel_closed_form(M: float, t0: float, t: float, convention: str = "derived") -> float:
    """∫_{t0-1}^t k(t - s) ds for alpha_bar ≡ 1 (without the c_D factor)."""
    a = _exponent_scale(M, convention)
    return float(kernel_primitive(np.array([t - t0 + 1.0]), a)[0])


def calibrate_duhamel_constant(params: AnsatzParams, times) -> tuple[float, float]:
    """c_D as the ratio of the radial Duhamel quadrature (alpha ≡ 1, mu ≡ 0) to ∫k.

    Returns the mean ratio and its relative spread across ``times``.
    """
    st = zero_state(params)
    one = lambda s: np.ones_like(np.asarray(s, dtype=float))
    zero = lambda s: np.zeros_like(np.asarray(s, dtype=float))
    ratios = np.array([duhamel_phi0(st, 0.0, t, alpha_bar=one, mu=zero)
                       / duhamel_closed_form(params.M, params.t0, t) for t in times])
    return float(ratios.mean()), float(np.ptp(ratios) / ratios.mean())


# --------------------------------------------------------------------------
# Volterra inversion


@dataclass(frozen=True)
class VolterraSolution:
    """Piecewise-constant beta' on the cells of ``t`` and beta at the nodes."""

    t: np.ndarray
    dbeta: np.ndarray
    beta: np.ndarray
    M: float
    min_diagonal: float

    @property
    def midpoints(self):
        return 0.5 * (self.t[1:] + self.t[:-1])

    def dbeta_fn(self, s):
        """Linear interpolation of the cell values through the midpoints."""
        return np.interp(s, self.midpoints, self.dbeta)

    def weighted_bound(self, params: AnsatzParams, samples: int = 17, t_min: float | None = None):
        """sup mu0^{-3/2} t (||beta'|| + [beta']_sigma) over unit windows inside the grid.

        ``t_min`` restricts the windows to start no earlier than that time.
        """
        weight = lambda s: s * params.mu0(s)[0] ** -1.5
        lo = self.midpoints[0] if t_min is None else max(t_min, self.midpoints[0])
        starts = log_starts(lo, self.midpoints[-1])
        return weighted_time_norm(self.dbeta_fn, weight, starts, params.sigma, samples)[0]


def refine_grid(t):
    """Insert one node in every cell, at the geometric midpoint of t - t0 + (t1 - t0)."""
    x = t - t[0] + (t[1] - t[0])
    mid = np.sqrt(x[1:] * x[:-1]) + t[0] - (t[1] - t[0])
    return np.sort(np.concatenate([t, mid]))


def volterra_solve(h, t, M: float, convention: str = "derived", prehistory: bool = True,
                   extrapolate: bool = True) -> VolterraSolution:
    """Solve ∫_{t0-1}^t beta'(s) k(t - s) ds = h(t) for beta'.

    With ``extrapolate`` the problem is also solved on the grid with every
    cell split in two, and the first-order error of midpoint collocation on a
    graded grid is removed by one Richardson step (2 fine - coarse, with the
    fine solution interpolated to the coarse midpoints).
    """
    coarse = _volterra_once(h, np.asarray(t, dtype=float), M, convention, prehistory)
    if not extrapolate:
        return coarse
    fine = _volterra_once(h, refine_grid(np.asarray(t, dtype=float)), M, convention, prehistory)
    fine_at = np.interp(coarse.midpoints, fine.midpoints, fine.dbeta)
    dbeta = 2 * fine_at - coarse.dbeta
    return VolterraSolution(t=coarse.t, dbeta=dbeta, beta=_beta_from_density(coarse.t, dbeta), M=coarse.M,
                            min_diagonal=min(coarse.min_diagonal, fine.min_diagonal))


def _beta_from_density(t, dbeta):
    """beta = -∫_t^∞ beta' for a piecewise-constant density, with a power-law tail."""
    cell = dbeta * np.diff(t)
    tail = _tail_integral(0.5 * (t[1:] + t[:-1]), dbeta) if np.any(dbeta) else 0.0
    return -(np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]]) + tail)


def _volterra_once(h, t, M, convention, prehistory):
    """Solve ∫_{t0-1}^t beta'(s) k(t - s) ds = h(t) for beta'.

    Parameters
    ----------
    h : callable or (times, values)
        Right-hand side; sampled values are interpolated linearly.
    t : array
        Cell boundaries, t[0] = t0.
    M : float
        Kernel cutoff scale, sqrt(t0).
    prehistory : bool
        Include [t0 - 1, t0] with beta' frozen at its first-cell value.

    Notes
    -----
    Times are rescaled first, a = (t - t0)/M^2, so the kernel becomes
    K(eta) = (1 - e^{-c/eta})/sqrt(eta) and the equation reads
    ∫ B'(a) K(b - a) da = M h, with B' = M^2 beta'.  Collocation is at cell
    midpoints with weights from the exact primitive of K.
    """
    t = np.asarray(t, dtype=float)
    t0 = t[0]
    c = _exponent_scale(M, convention) / M ** 2
    a = (t - t0) / M ** 2
    mid = 0.5 * (a[1:] + a[:-1])
    tm = t0 + M ** 2 * mid
    if callable(h):
        rhs = np.asarray(h(tm), dtype=float)
    else:
        rhs = np.interp(tm, np.asarray(h[0], float), np.asarray(h[1], float))
    n = mid.size
    # W[i, j] = ∫_{a_j}^{a_{j+1}} K(mid_i - s) ds for a_{j+1} <= mid_i, partial on the diagonal
    upper = np.subtract.outer(mid, a[:-1])
    lower = np.subtract.outer(mid, a[1:])
    P = lambda x: kernel_primitive(np.maximum(x, 0.0), c)
    W = np.tril(P(upper) - P(lower))
    if prehistory:
        W[:, 0] += P(mid + 1.0 / M ** 2) - P(mid)
    diag = np.abs(np.diag(W))
    rowmax = np.max(np.abs(W), axis=1)
    min_diag = float(np.min(diag / rowmax))
    if min_diag < 1e-12:
        raise ModulationError(f"collocation matrix nearly singular (diagonal ratio {min_diag:.2e})")
    Bp = linalg.solve_triangular(W, M * rhs, lower=True)
    dbeta = Bp / M ** 2
    return VolterraSolution(t=t, dbeta=dbeta, beta=_beta_from_density(t, dbeta), M=float(M),
                            min_diagonal=min_diag)


def volterra_apply(dbeta_fn, t0: float, M: float, t, convention: str = "derived",
                   prehistory: bool = True) -> np.ndarray:
    """Forward map ∫_{t0-1}^t beta'(s) k(t - s) ds by adaptive quadrature (u = sqrt(t - s))."""
    a = _exponent_scale(M, convention)
    first = float(dbeta_fn(np.array([t0]))[0])

    def one(tt):
        def f(u):
            s = tt - u * u
            b = first if s < t0 else float(dbeta_fn(np.array([s]))[0])
            return 2 * b * (-np.expm1(-a / (u * u)) if u > 0 else 1.0)
        uk = np.sqrt(tt - t0)
        v = integrate.quad(f, 0, uk, epsabs=1e-16, epsrel=1e-11, limit=400)[0] if uk > 0 else 0.0
        if prehistory:
            v += integrate.quad(f, uk, np.sqrt(tt - t0 + 1), epsabs=1e-16, epsrel=1e-11, limit=100)[0]
        return v

    return np.array([one(tt) for tt in np.atleast_1d(t)])


def resolvent_beta(h, t0: float, M: float, t, kernel: KernelModel | None = None):
    """beta from the resolvent formula (no prehistory), normalised by beta(∞) = 0:

    beta(t) = -(c1/M) ∫_t^∞ h + (1/M) ∫_{t0}^t h(s) [G((t - s)/M^2) - c1] ds.
    """
    kernel = KernelModel(c=0.25, M=M) if kernel is None else kernel
    c1 = kernel.c1
    out = []
    for tt in np.atleast_1d(t):
        far = integrate.quad(h, tt, np.inf, epsabs=1e-15, limit=200)[0]
        # s = tt - M^2 v^2 removes the G ~ 1/sqrt singularity
        vmax = np.sqrt((tt - t0) / M ** 2)
        g = lambda v: 2 * M ** 2 * v * h(tt - M ** 2 * v * v) * (kernel.resolvent(v * v)[0] - c1) if v > 0 \
            else 2 * M ** 2 * h(tt) / np.pi
        near = integrate.quad(g, 0, vmax, epsabs=1e-15, limit=400)[0] if vmax > 0 else 0.0
        out.append((near - c1 * far) / M)
    return np.array(out)

"""Two-region approximations U1, U2 and their errors E[u] = Δu + u^5 - u_t.

Inner part: w_mu + mu0' mu^{1/2} Phi1(r/mu).  Outer part: the self-similar
heat solution of the regime (glued to A r^{-gamma} when gamma > 2).  The
two are blended by eta(r/(r0 sqrt t)).  A correction phi0, solving a heat
equation with source proportional to alpha/(mu + r) inside |x| < M, removes
the slowly decaying part of the inner error and gives U2 = U1 + phi0.

Every function of (r, t) is carried as a ``Jet`` (value, u_r, u_rr, u_t)
so that errors are assembled from exact derivatives.  Errors near the core
are formed from cancelled expressions: the Yamabe part of w_mu and the
kernel part of the corrector drop out analytically, so no large terms are
subtracted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import selfsim
from .evolution import DiffusionOperator, _TRBDF2
from .grid import RadialGrid
from .modulation import ModulationState, zero_state
from .norms import log_starts
from .params import AnsatzParams
from .profiles import C3, CorrectorProfile, bubble_eval, solve_phi1, z0_eval


class AnsatzError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# cutoff


@dataclass(frozen=True)
class CutoffFunction:
    """Quintic smoothstep: 1 below ``lo``, 0 above ``hi``, C^2 in between."""

    lo: float = 1.0
    hi: float = 2.0

    # sup |eta'| and sup |eta''| for the unit transition
    SLOPE_BOUND = 15.0 / 8.0
    CURVATURE_BOUND = 10.0 / np.sqrt(3.0)

    def __call__(self, x):
        """eta, eta', eta'' at x."""
        x = np.asarray(x, dtype=float)
        L = self.hi - self.lo
        y = np.clip((x - self.lo) / L, 0.0, 1.0)
        inside = (x > self.lo) & (x < self.hi)
        e = 1.0 - y ** 3 * (10.0 - 15.0 * y + 6.0 * y * y)
        e1 = np.where(inside, -30.0 * y * y * (1.0 - y) ** 2 / L, 0.0)
        e2 = np.where(inside, -60.0 * y * (1.0 - y) * (1.0 - 2.0 * y) / L ** 2, 0.0)
        return e, e1, e2


ETA = CutoffFunction()


# --------------------------------------------------------------------------
# jets


@dataclass(frozen=True)
class Jet:
    """A radial function of (r, t) at sample points with u_r, u_rr and u_t."""

    u: np.ndarray
    ur: np.ndarray
    urr: np.ndarray
    ut: np.ndarray

    def laplacian(self, r):
        return self.urr + 2.0 * self.ur / r

    def heat(self, r):
        """Δu - u_t."""
        return self.laplacian(r) - self.ut

    def __add__(self, other: "Jet") -> "Jet":
        return Jet(self.u + other.u, self.ur + other.ur, self.urr + other.urr, self.ut + other.ut)

    def __sub__(self, other: "Jet") -> "Jet":
        return Jet(self.u - other.u, self.ur - other.ur, self.urr - other.urr, self.ut - other.ut)

    def scaled(self, c) -> "Jet":
        return Jet(c * self.u, c * self.ur, c * self.urr, c * self.ut)


def blend(c: Jet, a: Jet, b: Jet) -> Jet:
    """c a + (1 - c) b with the product rule.

    Written without a - b in the plateau terms so that c = 1 returns a and
    c = 0 returns b exactly, even when a and b differ by many orders.
    """
    d = a - b
    e = 1.0 - c.u
    return Jet(c.u * a.u + e * b.u,
               c.u * a.ur + e * b.ur + c.ur * d.u,
               c.u * a.urr + e * b.urr + 2 * c.ur * d.ur + c.urr * d.u,
               c.u * a.ut + e * b.ut + c.ut * d.u)


def blend_heat(c: Jet, a: Jet, b: Jet, r):
    """(Δ - ∂_t) of c a + (1 - c) b minus the blended (Δ - ∂_t) a, b."""
    d = a - b
    return d.u * c.heat(r) + 2.0 * c.ur * d.ur


def cutoff_jet(r, t, scale, dscale, cut: CutoffFunction = ETA) -> Jet:
    """eta(r / L(t)) for a length L with derivative L'."""
    x = r / scale
    e, e1, e2 = cut(x)
    return Jet(e, e1 / scale, e2 / scale ** 2, -e1 * x * dscale / scale)


def quintic_excess(a, q):
    """(a + q)^5 - a^5 - 5 a^4 q without cancellation."""
    return q * q * (10 * a ** 3 + 10 * a * a * q + 5 * a * q * q + q ** 3)


# --------------------------------------------------------------------------
# scale law


@dataclass(frozen=True)
class ScaleLaw:
    """mu = mu0 (1 + Lambda)^2, its derivative and alpha at arbitrary t."""

    params: AnsatzParams
    state: ModulationState
    zero: bool
    _lam: object = field(default=None, repr=False, compare=False)
    _Lam: object = field(default=None, repr=False, compare=False)

    @classmethod
    def from_state(cls, state: ModulationState) -> "ScaleLaw":
        zero = not (np.any(state.lam) or np.any(state.Lam))
        if zero:
            return cls(state.params, state, True)
        return cls(state.params, state, False, CubicSpline(state.t, state.lam), CubicSpline(state.t, state.Lam))

    def _clip(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.state.t[-1] * (1 + 1e-12)):
            raise AnsatzError("time beyond the modulation window")
        return np.clip(t, self.state.t[0], self.state.t[-1])

    def mu(self, t):
        """mu, mu', mu0, mu0', mu0''."""
        m0, d0, dd0 = self.params.mu0(t)
        if self.zero:
            return m0, d0, m0, d0, dd0
        tc = self._clip(t)
        L, lam = self._Lam(tc), self._lam(tc)
        q = 1 + L
        return m0 * q * q, d0 * q * q - 2 * m0 * q * lam, m0, d0, dd0

    def alpha(self, t):
        """alpha, frozen at alpha(t0) before t0."""
        if self.zero:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.state.alpha_bar(np.minimum(t, self.state.t[-1]))


# --------------------------------------------------------------------------
# inner and outer parts


def inner_jet(law: ScaleLaw, phi1: CorrectorProfile, r, t) -> Jet:
    """u_in = w_mu + mu0' mu^{1/2} Phi1(r/mu) with exact derivatives."""
    r = np.asarray(r, dtype=float)
    mu, dmu, _, d0, dd0 = law.mu(t)
    w, w1, w2 = bubble_eval(r, mu)
    rho = r / mu
    p, p1 = phi1(rho)
    p2 = phi1.second_derivative(rho)
    sq = np.sqrt(mu)
    psi = sq * p
    psi_mu = 0.5 * p / sq - rho * p1 / sq  # ∂_mu of mu^{1/2} Phi1(r/mu)
    w_mu = mu ** -1.5 * z0_eval(rho)[0]  # ∂_mu w_mu
    return Jet(w + d0 * psi,
               w1 + d0 * p1 / sq,
               w2 + d0 * p2 / (sq * mu),
               dmu * w_mu + dd0 * psi + d0 * dmu * psi_mu)


def inner_error(law: ScaleLaw, phi1: CorrectorProfile, r, t):
    """E[u_in] from its cancelled form.

    Δw_mu + w_mu^5 = 0 and Δψ + 5 w_mu^4 ψ = ∂_mu w_mu for ψ = mu^{1/2} Phi1,
    so E[u_in] = (mu0' - mu') ∂_mu w_mu + [(w + q)^5 - w^5 - 5 w^4 q]
    - mu0'' ψ - mu0' mu' ∂_mu ψ with q = mu0' ψ.
    """
    r = np.asarray(r, dtype=float)
    mu, dmu, _, d0, dd0 = law.mu(t)
    w = bubble_eval(r, mu)[0]
    rho = r / mu
    p, p1 = phi1(rho)
    sq = np.sqrt(mu)
    psi = sq * p
    psi_mu = 0.5 * p / sq - rho * p1 / sq
    w_mu = mu ** -1.5 * z0_eval(rho)[0]
    return (d0 - dmu) * w_mu + quintic_excess(w, d0 * psi) - dd0 * psi - d0 * dmu * psi_mu


def outer_jet(params: AnsatzParams, profile: selfsim.OuterProfile, r, t) -> Jet:
    """Regime-dispatched outer solution.

    gamma < 2: t^{-gamma/2} g(s); gamma = 2: t^{-1}[kA ln t g0(s) + h(s)];
    gamma > 2: eta(r/t) d t^{-1} g0(s) + (1 - eta(r/t)) A r^{-gamma}; s = r/sqrt t.
    """
    if profile.regime != params.regime:
        raise AnsatzError(f"profile regime {profile.regime} does not match gamma = {params.gamma}")
    r = np.asarray(r, dtype=float)
    t = float(t)
    st = np.sqrt(t)
    s = r / st
    if profile.regime == "gamma_lt2":
        g, g1, g2 = profile.profile(s)
        a = t ** (-params.gamma / 2)
        return Jet(a * g, a * g1 / st, a * g2 / t, a / t * (-0.5 * params.gamma * g - 0.5 * s * g1))
    if profile.regime == "gamma_eq2":
        kA = profile.k * profile.A
        L = np.log(t)
        a0, a1, a2 = selfsim.g0_eval(s)
        h, h1, h2 = profile.profile(s)
        u = (kA * L * a0 + h) / t
        ur = (kA * L * a1 + h1) / (t * st)
        urr = (kA * L * a2 + h2) / (t * t)
        ut = (kA * a0 - kA * L * (a0 + 0.5 * s * a1) - (h + 0.5 * s * h1)) / (t * t)
        return Jet(u, ur, urr, ut)
    g, g1, g2 = profile.profile(s)
    heat = Jet(g / t, g1 / (t * st), g2 / (t * t), (-g - 0.5 * s * g1) / (t * t))
    A, gm = params.A, params.gamma
    z = np.zeros_like(r)
    tail = Jet(A * r ** -gm, -gm * A * r ** (-gm - 1), gm * (gm + 1) * A * r ** (-gm - 2), z)
    return blend(cutoff_jet(r, t, t, 1.0), heat, tail)


def outer_error(params: AnsatzParams, profile: selfsim.OuterProfile, r, t):
    """E[u_out] = u_out^5 + heat defect (only the gamma > 2 glue has one)."""
    r = np.asarray(r, dtype=float)
    jet = outer_jet(params, profile, r, t)
    if profile.regime != "gamma_gt2":
        return jet.u ** 5
    st = np.sqrt(t)
    s = r / st
    g, g1, _ = profile.profile(s)
    heat = Jet(g / t, g1 / (t * st), np.zeros_like(r), np.zeros_like(r))
    A, gm = params.A, params.gamma
    tail = Jet(A * r ** -gm, -gm * A * r ** (-gm - 1), np.zeros_like(r), np.zeros_like(r))
    c = cutoff_jet(r, t, t, 1.0)
    # (Δ - ∂_t)(A r^{-gamma}) = A gamma (gamma - 1) r^{-gamma-2}
    tail_heat = A * gm * (gm - 1) * r ** (-gm - 2)
    return jet.u ** 5 + (1 - c.u) * tail_heat + blend_heat(c, heat, tail, r)


# --------------------------------------------------------------------------
# the correction phi0


# relative time step of the centred difference for phi0_t, capped so that
# the lower neighbour of t0 stays after the start time t0 - 1
PHI0_DT = 1e-4
PHI0_DT_MAX = 0.25


def _phi0_step(t):
    return np.minimum(PHI0_DT * np.asarray(t, dtype=float), PHI0_DT_MAX)


@dataclass(frozen=True)
class Phi0Field:
    """Radial heat solution with source -alpha_bar(t)/(mu + r) 1{r < M}, zero at t0 - 1.

    The sign makes (Δ - ∂_t) phi0 = alpha_bar/(mu + r) 1{r < M}, which
    cancels the -alpha/(mu + r) part of the inner error.  Solved by TR-BDF2
    on a stretched grid with Dirichlet zero far away; values at the stored
    times are interpolated by cubic splines in r.  Each requested time t is
    stored together with t ± h (h = PHI0_DT t, at most PHI0_DT_MAX), and
    phi0_t is their centred difference: near the core phi0_t is a small
    difference of Δphi0 and the source, so taking it from the equation
    would lose most digits.
    """

    grid: RadialGrid
    times: np.ndarray  # requested times
    stored: np.ndarray  # requested times and their difference neighbours
    values: np.ndarray  # (len(stored), grid.n)
    law: ScaleLaw = field(repr=False)
    zero: bool = False

    @classmethod
    def solve(cls, law: ScaleLaw, times, n: int = 4800, steps_per_unit: float = 40.0,
              growth: float = 0.02) -> "Phi0Field":
        """Integrate from t0 - 1 through the sorted output ``times``.

        Steps start at 1/steps_per_unit and grow to ``growth`` (t - t0 + 1);
        every stored time is hit exactly.
        """
        times = np.unique(np.asarray(times, dtype=float))
        p = law.params
        h = _phi0_step(times)
        if times[0] - h[0] <= p.t0 - 1:
            raise AnsatzError("phi0 starts at t0 - 1")
        stored = np.unique(np.concatenate([times, times - h, times + h]))
        M = p.M
        span = stored[-1] - p.t0 + 1
        r_max = M + 14 * np.sqrt(span)
        h_min = 0.25 * float(p.mu0(stored[-1])[0])
        grid = RadialGrid.stretched(r_max, n, h_min)
        if law.zero:
            return cls(grid, times, stored, np.zeros((stored.size, grid.n)), law, zero=True)
        op = DiffusionOperator.build(grid)
        r = grid.r
        inside = (r < M).astype(float)

        def source(t):
            mu = float(law.mu(np.array([max(t, p.t0)]))[0][0])
            return -float(law.alpha(np.array([t]))[0]) / (mu + r) * inside

        g = _TRBDF2
        a = 1.0 / (g * (2 - g))
        b = (1 - g) ** 2 / (g * (2 - g))
        wgt = (1 - g) / (2 - g)
        u = np.zeros(grid.n)
        t = p.t0 - 1.0
        out = np.empty((stored.size, grid.n))
        k = 0
        while k < stored.size and stored[k] <= t:
            out[k] = u
            k += 1
        while k < stored.size:
            dt = max(1.0 / steps_per_unit, growth * (t - p.t0 + 1))
            dt = min(dt, stored[k] - t)
            s0, sg, s1 = source(t), source(t + g * dt), source(t + dt)
            rhs = u + 0.5 * g * dt * (op.apply(u) + s0 + sg)
            mid = op.solve_shifted(0.5 * g * dt, rhs, 0.0)
            u = op.solve_shifted(wgt * dt, a * mid - b * u + wgt * dt * s1, 0.0)
            t += dt
            if abs(t - stored[k]) <= 1e-12 * stored[k]:
                t = stored[k]
                out[k] = u
                k += 1
        return cls(grid, times, stored, out, law)

    def _index(self, t):
        i = int(np.searchsorted(self.stored, t))
        for j in (i, i - 1):
            if 0 <= j < self.stored.size and abs(self.stored[j] - t) <= 1e-12 * abs(t):
                return j
        raise AnsatzError(f"phi0 was not stored at t = {t!r}")

    def _spline(self, t):
        v = self.values[self._index(t)]
        rr = np.concatenate([[0.0], self.grid.r])
        vv = np.concatenate([[v[0]], v])
        return CubicSpline(rr, vv, bc_type=((1, 0.0), "not-a-knot"))

    def _eval(self, sp, r, order=0):
        out = r > self.grid.r_max
        return np.where(out, 0.0, sp(np.minimum(r, self.grid.r_max), order))

    def jet(self, r, t) -> Jet:
        """phi0 with r-derivatives from a spline and phi0_t from a centred difference."""
        r = np.asarray(r, dtype=float)
        z = np.zeros_like(r)
        if self.zero:
            return Jet(z, z, z, z.copy())
        if not np.any(np.abs(self.times - t) <= 1e-12 * abs(t)):
            raise AnsatzError(f"phi0 was not stored at t = {t!r}")
        sp = self._spline(t)
        h = float(_phi0_step(t))
        lo, hi = t - h, t + h
        ut = (self._eval(self._spline(hi), r) - self._eval(self._spline(lo), r)) / (hi - lo)
        return Jet(self._eval(sp, r), self._eval(sp, r, 1), self._eval(sp, r, 2), ut)

    def source(self, r, t):
        """-alpha_bar(t)/(mu + r) 1{r < M}."""
        p = self.law.params
        mu = float(self.law.mu(np.array([max(t, p.t0)]))[0][0])
        al = float(self.law.alpha(np.array([t]))[0])
        return np.where(r < p.M, -al / (mu + r), 0.0)

    def value(self, r, t):
        r = np.asarray(r, dtype=float)
        if self.zero:
            return np.zeros_like(r)
        return self._eval(self._spline(t), r)


# --------------------------------------------------------------------------
# the builder


@dataclass(frozen=True)
class ErrorParts:
    """Pieces of E[U1] and E[U2] at sample points.

    e1 = E[U1]; e1_star = e1 + alpha/(mu + r) eta (the slowly decaying term
    removed); e21 = e1_star - alpha/(mu + r)(eta - 1{r<M}); e22 = (U1 + phi0)^5 - U1^5;
    e2 = e21 + e22; e2_bar = e21 + (1 - eta_R) e22.
    """

    e1: np.ndarray
    e1_star: np.ndarray
    alpha_term: np.ndarray
    e21: np.ndarray
    e22: np.ndarray
    e2: np.ndarray
    e2_bar: np.ndarray
    phi0_defect: np.ndarray


@dataclass(frozen=True)
class Ansatz:
    """Field factory for u_in, u_out, U1, U2 and their errors at one parameter set."""

    params: AnsatzParams
    law: ScaleLaw
    phi1: CorrectorProfile = field(repr=False)
    profile: selfsim.OuterProfile = field(repr=False)
    phi0: Phi0Field | None = field(default=None, repr=False)

    # parts -------------------------------------------------------------

    def inner(self, r, t) -> Jet:
        return inner_jet(self.law, self.phi1, r, t)

    def outer(self, r, t) -> Jet:
        return outer_jet(self.params, self.profile, r, t)

    def blend_cutoff(self, r, t) -> Jet:
        """eta(r/(r0 sqrt t))."""
        L = self.params.r0 * np.sqrt(t)
        return cutoff_jet(np.asarray(r, dtype=float), t, L, 0.5 * L / t)

    def core_cutoff(self, r, t) -> Jet:
        """eta_R = eta(r/(R mu0))."""
        m0, d0, _ = self.params.mu0(t)
        R = self.params.R
        return cutoff_jet(np.asarray(r, dtype=float), t, R * float(m0), R * float(d0))

    def U1(self, r, t) -> Jet:
        return blend(self.blend_cutoff(r, t), self.inner(r, t), self.outer(r, t))

    def phi0_jet(self, r, t) -> Jet:
        if self.phi0 is None:
            if not self.law.zero:
                raise AnsatzError("U2 needs phi0; build with build_U2(..., phi0_times=...)")
            z = np.zeros_like(np.asarray(r, dtype=float))
            return Jet(z, z, z, z.copy())
        return self.phi0.jet(r, t)

    def U2(self, r, t) -> Jet:
        return self.U1(r, t) + self.phi0_jet(r, t)

    # errors ------------------------------------------------------------

    def error_U1(self, r, t):
        """E[U1] assembled from the cancelled inner error, the outer error and the blend terms."""
        r = np.asarray(r, dtype=float)
        c = self.blend_cutoff(r, t)
        a, b = self.inner(r, t), self.outer(r, t)
        ein = inner_error(self.law, self.phi1, r, t)
        eout = outer_error(self.params, self.profile, r, t)
        U = b.u + c.u * (a.u - b.u)
        mix = U ** 5 - c.u * a.u ** 5 - (1 - c.u) * b.u ** 5
        return c.u * ein + (1 - c.u) * eout + mix + blend_heat(c, a, b, r)

    def alpha_term(self, r, t):
        """alpha/(mu + r): the inner error is -alpha/(mu + r) to leading order."""
        mu = float(self.law.mu(np.array([t]))[0][0])
        return float(self.law.alpha(np.array([t]))[0]) / (mu + np.asarray(r, dtype=float))

    def error_parts(self, r, t) -> ErrorParts:
        r = np.asarray(r, dtype=float)
        c = self.blend_cutoff(r, t).u
        e1 = self.error_U1(r, t)
        at = self.alpha_term(r, t)
        e1_star = e1 + at * c
        e21 = e1_star - at * (c - (r < self.params.M))
        U1 = self.U1(r, t).u
        ph = self.phi0_jet(r, t)
        e22 = (U1 + ph.u) ** 5 - U1 ** 5
        eta_R = self.core_cutoff(r, t).u
        src = self.phi0.source(r, t) if self.phi0 is not None else np.zeros_like(r)
        # (Δ - ∂_t) phi0 + source: zero for the exact phi0
        defect = ph.heat(r) + src
        return ErrorParts(e1=e1, e1_star=e1_star, alpha_term=at, e21=e21, e22=e22, e2=e21 + e22,
                          e2_bar=e21 + (1 - eta_R) * e22, phi0_defect=defect)

    def potential_split(self, r, t):
        """(5 U2^4, 5 w_mu^4 eta_R, V) with V = 5(U2^4 - w_mu^4) eta_R + 5 U2^4 (1 - eta_R)."""
        r = np.asarray(r, dtype=float)
        U = self.U2(r, t).u
        mu = float(self.law.mu(np.array([t]))[0][0])
        w = bubble_eval(r, mu)[0]
        eR = self.core_cutoff(r, t).u
        V = 5 * (U ** 4 - w ** 4) * eR + 5 * U ** 4 * (1 - eR)
        return 5 * U ** 4, 5 * w ** 4 * eR, V


def build_inner(params: AnsatzParams, state: ModulationState, r, t, phi1: CorrectorProfile | None = None) -> Jet:
    """u_in and its derivatives."""
    return inner_jet(ScaleLaw.from_state(state), phi1 or _phi1(), r, t)


def build_outer(params: AnsatzParams, profile: selfsim.OuterProfile, r, t) -> Jet:
    return outer_jet(params, profile, r, t)


def build_U2(params: AnsatzParams, state: ModulationState | None = None, phi0_times=None,
             phi1: CorrectorProfile | None = None, **phi0_options) -> Ansatz:
    """Factory for U1 and U2.

    phi0 vanishes identically when Lambda ≡ 0; otherwise it is solved once on
    the requested ``phi0_times`` (every time at which U2 will be evaluated).
    """
    state = zero_state(params) if state is None else state
    if state.params != params:
        raise AnsatzError("state was built for different parameters")
    law = ScaleLaw.from_state(state)
    phi0 = None
    if phi0_times is not None:
        phi0 = Phi0Field.solve(law, phi0_times, **phi0_options)
    return Ansatz(params, law, phi1 or _phi1(), params.outer(), phi0)


_PHI1_CACHE: list = []


def _phi1() -> CorrectorProfile:
    if not _PHI1_CACHE:
        _PHI1_CACHE.append(solve_phi1())
    return _PHI1_CACHE[0]


def error_field(u, r, t):
    """E[u] = Δu + u^5 - u_t for a field factory ``u(r, t) -> Jet``."""
    r = np.asarray(r, dtype=float)
    j = u(r, t)
    return j.laplacian(r) + j.u ** 5 - j.ut


# --------------------------------------------------------------------------
# weights and norms


def h0_shape(s):
    """~1/s at 0, ~1/s^3 at infinity."""
    return selfsim.default_h0(s)


def phi0_shape(s):
    """~s at 0, ~1/s^3 at infinity."""
    s = np.asarray(s, dtype=float)
    return s / (1 + s ** 4)


def phi0_slope_shape(s):
    """Positive envelope of |phi0_shape'|: ~1 at 0, ~3/s^4 at infinity."""
    s = np.asarray(s, dtype=float)
    return (1 + 3 * s ** 4) / (1 + s ** 4) ** 2


@dataclass(frozen=True)
class WeightSet:
    """Weights of the three norms as functions of (r, t).

    star: mu0^{-1/2} t^{3/2} / h0(r/sqrt t); one: mu0^{-1/2} t^{1/2} / phi0(r/sqrt t);
    two: mu0^{-1/2} t / phi0'(r/sqrt t).
    """

    params: AnsatzParams

    def star(self, r, t):
        return self.params.mu0(t)[0] ** -0.5 * t ** 1.5 / h0_shape(r / np.sqrt(t))

    def one(self, r, t):
        return self.params.mu0(t)[0] ** -0.5 * t ** 0.5 / phi0_shape(r / np.sqrt(t))

    def two(self, r, t):
        return self.params.mu0(t)[0] ** -0.5 * t / phi0_slope_shape(r / np.sqrt(t))

    def get(self, kind: str):
        if kind not in ("star", "one", "two"):
            raise AnsatzError(f"unknown norm {kind!r}")
        return getattr(self, kind)


# displacements of the Hoelder pairs and the patch sample offsets
HOLDER_DX = (0.1, 0.5)
HOLDER_DT = (0.1, 0.5)
PATCH_DX = (0.0, 0.1, 0.5, 1.0)
PATCH_DT = (0.0, 0.1, 0.5, 1.0)


@dataclass(frozen=True)
class NormReport:
    """Discrete weighted norm with its per-time breakdown."""

    value: float
    times: np.ndarray
    per_time: np.ndarray
    r_at_max: np.ndarray

    @property
    def variation(self) -> float:
        """max / min of the per-time values."""
        return float(self.per_time.max() / self.per_time.min())


def norm_times(t_lo: float, t_hi: float, per_decade: int = 10) -> np.ndarray:
    """Patch start times, log-uniform on [t_lo, t_hi - 1]."""
    return log_starts(t_lo, t_hi, per_decade)


def patch_times(times) -> np.ndarray:
    """Every time a patch norm over ``times`` evaluates."""
    return np.unique(np.concatenate([np.asarray(times, float) + d for d in PATCH_DT]))


def weighted_error_norm(f, params: AnsatzParams, times, kind: str = "star", r_per_decade: int = 40,
                        r_min: float = 1e-3, r_max=None, pointwise: bool = False,
                        sigma: float | None = None, holder_dx=HOLDER_DX, holder_dt=HOLDER_DT) -> NormReport:
    """sup over (x, t) of weight(|x|, t) (sup_patch |f| + Hoelder quotient).

    ``f(r, t)`` returns samples at radii r for one time.  The patch around
    (x, t) is B(x, 1) x [t, t + 1], sampled at radii |r ± d| for d in
    PATCH_DX and times t + PATCH_DT; the Hoelder part is the largest of the
    eight quotients |f(x, t) - f(y, s)| / (|x - y|^{2 sigma} + |t - s|^sigma)
    with |x - y| in ``holder_dx`` and |t - s| in ``holder_dt``.  ``pointwise`` drops
    the patch and evaluates weight |f| at the sample points only.
    ``r_max`` defaults to max(3 t, 30 sqrt t).
    """
    sig = params.sigma if sigma is None else sigma
    weight = WeightSet(params).get(kind)
    times = np.asarray(times, dtype=float)
    per_time = np.empty(times.size)
    where = np.empty(times.size)
    for j, t in enumerate(times):
        hi = max(3 * t, 30 * np.sqrt(t)) if r_max is None else r_max
        n = int(np.ceil(r_per_decade * np.log10(hi / r_min))) + 1
        r = np.geomspace(r_min, hi, n)
        if pointwise:
            val = np.abs(f(r, t))
        else:
            samples = {}

            def at(dx, dt):
                if (dx, dt) not in samples:
                    samples[(dx, dt)] = f(np.maximum(np.abs(r + dx), 0.5 * r_min), t + dt)
                return samples[(dx, dt)]

            patch = [at(sgn * dx, dt) for dt in PATCH_DT for dx in PATCH_DX
                     for sgn in ((1,) if dx == 0 else (1, -1))]
            base = at(0.0, 0.0)
            sup = np.max(np.abs(np.array(patch)), axis=0)
            hol = np.zeros_like(r)
            for dx in holder_dx:
                for dt in holder_dt:
                    for sgn in (1, -1):
                        q = np.abs(base - at(sgn * dx, dt)) / (dx ** (2 * sig) + dt ** sig)
                        hol = np.maximum(hol, q)
            val = sup + hol
        wv = weight(r, t) * val
        i = int(np.argmax(wv))
        per_time[j] = wv[i]
        where[j] = r[i]
    return NormReport(float(per_time.max()), times, per_time, where)


# --------------------------------------------------------------------------
# matching


@dataclass(frozen=True)
class MatchingGap:
    t: float
    C0: float
    C1: float
    r_lo: float
    r_hi: float


def matching_gap(ansatz: Ansatz, t: float, R: float | None = None, per_decade: int = 200) -> MatchingGap:
    """sup r |u_in - u_out| / mu0^{1/2} and sup r^2 |∂_r(u_in - u_out)| / mu0^{1/2}
    over R mu0 < r < sqrt(t)/R."""
    R = ansatz.params.R if R is None else R
    m0 = float(ansatz.params.mu0(t)[0])
    lo, hi = R * m0, np.sqrt(t) / R
    if not lo < hi:
        raise AnsatzError("empty overlap window")
    n = int(np.ceil(per_decade * np.log10(hi / lo))) + 1
    r = np.geomspace(lo, hi, n)
    d = ansatz.inner(r, t) - ansatz.outer(r, t)
    sq = np.sqrt(m0)
    return MatchingGap(float(t), float(np.max(r * np.abs(d.u)) / sq), float(np.max(r * r * np.abs(d.ur)) / sq),
                       float(lo), float(hi))


def leading_match_gap(params: AnsatzParams, t) -> np.ndarray:
    """3^{1/4} mu0^{1/2} minus the 1/r coefficient of the outer solution (relative)."""
    t = np.asarray(t, dtype=float)
    m0 = params.mu0(t)[0]
    if params.regime == "gamma_lt2":
        outer = params.d * t ** (-(params.gamma - 1) / 2)
    elif params.regime == "gamma_eq2":
        outer = (params.d + params.kA * np.log(t)) * t ** -0.5
    else:
        outer = params.d * t ** -0.5
    return (C3 * np.sqrt(m0) - outer) / outer


# --------------------------------------------------------------------------
# Lipschitz dependence on lambda


def lipschitz_gap(params: AnsatzParams, state_a: ModulationState, state_b: ModulationState,
                  t_end: float, per_decade: int = 10, r_per_decade: int = 20) -> NormReport:
    """Weighted ‖E2_bar[a] - E2_bar[b]‖_* over [t0, t_end] (windows [t, t+1])."""
    times = norm_times(params.t0, t_end, per_decade)
    need = patch_times(times)
    A = build_U2(params, state_a, phi0_times=need)
    B = build_U2(params, state_b, phi0_times=need, phi1=A.phi1)
    diff = lambda r, t: A.error_parts(r, t).e2_bar - B.error_parts(r, t).e2_bar
    return weighted_error_norm(diff, params, times, r_per_decade=r_per_decade)

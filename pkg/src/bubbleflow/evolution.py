"""Radial solver for u_t = u_rr + (2/r) u_r + u^5.

Space is a finite-volume discretisation on a ``RadialGrid`` (faces at the
origin and at node midpoints, mirror symmetry built into the zero-area first
face).  One time step is a Strang splitting: half a step of the exact
reaction flow v' = v^5, a full diffusion step, and another half reaction
step.  Diffusion uses the trapezoidal rule, optionally followed by a BDF2
stage (TR-BDF2), which keeps the trapezoidal accuracy but damps the stiff
modes of the fine core cells.  Step size is chosen by step doubling.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

from .grid import GridError, RadialField, RadialGrid

BLOWUP_LEVEL = 1e8
DECAY_FLOOR = 1e-8
_TRBDF2 = 2.0 - np.sqrt(2.0)


class EvolutionError(RuntimeError):
    pass


class BlowUpSignal(EvolutionError):
    """The reaction flow v' = v^5 is singular within the step."""

    def __init__(self, r: float, value: float, t: float):
        super().__init__(f"reaction singular at r = {r:.6g} (u = {value:.6g}, t = {t:.6g})")
        self.r = r
        self.value = value
        self.t = t


class FitError(ValueError):
    pass


# --------------------------------------------------------------------------
# spatial operator


@dataclass(frozen=True)
class DiffusionOperator:
    """Tridiagonal finite-volume Laplacian; row i is (lower[i], diag[i], upper[i]).

    With the Dirichlet tag the last node is a boundary value and its row is
    zero; with the Neumann tag the flux through r_max vanishes.
    """

    grid: RadialGrid
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @classmethod
    def build(cls, grid: RadialGrid) -> "DiffusionOperator":
        r = grid.r
        f = grid.faces
        vol = grid.volumes
        area = f * f
        # coupling across the interior face between nodes i and i+1
        k = area[1:-1] / np.diff(r)
        n = r.size
        lower = np.zeros(n)
        upper = np.zeros(n)
        lower[1:] = k / vol[1:]
        upper[:-1] = k / vol[:-1]
        diag = -(lower + upper)
        if grid.bc == "dirichlet":
            lower[-1] = upper[-1] = diag[-1] = 0.0
        return cls(grid, lower, diag, upper)

    def apply(self, u):
        out = self.diag * u
        out[1:] += self.lower[1:] * u[:-1]
        out[:-1] += self.upper[:-1] * u[1:]
        return out

    def solve_shifted(self, c: float, rhs, boundary: float | None = None):
        """Solve (I - c L) x = rhs; a Dirichlet last node is set to ``boundary``."""
        n = rhs.size
        ab = np.empty((3, n))
        ab[0, 1:] = -c * self.upper[:-1]
        ab[0, 0] = 0.0
        ab[1] = 1.0 - c * self.diag
        ab[2, :-1] = -c * self.lower[1:]
        ab[2, -1] = 0.0
        b = np.array(rhs, dtype=float)
        if self.grid.bc == "dirichlet":
            b[-1] = boundary
        return linalg.solve_banded((1, 1), ab, b, check_finite=False)


def laplacian_residual(grid: RadialGrid, u, rhs) -> float:
    """max over interior nodes of |L_h u + rhs| for sampled u."""
    op = DiffusionOperator.build(grid)
    res = op.apply(np.asarray(u, dtype=float)) + np.asarray(rhs, dtype=float)
    return float(np.max(np.abs(res[:-1])))


# --------------------------------------------------------------------------
# one step


def reaction_flow(v, dt: float, t: float = 0.0, r=None):
    """Exact flow of v' = v^5 over dt: v (1 - 4 dt v^4)^{-1/4}."""
    v = np.asarray(v, dtype=float)
    q = 1.0 - 4.0 * dt * v ** 4
    if np.any(q <= 0):
        i = int(np.argmin(q))
        raise BlowUpSignal(float(r[i]) if r is not None else float(i), float(v[i]), t)
    return v * q ** -0.25


@dataclass(frozen=True)
class StepControls:
    """Switches and tolerances for ``step`` and ``evolve``.

    Parameters
    ----------
    reaction, diffusion : bool
        Disable either half of the equation.
    scheme : {"trbdf2", "trapezoidal"}
        Diffusion integrator.
    boundary : callable or float
        Dirichlet value at r_max as a function of time, or a constant.
    rtol, atol : float
        Step-doubling tolerance, err = max |u2 - u1| / (atol + rtol |u2|) / 3.
    c_safe : float
        dt is capped by c_safe / (5 max u^4).
    """

    reaction: bool = True
    diffusion: bool = True
    scheme: str = "trbdf2"
    boundary: Callable[[float], float] | float = 0.0
    rtol: float = 1e-6
    atol: float = 1e-12
    c_safe: float = 0.5
    dt_min: float = 1e-300
    dt_max: float = np.inf
    blowup_level: float = BLOWUP_LEVEL
    decay_floor: float = DECAY_FLOOR

    def __post_init__(self):
        if self.scheme not in ("trbdf2", "trapezoidal"):
            raise EvolutionError(f"unknown diffusion scheme {self.scheme!r}")

    def g(self, t: float) -> float:
        return float(self.boundary(t)) if callable(self.boundary) else float(self.boundary)


def _diffuse(op: DiffusionOperator, u, t, dt, ctl: StepControls):
    if ctl.scheme == "trapezoidal":
        rhs = u + 0.5 * dt * op.apply(u)
        return op.solve_shifted(0.5 * dt, rhs, ctl.g(t + dt))
    g = _TRBDF2
    rhs = u + 0.5 * g * dt * op.apply(u)
    mid = op.solve_shifted(0.5 * g * dt, rhs, ctl.g(t + g * dt))
    a = 1.0 / (g * (2 - g))
    b = (1 - g) ** 2 / (g * (2 - g))
    w = (1 - g) / (2 - g)
    return op.solve_shifted(w * dt, a * mid - b * u, ctl.g(t + dt))


def _strang(op, u, t, dt, ctl, r):
    if ctl.reaction:
        u = reaction_flow(u, 0.5 * dt, t, r)
    if ctl.diffusion:
        u = _diffuse(op, u, t, dt, ctl)
    if ctl.reaction:
        u = reaction_flow(u, 0.5 * dt, t + 0.5 * dt, r)
    return u


def step(fld: RadialField, dt: float, controls: StepControls | None = None,
         operator: DiffusionOperator | None = None) -> RadialField:
    """Advance ``fld`` by one Strang step of size dt.

    Raises ``BlowUpSignal`` if the reaction flow is singular within the step
    and ``EvolutionError`` if dt exceeds c_safe / (5 max u^4).
    """
    ctl = StepControls() if controls is None else controls
    if dt <= 0:
        raise EvolutionError("dt must be positive")
    if ctl.reaction:
        m = float(np.max(np.abs(fld.values)))
        budget = ctl.c_safe / (5 * m ** 4) if m > 0 else np.inf
        if dt > budget * (1 + 1e-12):
            raise EvolutionError(f"dt = {dt:.3g} exceeds the reaction budget {budget:.3g}")
    op = DiffusionOperator.build(fld.grid) if operator is None else operator
    u = _strang(op, fld.values, fld.t, dt, ctl, fld.grid.r)
    return RadialField(fld.grid, u, fld.t + dt)


# --------------------------------------------------------------------------
# probes and logs


def probe_integrals(grid: RadialGrid, u, R: float):
    """(∫_0^R r u dr, (r u)_r(R) - (r u)_r(0)) from a cubic spline of r u.

    Since r u solves the one-dimensional heat equation, the second number is
    the time derivative of the first when the reaction is off.  For regular
    u the origin term is u(0); it vanishes for u ~ d/r.
    """
    r = grid.r
    if not r[0] < R <= r[-1]:
        raise EvolutionError("probe radius outside the grid")
    # the first node sits close to the origin; the spline extrapolates to r = 0
    sp = CubicSpline(r, r * np.asarray(u, dtype=float))
    return float(sp.integrate(0.0, R)), float(sp(R, 1) - sp(0.0, 1))


@dataclass
class EvolutionLog:
    """Per-step record of one run.

    ``sup`` is the exact grid maximum of |u| at each logged time.
    ``probes`` maps a probe radius to the series of (∫_0^R r u, flux).
    """

    t: list = field(default_factory=list)
    sup: list = field(default_factory=list)
    core: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    positive: list = field(default_factory=list)
    boundary_flux: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)
    reason: str = "running"
    message: str = ""
    final: RadialField | None = None
    rejected: int = 0

    def record(self, fld: RadialField, dt: float):
        s, rc = fld.sup()
        r = fld.grid.r
        self.t.append(fld.t)
        self.sup.append(s)
        self.core.append(rc)
        self.dt.append(dt)
        self.positive.append(fld.is_positive())
        u = fld.values
        face = 0.5 * (r[-1] + r[-2])
        # r^2 u_r through the last interior face, and ∫ r^2 u over the interior cells
        self.boundary_flux.append(float(face * face * (u[-1] - u[-2]) / (r[-1] - r[-2])))
        self.mass.append(float(np.dot(fld.grid.volumes[:-1], u[:-1])))
        for R, series in self.probes.items():
            series.append(probe_integrals(fld.grid, u, R))

    @classmethod
    def from_fields(cls, fields, probes=()) -> "EvolutionLog":
        """Log of a prescribed sequence of fields, e.g. samples of an exact solution."""
        log = cls(probes={float(R): [] for R in probes})
        prev = None
        for f in fields:
            log.record(f, 0.0 if prev is None else f.t - prev)
            prev = f.t
        log.reason = "prescribed"
        log.final = fields[-1]
        return log

    def arrays(self):
        return {k: np.asarray(getattr(self, k), dtype=float)
                for k in ("t", "sup", "core", "dt", "positive", "boundary_flux", "mass")}

    def rows(self):
        a = self.arrays()
        return list(zip(a["t"], a["sup"], a["core"], a["dt"], a["positive"], a["boundary_flux"]))

    HEADER = ("t", "sup_norm", "core_r", "dt", "positive", "boundary_flux")


def conservation_defect(log: EvolutionLog) -> float:
    """Relative drift per unit time of ∫ r^2 u dr after removing the boundary flux.

    Meaningful for pure heat runs; the flux is integrated by the trapezoidal rule.
    """
    a = log.arrays()
    t, m, f = a["t"], a["mass"], a["boundary_flux"]
    through = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])
    drift = np.abs(m - m[0] - through)
    span = max(t[-1] - t[0], 1e-300)
    return float(drift.max() / abs(m[0]) / span)


def mass_flux_check(log: EvolutionLog, R_probe: float) -> float:
    """Relative mismatch between the change of ∫_0^R r u dr and the accumulated flux.

    The flux is integrated along the logged steps by the trapezoidal rule.
    Returns |ΔM - ∫F dt| / max(|ΔM|, |∫F dt|), or the absolute mismatch if
    both sides vanish.
    """
    R = float(R_probe)
    if R not in log.probes:
        raise EvolutionError(f"no probe recorded at R = {R}")
    data = np.asarray(log.probes[R], dtype=float)
    t = np.asarray(log.t, dtype=float)
    dm = data[-1, 0] - data[0, 0]
    flux = float(np.sum(0.5 * (data[1:, 1] + data[:-1, 1]) * np.diff(t)))
    scale = max(abs(dm), abs(flux))
    if scale == 0:
        return 0.0
    return abs(dm - flux) / scale


# --------------------------------------------------------------------------
# adaptive driver


def evolve(u0: RadialField, horizon: float, controls: StepControls | None = None, dt0: float | None = None,
           probes=(), max_steps: int = 200000, record_every: int = 1) -> EvolutionLog:
    """Run from u0.t to ``horizon`` with step-doubling error control.

    Stops at the horizon, when sup |u| exceeds the blow-up level or the
    reaction flow becomes singular ("blow-up"), when sup |u| falls below the
    decay floor ("decayed"), or when dt underflows ("dt-underflow", an
    unresolved approach to blow-up).
    """
    ctl = StepControls() if controls is None else controls
    op = DiffusionOperator.build(u0.grid)
    r = u0.grid.r
    log = EvolutionLog(probes={float(R): [] for R in probes})
    fld = u0
    log.record(fld, 0.0)
    h = u0.grid.r[0]
    dt = dt0 if dt0 is not None else min(1e-3 * h * h, 1e-3)
    steps = 0
    # time is carried as fld.t + t_lo (compensated summation): close to
    # blow-up the admissible steps fall far below the spacing of floats near t
    t_lo = 0.0
    while True:
        s = float(np.max(np.abs(fld.values)))
        if s > ctl.blowup_level:
            log.reason = "blow-up"
            break
        if s < ctl.decay_floor:
            log.reason = "decayed"
            break
        if fld.t >= horizon * (1 - 1e-14):
            log.reason = "horizon"
            break
        if steps >= max_steps:
            log.reason = "max-steps"
            break
        budget = ctl.c_safe / (5 * s ** 4) if (ctl.reaction and s > 0) else np.inf
        dt = min(dt, budget, ctl.dt_max, (horizon - fld.t) - t_lo)
        if dt < ctl.dt_min:
            log.reason = "dt-underflow"
            log.message = f"dt = {dt:.3g} at t = {fld.t:.6g}, sup = {s:.3g}"
            break
        try:
            one = _strang(op, fld.values, fld.t, dt, ctl, r)
            half = _strang(op, fld.values, fld.t, 0.5 * dt, ctl, r)
            two = _strang(op, half, fld.t + 0.5 * dt, 0.5 * dt, ctl, r)
        except BlowUpSignal as sig:
            log.reason = "blow-up"
            log.message = str(sig)
            break
        if not np.all(np.isfinite(two)):
            dt *= 0.25
            log.rejected += 1
            continue
        err = float(np.max(np.abs(two - one) / (ctl.atol + ctl.rtol * np.abs(two)))) / 3.0
        if err <= 1.0:
            t_hi, t_lo = _two_sum(fld.t, t_lo + dt)
            fld = RadialField(fld.grid, two, t_hi)
            steps += 1
            if steps % record_every == 0 or fld.t >= horizon:
                log.record(fld, dt)
        else:
            log.rejected += 1
        factor = 4.0 if err == 0 else min(4.0, max(0.2, 0.9 * err ** (-1.0 / 3.0)))
        dt *= factor
    if log.t[-1] != fld.t:
        log.record(fld, dt)
    log.final = fld
    return log


def _two_sum(a: float, b: float):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def fixed_step_run(u0: RadialField, t_end: float, n_steps: int, controls: StepControls | None = None) -> RadialField:
    """n_steps equal Strang steps from u0.t to t_end, no error control."""
    ctl = StepControls() if controls is None else controls
    op = DiffusionOperator.build(u0.grid)
    dt = (t_end - u0.t) / n_steps
    u, t = u0.values, u0.t
    for _ in range(n_steps):
        u = _strang(op, u, t, dt, ctl, u0.grid.r)
        t += dt
    return RadialField(u0.grid, u, t_end)


def temporal_order(u0: RadialField, t_end: float, n_steps=(20, 40, 80, 160), controls=None):
    """Observed order p from successive differences of fixed-step runs.

    The difference between runs with dt and dt/2 behaves like C dt^p; the
    returned array holds log2 of consecutive difference ratios.
    """
    finals = [fixed_step_run(u0, t_end, n, controls).values for n in n_steps]
    diffs = np.array([np.max(np.abs(b - a)) for a, b in zip(finals[:-1], finals[1:])])
    return np.log2(diffs[:-1] / diffs[1:]), diffs


# --------------------------------------------------------------------------
# rate fits


@dataclass(frozen=True)
class PowerFit:
    """log v = log C + p log t (+ q log log t for the corrected model)."""

    exponent: float
    prefactor: float
    rss: float
    log_exponent: float | None
    log_power: float | None
    log_rss: float | None
    log_correction: bool


def fit_power_law(t, values, window=None, log_correction: bool = True) -> PowerFit:
    """Least-squares power law fit of a monotone series.

    With ``log_correction`` a second model C t^p (ln t)^q is fitted and
    preferred when it lowers the residual sum of squares by a factor of 4 or
    more (ties go to the plain power law).
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, v = t[m], v[m]
    if t.size < 20:
        raise FitError("need at least 20 samples")
    if t.max() / t.min() < 10 * (1 - 1e-12):
        raise FitError("samples must span at least one decade")
    if np.any(v <= 0):
        raise FitError("values must be positive")
    dv = np.diff(v)
    if not (np.all(dv > 0) or np.all(dv < 0)):
        raise FitError("series is not monotone")
    x, y = np.log(t), np.log(v)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rss = float(np.sum((A @ coef - y) ** 2))
    lp = lq = lrss = None
    prefer = False
    if log_correction and np.all(t > 1):
        B = np.column_stack([np.ones_like(x), x, np.log(x)])
        c2, *_ = np.linalg.lstsq(B, y, rcond=None)
        lrss = float(np.sum((B @ c2 - y) ** 2))
        lp, lq = float(c2[1]), float(c2[2])
        floor = 1e-24 * t.size
        prefer = rss > floor and lrss < 0.25 * rss
    return PowerFit(float(coef[1]), float(np.exp(coef[0])), rss, lp, lq, lrss, prefer)


# --------------------------------------------------------------------------
# checkpoints

_HEADER = struct.Struct("<qdd")


def save_checkpoint(path, fld: RadialField) -> None:
    """Binary snapshot: header (int64 n, float64 r_max, float64 t), then r and u as little-endian float64."""
    g = fld.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.n, g.r_max, fld.t))
        fh.write(np.asarray(g.r, dtype="<f8").tobytes())
        fh.write(np.asarray(fld.values, dtype="<f8").tobytes())


def load_checkpoint(path, bc: str = "dirichlet") -> RadialField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise GridError("checkpoint truncated")
    n, r_max, t = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * n:
        raise GridError(f"checkpoint holds {body.size} values, expected {2 * n}")
    r, u = body[:n].copy(), body[n:].copy()
    if r[-1] != r_max:
        raise GridError("checkpoint header does not match its nodes")
    return RadialField(RadialGrid(r, bc=bc), u, t)

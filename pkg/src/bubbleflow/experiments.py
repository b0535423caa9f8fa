"""Dynamic experiments started from the two-region approximation.

``threshold_bisection`` scales U2(., t0) by a factor and sorts the runs into
decay and blow-up; ``track_ansatz`` compares the evolved sup-norm with the
bubble height mu(t)^{-1/2} 3^{1/4}; ``rate_table`` fits power laws to the
scale laws mu0(t)^{-1/2}.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import evolution as Ev
from .ansatz import Ansatz, build_U2
from .grid import RadialField, RadialGrid
from .modulation import ModulationState
from .params import AnsatzParams, ConfigError, mu0_closed_form
from .profiles import C3

DECAY = "decay"
BLOWUP = "blow-up"
UNDECIDED = "undecided"


def outcome_of(log: Ev.EvolutionLog) -> str:
    """Map a termination reason to decay / blow-up / undecided.

    A dt underflow is the solver giving up on an unresolved approach to
    blow-up, so it counts as blow-up.
    """
    if log.reason == "decayed":
        return DECAY
    if log.reason in ("blow-up", "dt-underflow"):
        return BLOWUP
    return UNDECIDED


@dataclass(frozen=True)
class GridSpec:
    """Stretched grid resolving the bubble core.

    h_min is ``core_fraction`` mu0 at the last time the core must be resolved.
    """

    n: int = 1200
    core_fraction: float = 1e-3
    r_max: float | None = None

    def build(self, params: AnsatzParams, horizon: float, t_core: float | None = None) -> RadialGrid:
        mu = float(params.mu0(params.t0 if t_core is None else t_core)[0])
        r_max = 50.0 * np.sqrt(horizon) if self.r_max is None else self.r_max
        return RadialGrid.stretched(r_max, self.n, self.core_fraction * mu)


def initial_field(ansatz: Ansatz, grid: RadialGrid, scale: float = 1.0) -> RadialField:
    t0 = ansatz.params.t0
    return RadialField(grid, scale * ansatz.U2(grid.r, t0).u, t0)


@dataclass(frozen=True)
class RunSummary:
    scale: float
    outcome: str
    reason: str
    t_end: float
    sup_end: float
    steps: int
    rejected: int


def _run_scaled(args) -> RunSummary:
    u0, scale, horizon, ctl = args
    fld = RadialField(u0.grid, scale * u0.values, u0.t)
    log = Ev.evolve(fld, horizon, ctl, max_steps=10 ** 6)
    return RunSummary(scale, outcome_of(log), log.reason, float(log.t[-1]), float(log.sup[-1]),
                      len(log.t) - 1, log.rejected)


@dataclass(frozen=True)
class BisectionResult:
    runs: tuple
    lo: float
    hi: float
    lo_outcome: str
    hi_outcome: str

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def bracketed(self) -> bool:
        return self.lo_outcome == DECAY and self.hi_outcome == BLOWUP


def threshold_bisection(params: AnsatzParams, lo: float = 0.5, hi: float = 1.5, width: float = 0.1,
                        max_runs: int = 8, horizon: float = 1e7, grid: GridSpec = GridSpec(),
                        controls: Ev.StepControls | None = None, state: ModulationState | None = None,
                        jobs: int = 1) -> BisectionResult:
    """Bisect the scale factor of U2(., t0) between decay and blow-up.

    Both ends run first (in parallel when ``jobs`` > 1), then midpoints until
    the bracket is at most ``width`` or ``max_runs`` runs are spent.  An
    undecided run stops the search.  The outer boundary is homogeneous
    Dirichlet at 50 sqrt(horizon).
    """
    if not 0 < lo < hi:
        raise ConfigError("need 0 < lo < hi")
    if max_runs < 2:
        raise ConfigError("max_runs must allow the two end runs")
    ctl = Ev.StepControls(rtol=1e-5) if controls is None else controls
    ans = build_U2(params, state)
    u0 = initial_field(ans, grid.build(params, horizon))
    ends = [(u0, lo, horizon, ctl), (u0, hi, horizon, ctl)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, 2)) as pool:
            runs = list(pool.map(_run_scaled, ends))
    else:
        runs = [_run_scaled(a) for a in ends]
    lo_out, hi_out = runs[0].outcome, runs[1].outcome
    if lo_out == DECAY and hi_out == BLOWUP:
        while hi - lo > width * (1 + 1e-12) and len(runs) < max_runs:
            mid = 0.5 * (lo + hi)
            res = _run_scaled((u0, mid, horizon, ctl))
            runs.append(res)
            if res.outcome == DECAY:
                lo = mid
            elif res.outcome == BLOWUP:
                hi = mid
            else:
                break
    return BisectionResult(tuple(runs), lo, hi, lo_out, hi_out)


# --------------------------------------------------------------------------
# tracking


@dataclass(frozen=True)
class TrackResult:
    """Evolved sup-norm against the bubble height 3^{1/4} mu(t)^{-1/2}."""

    t: np.ndarray
    sup: np.ndarray
    height: np.ndarray
    reason: str
    t_end: float
    tolerance: float

    @property
    def deviation(self) -> np.ndarray:
        return np.abs(self.sup / self.height - 1.0)

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviation))

    @property
    def departure(self) -> float | None:
        """First logged time at which the deviation exceeds the tolerance."""
        bad = np.nonzero(self.deviation > self.tolerance)[0]
        return float(self.t[bad[0]]) if bad.size else None

    @property
    def covered(self) -> bool:
        """The run reached t_end and stayed within tolerance throughout."""
        return self.reason == "horizon" and self.departure is None


def track_ansatz(params: AnsatzParams, t_end_factor: float = 5.0, scale: float = 1.0,
                 grid: GridSpec = GridSpec(n=1600, r_max=None), tolerance: float = 0.15,
                 controls: Ev.StepControls | None = None, state: ModulationState | None = None) -> TrackResult:
    """Evolve scale U2(., t0) to t_end_factor t0 and compare with the bubble height.

    The outer boundary carries the U1 value, and the core is resolved down to
    mu0 at the final time.
    """
    t0 = params.t0
    t_end = t_end_factor * t0
    ans = build_U2(params, state)
    g = GridSpec(grid.n, grid.core_fraction, grid.r_max).build(params, t_end, t_core=t_end)
    r_b = np.array([g.r_max])
    base = Ev.StepControls(rtol=1e-5) if controls is None else controls
    ctl = replace(base, boundary=lambda t: float(ans.U1(r_b, t).u[0]))
    log = Ev.evolve(initial_field(ans, g, scale), t_end, ctl, max_steps=10 ** 6)
    t = np.asarray(log.t)
    mu = ans.law.mu(t)[0]
    return TrackResult(t, np.asarray(log.sup), C3 * mu ** -0.5, log.reason, t_end, tolerance)


# --------------------------------------------------------------------------
# rate laws


@dataclass(frozen=True)
class RateRow:
    gamma: float
    expected: float
    fit: Ev.PowerFit

    @property
    def exponent(self) -> float:
        """Power of t; for gamma = 2 the power of the log-corrected model."""
        if self.gamma == 2 and self.fit.log_exponent is not None:
            return self.fit.log_exponent
        return self.fit.exponent

    @property
    def error(self) -> float:
        return abs(self.exponent - self.expected)


def expected_exponent(gamma: float) -> float:
    """Growth exponent of mu0^{-1/2}: (gamma - 1)/2 below 2, 1/2 above (log-corrected at 2)."""
    return 0.5 * (gamma - 1) if gamma < 2 else 0.5


def rate_table(gammas=(1.5, 2.0, 3.0), t_lo: float = 1e2, t_hi: float = 1e6, samples: int = 60,
               d: float = 1.0, kA: float = 1.0) -> list[RateRow]:
    """Fit mu0(t)^{-1/2} on a log-spaced window for each gamma.

    For gamma = 2 the series is sqrt(t)/ln(t) (d = 0, kA = 1 in the scale
    law, up to a constant), the form the log-corrected model targets.
    """
    t = np.geomspace(t_lo, t_hi, samples)
    rows = []
    for g in gammas:
        if g == 2:
            mu = mu0_closed_form(2.0, 0.0, t, kA)[0]
        else:
            mu = mu0_closed_form(g, d, t)[0]
        rows.append(RateRow(float(g), expected_exponent(g), Ev.fit_power_law(t, mu ** -0.5)))
    return rows

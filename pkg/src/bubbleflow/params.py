"""Scenario parameters shared by the modulation, ansatz and evolution code."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import selfsim

SQRT3 = float(np.sqrt(3.0))


class ConfigError(ValueError):
    """A parameter set that violates a precondition."""


@dataclass(frozen=True)
class AnsatzParams:
    """Fixed parameters of one scenario.

    Parameters
    ----------
    gamma, A : float
        Tail of the initial datum, u0 ~ A r^{-gamma}.
    t0 : float
        Initial time; the cutoff scale of the nonlocal kernel is M = sqrt(t0).
    r0 : float
        Inner/outer blending scale, the blend acts on r / (r0 sqrt(t)).
    R : float
        Inner cutoff multiple for eta(r / (R mu0)).
    sigma : float
        Hoelder exponent of the weighted norms.
    B : float
        Far-field constant fixing d when gamma = 2.
    u0_moment : float
        ∫ r u0 dr, fixes d when gamma > 2 (the default gives d = 1).
    """

    gamma: float = 3.0
    A: float = 1.0
    t0: float = 100.0
    r0: float = 0.1
    R: float = 1.1
    sigma: float = 0.55
    B: float = 0.0
    u0_moment: float = float(np.sqrt(np.pi))
    check_coupling: bool = field(default=True, compare=False)

    def __post_init__(self):
        if not self.gamma > 1:
            raise ConfigError("gamma must exceed 1")
        if not self.A > 0:
            raise ConfigError("A must be positive")
        if not self.t0 > 1:
            raise ConfigError("t0 must exceed 1")
        if not (self.r0 > 0 and self.R > 0):
            raise ConfigError("cutoff scales must be positive")
        if not 0.5 < self.sigma < 1:
            raise ConfigError("sigma must lie in (1/2, 1)")
        if self.check_coupling and self.R ** 6 * np.sqrt(self.mu0(self.t0)[0]) > 1:
            raise ConfigError(
                f"R^6 mu0(t0)^(1/2) = {self.R ** 6 * np.sqrt(self.mu0(self.t0)[0]):.3g} > 1; raise t0 or lower R")

    @property
    def M(self) -> float:
        return float(np.sqrt(self.t0))

    @property
    def regime(self) -> str:
        return selfsim.regime_of(self.gamma)

    def outer(self) -> selfsim.OuterProfile:
        return _outer_cached(self.gamma, self.A, self.B, self.u0_moment)

    @property
    def d(self) -> float:
        return self.outer().d

    @property
    def kA(self) -> float:
        prof = self.outer()
        return prof.k * prof.A if prof.regime == "gamma_eq2" else 0.0

    def mu0(self, t):
        """mu0 and its first two derivatives."""
        return mu0_closed_form(self.gamma, self.d, t, self.kA)

    def with_(self, **kw) -> "AnsatzParams":
        from dataclasses import replace
        return replace(self, **kw)


@lru_cache(maxsize=32)
def _outer_cached(gamma, A, B, u0_moment):
    return selfsim.outer_profile(gamma, A, u0_moment=u0_moment, B=B)


def mu0_closed_form(gamma: float, d: float, t, kA: float = 0.0):
    """Scale law matching inner and outer solutions.

    gamma < 2: d^2 t^{1-gamma}/sqrt3; gamma = 2: (d + kA ln t)^2 t^{-1}/sqrt3;
    gamma > 2: d^2 t^{-1}/sqrt3.  Returns (mu0, mu0', mu0'').
    """
    t = np.asarray(t, dtype=float)
    if gamma == 2:
        q = d + kA * np.log(t)
        mu = q * q / (SQRT3 * t)
        d1 = (2 * q * kA - q * q) / (SQRT3 * t * t)
        d2 = (2 * kA * kA - 6 * q * kA + 2 * q * q) / (SQRT3 * t ** 3)
        return mu, d1, d2
    p = 1 - gamma if gamma < 2 else -1.0
    mu = d * d / SQRT3 * t ** p
    return mu, p * mu / t, p * (p - 1) * mu / (t * t)

"""Discrete sup and Hoelder quantities used by the weighted norms."""
from __future__ import annotations

import numpy as np


def holder_seminorm(values, x, sigma: float) -> float:
    """max_{i<j} |f_i - f_j| / |x_i - x_j|^sigma over the sampled points."""
    v = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    dv = np.abs(v[:, None] - v[None, :])
    dx = np.abs(x[:, None] - x[None, :])
    mask = dx > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(dv[mask] / dx[mask] ** sigma))


def window_norm(f, t, sigma: float, width: float = 1.0, samples: int = 17):
    """sup |f| and Hoelder seminorm of f on [t, t + width] from uniform samples.

    ``f`` maps an array of times to values.
    """
    s = np.linspace(t, t + width, samples)
    v = np.asarray(f(s), dtype=float)
    return float(np.max(np.abs(v))), holder_seminorm(v, s, sigma)


def weighted_time_norm(f, weight, starts, sigma: float, samples: int = 17):
    """sup_t weight(t) (||f||_{[t,t+1]} + [f]_{sigma,[t,t+1]}) over window starts.

    Returns the norm and the per-window values.
    """
    starts = np.asarray(starts, dtype=float)
    vals = np.empty(starts.size)
    for i, t in enumerate(starts):
        sup, hol = window_norm(f, t, sigma, samples=samples)
        vals[i] = weight(t) * (sup + hol)
    return float(np.max(vals)), vals


def log_starts(t_lo: float, t_hi: float, per_decade: int = 10) -> np.ndarray:
    """Window start times log-uniform on [t_lo, t_hi - 1]."""
    n = max(2, int(np.ceil(per_decade * np.log10(t_hi / t_lo))) + 1)
    return np.geomspace(t_lo, t_hi - 1.0, n)

"""Numerical toolkit for slowly concentrating bubble solutions of u_t = Δu + u^5 in three dimensions.

Modules
-------
profiles
    Bubble w, kernel Z0, corrector Phi1, negative eigenpair of the linearised operator.
selfsim
    Self-similar ODE basis, outer profiles in the three tail regimes, barrier profiles.
modulation
    Scale law, nonlocal kernel, Duhamel correction, Volterra inversion.
evolution
    Radial solver with adaptive step doubling, blow-up detection and rate fits.
ansatz
    Two-region approximations U1 and U2, their errors and weighted norms.
experiments
    Threshold bisection, ansatz tracking and rate tables.
cli
    Scenario driver writing JSON reports and CSV files.
"""

__version__ = "0.1.0"

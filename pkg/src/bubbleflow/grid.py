"""Radial grids and fields shared by the profile, ansatz and evolution code."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing nodes in (0, r_max] with the last node on the boundary.

    Finite-volume faces sit at 0 and at node midpoints, so a node's control
    volume is the shell between its two neighbouring faces.  The mirror
    (even) condition at r = 0 is built into the zero-area first face.
    """

    r: np.ndarray
    bc: str = "dirichlet"
    ratio: float = 1.0
    recipe: tuple = field(default=(), compare=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size < 3:
            raise GridError("grid needs at least three nodes")
        if r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise GridError("nodes must be positive and strictly increasing")
        if self.bc not in ("dirichlet", "neumann"):
            raise GridError(f"unknown boundary tag {self.bc!r}")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @classmethod
    def uniform(cls, r_min: float, r_max: float, n: int, bc="dirichlet"):
        return cls(np.linspace(r_min, r_max, n), bc=bc, recipe=("uniform", r_min, r_max, n))

    @classmethod
    def geometric(cls, r_min: float, r_max: float, n: int, bc="dirichlet"):
        r = np.geomspace(r_min, r_max, n)
        return cls(r, bc=bc, ratio=float(r[1] / r[0]), recipe=("geometric", r_min, r_max, n))

    @classmethod
    def stretched(cls, r_max: float, n: int, h_min: float, bc="dirichlet"):
        """sinh-stretched nodes, spacing ~h_min at the origin growing smoothly outward.

        Nodes are r_i = r_max sinh(a x_i)/sinh(a) with x_i = (i + 1/2)/(n - 1/2),
        so the first node sits half a cell from the origin and the last on r_max.
        """
        if h_min <= 0 or h_min * n >= r_max:
            raise GridError("h_min must be positive and smaller than r_max/n")
        dx = 1.0 / (n - 0.5)
        # first spacing at the origin is r_max * a * dx / sinh(a)
        target = h_min / (r_max * dx)
        a = brentq(lambda a: a / np.sinh(a) - target, 1e-12, 700.0)
        x = (np.arange(n) + 0.5) * dx
        r = r_max * np.sinh(a * x) / np.sinh(a)
        return cls(r, bc=bc, ratio=float(np.exp(a * dx)), recipe=("stretched", r_max, n, h_min))

    def refined(self) -> "RadialGrid":
        """Grid with the spacing halved.

        Grids built by ``uniform``, ``geometric`` or ``stretched`` are rebuilt
        from the same map with twice the resolution, which keeps the spacing
        smooth; other grids get one extra node inside every interval.
        """
        if self.recipe:
            kind, *args = self.recipe
            if kind == "uniform":
                return RadialGrid.uniform(args[0], args[1], 2 * args[2] - 1, bc=self.bc)
            if kind == "geometric":
                return RadialGrid.geometric(args[0], args[1], 2 * args[2] - 1, bc=self.bc)
            return RadialGrid.stretched(args[0], 2 * args[1], 0.5 * args[2], bc=self.bc)
        mid = 0.5 * (self.r[1:] + self.r[:-1])
        first = 0.5 * self.r[0]
        r = np.sort(np.concatenate([[first], self.r, mid]))
        return RadialGrid(r, bc=self.bc, ratio=np.sqrt(self.ratio))

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    @property
    def faces(self) -> np.ndarray:
        """Faces 0, midpoints, and r_max (n + 1 entries)."""
        mid = 0.5 * (self.r[1:] + self.r[:-1])
        return np.concatenate([[0.0], mid, [self.r[-1]]])

    @property
    def volumes(self) -> np.ndarray:
        f = self.faces
        return (f[1:] ** 3 - f[:-1] ** 3) / 3.0


@dataclass(frozen=True)
class RadialField:
    """Values of a radial function on a grid at time t."""

    grid: RadialGrid
    values: np.ndarray
    t: float = 0.0
    slope: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.r.shape:
            raise GridError("field size does not match its grid")
        if not np.all(np.isfinite(v)):
            raise GridError("field has non-finite values")
        object.__setattr__(self, "values", v)
        if self.slope is not None:
            object.__setattr__(self, "slope", np.asarray(self.slope, dtype=float))

    def derivative(self) -> np.ndarray:
        """u_r, analytic if supplied, else second-order differences."""
        if self.slope is not None:
            return self.slope
        return np.gradient(self.values, self.grid.r, edge_order=2)

    def is_positive(self) -> bool:
        return bool(np.all(self.values[:-1] > 0))

    def sup(self) -> tuple[float, float]:
        i = int(np.argmax(np.abs(self.values)))
        return float(abs(self.values[i])), float(self.grid.r[i])

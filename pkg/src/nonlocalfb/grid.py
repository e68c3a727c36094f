"""Uniform 1-D grids, sampled fields and the fractional order parameter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Periodic-compatible uniform grid on [-L, L).

    Nodes are ``x_k = -L + k*h`` for ``k = 0..points-1`` with ``h = 2L/points``.
    The origin is the node ``points // 2`` and the node set is symmetric about 0
    once ``-L`` and ``L`` are identified.  For finite-volume use the nodes are
    the cell centres.
    """

    half_width: float
    points: int

    def __post_init__(self):
        if not (np.isfinite(self.half_width) and self.half_width > 0):
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        n = int(self.points)
        if n != self.points or n < 16 or n & (n - 1):
            raise ValueError(f"points must be a power of two >= 16, got {self.points}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.points)

    @property
    def origin(self) -> int:
        return self.points // 2

    def mirror(self, values: np.ndarray) -> np.ndarray:
        """Reflect a sampled function through the origin, f(x) -> f(-x)."""
        idx = (-np.arange(self.points)) % self.points
        return np.asarray(values)[idx]

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.half_width, self.points * factor)


@dataclass(frozen=True, eq=False)
class GridField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.points,):
            raise ValueError(
                f"expected {self.grid.points} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "GridField":
        return cls(grid, fn(grid.x))

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.spacing)

    def with_values(self, values) -> "GridField":
        return GridField(self.grid, values)

    def __len__(self):
        return self.grid.points


@dataclass(frozen=True)
class FracOrder:
    """Order ``s`` of (-Delta)^s, with ``sigma = 2s`` kept alongside."""

    s: float
    sigma: float = field(init=False)

    def __post_init__(self):
        s = float(self.s)
        if not (0.0 < s <= 1.0):
            raise ValueError(f"fractional order s must lie in (0, 1], got {self.s}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "sigma", 2.0 * s)

    @classmethod
    def from_sigma(cls, sigma: float) -> "FracOrder":
        return cls(sigma / 2.0)

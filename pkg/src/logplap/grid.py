"""Uniform 1D grids on a bounded interval and nodal grid functions.

Functions are represented by their values at the ``n`` interior nodes and
are understood to vanish identically outside ``(a, b)``.  For quadrature
every node owns a cell of width ``h`` centred on it, on which the function
is constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Grid", "GridFunction", "GridMismatchError", "build_grid", "lp_norm", "refine"]


class GridMismatchError(ValueError):
    """Raised when objects living on different grids are combined."""


@dataclass(frozen=True)
class Grid:
    a: float
    b: float
    n: int
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"grid endpoints must be finite, got a={self.a}, b={self.b}")
        if self.b <= self.a:
            raise ValueError(f"need b > a, got a={self.a}, b={self.b}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValueError(f"need a positive integer node count, got n={self.n}")
        h = (self.b - self.a) / (self.n + 1)
        nodes = self.a + h * np.arange(1, self.n + 1)
        nodes.setflags(write=False)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nodes", nodes)

    @property
    def length(self) -> float:
        return self.b - self.a

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.n))

    def function(self, f) -> "GridFunction":
        """Sample a callable ``f(x)`` at the nodes."""
        return GridFunction(self, np.asarray(f(self.nodes), dtype=float))

    def basis(self, i: int) -> "GridFunction":
        e = np.zeros(self.n)
        e[i] = 1.0
        return GridFunction(self, e)


def build_grid(a: float, b: float, n: int) -> Grid:
    """Uniform grid with ``n`` interior nodes ``a + (i+1) h``, ``h = (b-a)/(n+1)``."""
    return Grid(float(a), float(b), n)


def refine(grid: Grid) -> Grid:
    """The ``n -> 2n+1`` refinement: same interval, half the spacing."""
    return Grid(grid.a, grid.b, 2 * grid.n + 1)


class GridFunction:
    """Nodal values of a function on ``grid``; zero outside the interval.

    Immutable: the value array is copied and write-protected.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        vals = np.array(values, dtype=float)
        if vals.shape != (grid.n,):
            raise ValueError(f"expected {grid.n} nodal values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def __repr__(self):
        return f"GridFunction(n={self.grid.n}, max|u|={np.max(np.abs(self.values)) if self.grid.n else 0:.3g})"

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            check_same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._coerce(other) - self.values)

    def __mul__(self, t):
        if isinstance(t, GridFunction):
            return NotImplemented
        return GridFunction(self.grid, self.values * t)

    __rmul__ = __mul__

    def __truediv__(self, t):
        return GridFunction(self.grid, self.values / t)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def is_zero(self) -> bool:
        return not np.any(self.values)


def check_same_grid(g1: Grid, g2: Grid) -> None:
    if g1 is g2:
        return
    if (g1.a, g1.b, g1.n) != (g2.a, g2.b, g2.n):
        raise GridMismatchError(
            f"grid mismatch: ({g1.a}, {g1.b}, n={g1.n}) vs ({g2.a}, {g2.b}, n={g2.n})")


def lp_norm(u: GridFunction, p: float) -> float:
    """Discrete L^p norm ``(h * sum |u_i|^p)^(1/p)``."""
    if not p > 1:
        raise ValueError(f"need p > 1, got p={p}")
    return float((u.grid.h * np.sum(np.abs(u.values) ** p)) ** (1.0 / p))

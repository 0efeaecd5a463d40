"""Grünwald-Letnikov discretisation of Riemann-Liouville operators.

Functions on ``[0, T]`` are sampled at the nodes ``t_i = i h``.  A
:class:`GridFunction` stores only the interior values ``u_1 .. u_{n-1}``;
the boundary values are zero by construction.

The left derivative of such a function is sampled at the nodes
``t_1 .. t_n`` (one value per cell ``[t_{i-1}, t_i]``), so the left operator
is an ``n x (n-1)`` lower-trapezoidal matrix.  Keeping the row at ``t_n``
is what makes the discrete norm see the homogeneous condition ``u(T) = 0``.
The right operator is its exact transpose: it maps values at ``t_1 .. t_n``
back to the interior nodes, which is the discrete integration by parts used
by the weak form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, DomainError

MIN_INTERVALS = 4


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``n`` subintervals on ``[0, T]``."""

    T: float
    n: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise DomainError(f"grid horizon T must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < MIN_INTERVALS:
            raise DomainError(f"grid needs an integer n >= {MIN_INTERVALS}, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def h(self) -> float:
        return self.T / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.T, self.n + 1)
        t.setflags(write=False)
        return t

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def cells(self) -> np.ndarray:
        """Right endpoints ``t_1 .. t_n`` where left derivatives are sampled."""
        return self.nodes[1:]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Interior samples of a function vanishing at both ends of the grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n - 1,):
            raise DimensionError(
                f"expected {self.grid.n - 1} interior values, got shape {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, fn(grid.interior))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.n - 1))

    def full(self) -> np.ndarray:
        """Values at all ``n + 1`` nodes, boundary zeros included."""
        return np.concatenate(([0.0], self.values, [0.0]))

    def scaled(self, s: float) -> "GridFunction":
        return GridFunction(self.grid, s * self.values)

    def __neg__(self):
        return self.scaled(-1.0)


def gl_weights(alpha: float, m: int) -> np.ndarray:
    """Signed binomial weights ``w_k = (-1)^k C(alpha, k)`` for ``k = 0..m``."""
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"order alpha must lie in (0, 1], got {alpha}")
    if m < 0:
        raise DomainError(f"weight count must be non-negative, got {m}")
    k = np.arange(1, m + 1, dtype=float)
    return np.concatenate(([1.0], np.cumprod(1.0 - (alpha + 1.0) / k)))


def gl_matrix(alpha: float, size: int, h: float) -> np.ndarray:
    """Full lower-triangular Toeplitz GL matrix acting on ``size`` nodes.

    Row ``i`` approximates the left derivative at node ``i`` from the samples
    at nodes ``0..i``.  Useful for functions that do not vanish at the ends.
    """
    w = gl_weights(alpha, size - 1)
    i, j = np.indices((size, size))
    return np.where(i >= j, w[np.clip(i - j, 0, None)], 0.0) * h ** (-alpha)


@dataclass(frozen=True, eq=False)
class FracOperator:
    alpha: float
    side: Side
    grid: Grid
    matrix: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.grid.h

    def transposed(self) -> "FracOperator":
        other = Side.RIGHT if self.side is Side.LEFT else Side.LEFT
        return FracOperator(self.alpha, other, self.grid, self.matrix.T)

    def __call__(self, u):
        return apply(self, u)


def build_operator(grid: Grid, alpha: float, side: Side | str = Side.LEFT, p: float | None = None) -> FracOperator:
    """Left or right GL derivative of order ``alpha`` on ``grid``.

    The left matrix has entries ``h^-alpha w_{i-j}`` for ``1 <= j <= i``,
    rows indexed by ``t_1 .. t_n`` and columns by the interior nodes.  If
    ``p`` is given, ``alpha > 1/p`` is enforced.
    """
    side = Side(side)
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"order alpha must lie in (0, 1], got {alpha}")
    if p is not None and alpha * p <= 1.0:
        raise DomainError(f"alpha ≤ 1/p: alpha={alpha} must exceed 1/p={1.0 / p}")
    n = grid.n
    full = gl_matrix(alpha, n + 1, grid.h)
    left = np.ascontiguousarray(full[1:, 1:n])
    mat = left if side is Side.LEFT else np.ascontiguousarray(left.T)
    mat.setflags(write=False)
    return FracOperator(float(alpha), side, grid, mat)


def apply(op: FracOperator, u) -> np.ndarray:
    """Apply ``op`` to interior samples (left) or cell samples (right).

    Left operators take a :class:`GridFunction` (or ``n - 1`` interior
    values) and return ``n`` values at ``t_1 .. t_n``.  Right operators take
    ``n`` values at ``t_1 .. t_n`` and return ``n - 1`` interior values.
    """
    if isinstance(u, GridFunction):
        if u.grid != op.grid:
            raise DimensionError(f"grid mismatch: operator on {op.grid}, function on {u.grid}")
        u = u.values
    u = np.asarray(u, dtype=float)
    if u.shape[0] != op.matrix.shape[1]:
        raise DimensionError(
            f"{op.side.value} operator expects {op.matrix.shape[1]} values, got {u.shape[0]}"
        )
    return op.matrix @ u


def rl_integral(samples, gamma: float, h: float, side: Side | str = Side.LEFT) -> np.ndarray:
    """Product-rectangle quadrature of the Riemann-Liouville integral.

    ``samples`` holds values at all nodes ``0..n``.  On each cell the
    integrand is frozen at the endpoint farther from the evaluation point and
    the kernel ``|t - s|^(gamma-1) / Gamma(gamma)`` is integrated exactly, so
    constants are integrated without error.  Testing oracle only.
    """
    if not gamma > 0:
        raise DomainError(f"integral order gamma must be positive, got {gamma}")
    side = Side(side)
    u = np.asarray(samples, dtype=float)
    if side is Side.RIGHT:
        return rl_integral(u[::-1], gamma, h, Side.LEFT)[::-1]
    n = u.shape[0] - 1
    m = np.arange(n, dtype=float)
    c = h**gamma * ((m + 1.0) ** gamma - m**gamma) / math.gamma(gamma + 1.0)
    out = np.zeros(n + 1)
    out[1:] = np.convolve(u[1:], c)[:n]
    return out

"""Staggered space/time meshes and the discrete integrals defined on them.

Space: primal points ``x_i = i h`` for ``i = 0..N+1`` (``x_0`` and ``x_{N+1}``
are the boundary), dual points ``x_{i+1/2}`` for ``i = 0..N``.

Time: primal points ``t_n = n dt`` for ``n = 0..M``, dual points
``t_{n+1/2}`` for ``n = 0..M``.  The last dual point ``t_{M+1/2}`` lies
outside ``[0, T]``.

A :class:`GridFunction` stores its values as a time-major ``(n_t, n_x)``
array and carries its placement, which every operation checks.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import PlacementError

SPACE_PLACEMENTS = ("primal_interior", "primal_with_boundary", "dual")
TIME_PLACEMENTS = (
    "primal",           # t_1 .. t_M
    "primal_extended",  # t_0 .. t_M
    "dual",             # t_{1/2} .. t_{M-1/2}
    "dual_extended",    # t_{1/2} .. t_{M+1/2}
    "single_instant",
)


@dataclass(frozen=True)
class SpaceMesh:
    """Uniform mesh of ``(0, L)`` with ``N`` interior points."""

    L: float
    N: int

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"domain length must be positive, got {self.L}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"interior point count must be an integer >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @classmethod
    def from_spacing(cls, L, h):
        n = int(round(L / h)) - 1
        if abs((n + 1) * h - L) > 1e-12 * L:
            raise ValueError(f"h={h} does not divide L={L}")
        return cls(L, n)

    @property
    def h(self):
        return self.L / (self.N + 1)

    @property
    def boundary(self):
        return (0.0, self.L)

    def points(self, placement="primal_interior"):
        h = self.h
        if placement == "primal_interior":
            return h * np.arange(1, self.N + 1)
        if placement == "primal_with_boundary":
            return h * np.arange(0, self.N + 2)
        if placement == "dual":
            return h * (np.arange(0, self.N + 1) + 0.5)
        raise PlacementError(f"unknown space placement {placement!r}")

    def count(self, placement):
        return {"primal_interior": self.N, "primal_with_boundary": self.N + 2,
                "dual": self.N + 1}[_check_space(placement)]

    def indicator(self, omega, placement="primal_interior"):
        """Boolean mask of the mesh points lying in the open interval ``omega``."""
        a, b = omega
        x = self.points(placement)
        return (x > a) & (x < b)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``[0, T]`` with ``M`` steps of size ``dt = T / M``."""

    T: float
    M: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"step count must be an integer >= 1, got {self.M}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self):
        return self.T / self.M

    def points(self, placement="primal"):
        dt, M = self.dt, self.M
        if placement == "primal":
            return dt * np.arange(1, M + 1)
        if placement == "primal_extended":
            return dt * np.arange(0, M + 1)
        if placement == "dual":
            return dt * (np.arange(0, M) + 0.5)
        if placement == "dual_extended":
            return dt * (np.arange(0, M + 1) + 0.5)
        raise PlacementError(f"unknown time placement {placement!r}")

    def count(self, placement):
        if placement == "single_instant":
            return 1
        return {"primal": self.M, "primal_extended": self.M + 1, "dual": self.M,
                "dual_extended": self.M + 1}[_check_time(placement)]


@dataclass(frozen=True)
class SpaceTimeGrid:
    space: SpaceMesh
    time: TimeGrid

    @classmethod
    def uniform(cls, L, N, T, M):
        return cls(SpaceMesh(L, N), TimeGrid(T, M))

    @property
    def h(self):
        return self.space.h

    @property
    def dt(self):
        return self.time.dt

    @property
    def N(self):
        return self.space.N

    @property
    def M(self):
        return self.time.M


def _check_space(placement):
    if placement not in SPACE_PLACEMENTS:
        raise PlacementError(f"unknown space placement {placement!r}")
    return placement


def _check_time(placement):
    if placement not in TIME_PLACEMENTS:
        raise PlacementError(f"unknown time placement {placement!r}")
    return placement


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a discrete field together with their mesh placement."""

    grid: SpaceTimeGrid
    values: np.ndarray
    space: str = "primal_interior"
    time: str = "single_instant"
    instant: float = field(default=None)

    def __post_init__(self):
        _check_space(self.space)
        _check_time(self.time)
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[None, :]
        expected = (self.grid.time.count(self.time), self.grid.space.count(self.space))
        if vals.shape != expected:
            raise PlacementError(
                f"values of shape {vals.shape} do not match placement "
                f"({self.space}, {self.time}) which needs {expected}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def sample(cls, grid, func, space="primal_interior", time="single_instant", instant=0.0):
        """Sample ``func(t, x)`` (or ``func(x)`` for a single instant)."""
        x = grid.space.points(space)
        if time == "single_instant":
            return cls(grid, np.asarray(func(x), dtype=float) + 0.0 * x, space, time, instant)
        t = grid.time.points(time)
        tt, xx = np.meshgrid(t, x, indexing="ij")
        return cls(grid, func(tt, xx), space, time)

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_instant(self):
        return self.time == "single_instant"

    def like(self, values):
        return GridFunction(self.grid, values, self.space, self.time, self.instant)

    def at(self, k):
        """Slice ``k`` (row index into the stored time axis) as a single instant."""
        t = None if self.is_instant else float(self.grid.time.points(self.time)[k])
        return GridFunction(self.grid, self.values[k], self.space, "single_instant", t)

    def instant_values(self):
        if not self.is_instant:
            raise PlacementError(f"expected a single instant, got time placement {self.time!r}")
        return self.values[0]

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            check_same_placement(self, other)
            return self.like(op(self.values, other.values))
        return self.like(op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)


def check_same_placement(u, v):
    if u.grid != v.grid:
        raise PlacementError("grid functions live on different grids")
    if (u.space, u.time) != (v.space, v.time):
        raise PlacementError(
            f"placement mismatch: ({u.space}, {u.time}) vs ({v.space}, {v.time})")


def _require_space(u, allowed):
    if u.space not in allowed:
        raise PlacementError(f"space placement {u.space!r} not in {allowed}")


def integral_space(u):
    """Discrete integral over ``Omega`` of a single-instant function."""
    _require_space(u, ("primal_interior", "dual"))
    return float(u.grid.h * np.sum(u.instant_values()))


def _time_weights(grid, placement, n):
    if placement in ("primal", "dual"):
        if n != grid.M:
            raise PlacementError(f"time series has {n} entries, grid has M={grid.M}")
        return grid.dt
    raise PlacementError(f"no discrete time integral on placement {placement!r}")


def integral_time_primal(u, time_grid):
    """``sum_{n=1}^{M} dt u^n`` for a series on ``t_1 .. t_M``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (time_grid.M,):
        raise PlacementError(f"expected {time_grid.M} primal values, got shape {u.shape}")
    return float(time_grid.dt * np.sum(u))


def integral_time_dual(u, time_grid):
    """``sum_{n=0}^{M-1} dt u^{n+1/2}`` for a series on ``t_{1/2} .. t_{M-1/2}``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (time_grid.M,):
        raise PlacementError(f"expected {time_grid.M} dual values, got shape {u.shape}")
    return float(time_grid.dt * np.sum(u))


def integral_spacetime(u):
    """Double discrete integral over ``Q`` (primal or dual in time)."""
    _require_space(u, ("primal_interior", "dual"))
    dt = _time_weights(u.grid, u.time, u.shape[0])
    return float(dt * u.grid.h * np.sum(u.values))


def inner_product(u, v):
    """Discrete L2 inner product; space-only for instants, space-time otherwise."""
    check_same_placement(u, v)
    _require_space(u, ("primal_interior", "dual"))
    prod = u.values * v.values
    if u.is_instant:
        return float(u.grid.h * np.sum(prod))
    return integral_spacetime(u.like(prod))


def norm_l2(u):
    return float(np.sqrt(inner_product(u, u)))


def norm_linf(u):
    vals = u.values
    if u.space == "primal_with_boundary":
        vals = vals[:, 1:-1]
    return float(np.max(np.abs(vals)))


def norm_l2_restricted(u, omega):
    """L2 norm over the mesh points lying strictly inside ``omega``."""
    _require_space(u, ("primal_interior", "dual"))
    mask = u.grid.space.indicator(omega, u.space)
    sq = u.values[:, mask] ** 2
    if u.is_instant:
        return float(np.sqrt(u.grid.h * np.sum(sq)))
    dt = _time_weights(u.grid, u.time, u.shape[0])
    return float(np.sqrt(dt * u.grid.h * np.sum(sq)))

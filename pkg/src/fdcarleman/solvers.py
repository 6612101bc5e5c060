"""Implicit Euler solvers for the controlled heat equation and its adjoint.

Forward scheme, for ``n = 0 .. M-1``::

    (y^{n+1} - y^n) / dt - Delta_h y^{n+1} + a^{n+1} y^{n+1} = 1_omega v^{n+1/2}

Adjoint scheme, from ``q^{M+1/2} = q_T`` down to ``q^{1/2}``::

    -(q^{n+1/2} - q^{n-1/2}) / dt - Delta_h q^{n-1/2} + a^n q^{n-1/2} = 0

Each step is a symmetric tridiagonal solve done with the Thomas algorithm.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import PlacementError, StabilityError
from .mesh import GridFunction


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Bounded potential sampled at ``(t_n, x_i)``, ``n = 1..M``, ``i = 1..N``."""

    grid: object
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        expected = (self.grid.M, self.grid.N)
        if vals.shape != expected:
            raise PlacementError(f"potential has shape {vals.shape}, expected {expected}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros((grid.M, grid.N)))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full((grid.M, grid.N), float(c)))

    @classmethod
    def sample(cls, grid, func):
        t = grid.time.points("primal")
        x = grid.space.points("primal_interior")
        tt, xx = np.meshgrid(t, x, indexing="ij")
        return cls(grid, np.broadcast_to(func(tt, xx), tt.shape))

    @property
    def norm_inf(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def restrict(self, grid, n_steps):
        """Potential on the first ``n_steps`` instants, attached to ``grid``."""
        return PotentialField(grid, self.values[:n_steps])

    def tail(self, grid, start):
        return PotentialField(grid, self.values[start:])


class TridiagonalSystem:
    """Tridiagonal matrix with a precomputed Thomas factorisation.

    ``solve`` accepts a right-hand side of shape ``(N,)`` or ``(N, k)``.
    """

    def __init__(self, sub, main, sup):
        self.sub = np.asarray(sub, dtype=float)
        self.main = np.asarray(main, dtype=float)
        self.sup = np.asarray(sup, dtype=float)
        n = self.main.size
        if self.sub.size != n - 1 or self.sup.size != n - 1:
            raise ValueError("off-diagonals must have one entry fewer than the diagonal")
        # forward sweep: c'_i = c_i / (b_i - a_i c'_{i-1}); keep the denominators
        cp = np.empty(max(n - 1, 0))
        den = np.empty(n)
        den[0] = self.main[0]
        for i in range(n - 1):
            if den[i] == 0:
                raise ZeroDivisionError("zero pivot in Thomas factorisation")
            cp[i] = self.sup[i] / den[i]
            den[i + 1] = self.main[i + 1] - self.sub[i] * cp[i]
        if den[-1] == 0:
            raise ZeroDivisionError("zero pivot in Thomas factorisation")
        self._cp = cp
        self._den = den

    def solve(self, rhs):
        d = np.array(rhs, dtype=float)
        n = self.main.size
        if d.shape[0] != n:
            raise ValueError(f"right-hand side has {d.shape[0]} rows, system has {n}")
        cp, den, sub = self._cp, self._den, self.sub
        d[0] /= den[0]
        for i in range(1, n):
            d[i] = (d[i] - sub[i - 1] * d[i - 1]) / den[i]
        for i in range(n - 2, -1, -1):
            d[i] -= cp[i] * d[i + 1]
        return d

    def dense(self):
        return np.diag(self.main) + np.diag(self.sup, 1) + np.diag(self.sub, -1)

    def is_diagonally_dominant(self):
        off = np.zeros_like(self.main)
        off[:-1] += np.abs(self.sup)
        off[1:] += np.abs(self.sub)
        return bool(np.all(np.abs(self.main) > off))


def thomas_solve(sub, main, sup, rhs):
    return TridiagonalSystem(sub, main, sup).solve(rhs)


def step_matrix(h, dt, a_row):
    """``I/dt - Delta_h + diag(a)`` on the interior nodes."""
    a_row = np.asarray(a_row, dtype=float)
    n = a_row.size
    off = np.full(n - 1, -1.0 / h**2)
    return TridiagonalSystem(off, 1.0 / dt + 2.0 / h**2 + a_row, off)


class _StepCache:
    """Refactor only when the potential row changes (constant ``a`` is common)."""

    def __init__(self, h, dt):
        self.h, self.dt = h, dt
        self._row = None
        self._sys = None

    def get(self, a_row):
        if self._row is None or not np.array_equal(a_row, self._row):
            self._row = np.array(a_row)
            self._sys = step_matrix(self.h, self.dt, a_row)
        return self._sys


def check_stability(grid, potential):
    """Require ``dt |a|_inf < 1/4``."""
    prod = grid.dt * potential.norm_inf
    if not prod < 0.25:
        raise StabilityError(
            f"dt * |a|_inf = {prod:.6g} must be < 1/4 (dt={grid.dt:.6g}, "
            f"|a|_inf={potential.norm_inf:.6g})")


def _potential(grid, a):
    if a is None:
        return PotentialField.zero(grid)
    if isinstance(a, PotentialField):
        if a.grid != grid:
            raise PlacementError("potential lives on a different grid")
        return a
    if np.isscalar(a):
        return PotentialField.constant(grid, a)
    return PotentialField(grid, a)


def _initial(grid, g):
    if isinstance(g, GridFunction):
        if not g.is_instant or g.space != "primal_interior":
            raise PlacementError("initial data must be a single instant on primal_interior")
        return g.instant_values()
    g = np.asarray(g, dtype=float)
    if g.shape != (grid.N,):
        raise PlacementError(f"initial data has shape {g.shape}, expected ({grid.N},)")
    return g


def _control(grid, v, omega):
    if v is None:
        return None
    vals = v.values if isinstance(v, GridFunction) else np.asarray(v, dtype=float)
    if isinstance(v, GridFunction) and (v.space, v.time) != ("primal_interior", "dual"):
        raise PlacementError("control must live on (primal_interior, dual)")
    if vals.shape != (grid.M, grid.N):
        raise PlacementError(f"control has shape {vals.shape}, expected {(grid.M, grid.N)}")
    if omega is not None:
        vals = vals * grid.space.indicator(omega)
    return vals


def solve_forward(grid, g, v=None, a=None, omega=None):
    """Trajectory ``y^0 .. y^M`` on ``(primal_interior, primal_extended)``.

    ``v`` lives on the dual instants ``t_{n+1/2}``; when ``omega`` is given
    it is multiplied by the indicator of ``omega``.
    """
    pot = _potential(grid, a)
    check_stability(grid, pot)
    y0 = _initial(grid, g)
    vals = _control(grid, v, omega)
    dt = grid.dt
    cache = _StepCache(grid.h, dt)
    y = np.empty((grid.M + 1, grid.N))
    y[0] = y0
    for n in range(grid.M):
        rhs = y[n] / dt
        if vals is not None:
            rhs = rhs + vals[n]
        y[n + 1] = cache.get(pot.values[n]).solve(rhs)
    return GridFunction(grid, y, "primal_interior", "primal_extended")


def solve_adjoint(grid, q_T, a=None):
    """Adjoint state ``q^{1/2} .. q^{M+1/2}`` on ``(primal_interior, dual_extended)``."""
    pot = _potential(grid, a)
    check_stability(grid, pot)
    qT = _initial(grid, q_T)
    dt = grid.dt
    cache = _StepCache(grid.h, dt)
    q = np.empty((grid.M + 1, grid.N))
    q[grid.M] = qT
    for n in range(grid.M, 0, -1):
        q[n - 1] = cache.get(pot.values[n - 1]).solve(q[n] / dt)
    return GridFunction(grid, q, "primal_interior", "dual_extended")


def forward_block(grid, G, V, a=None):
    """Forward solve for ``k`` stacked problems at once (columns of ``G``).

    ``G`` has shape ``(N, k)`` and ``V`` shape ``(M, N, k)`` or ``None``;
    returns ``y^M`` with shape ``(N, k)``.  Used to assemble dense oracles.
    """
    pot = _potential(grid, a)
    check_stability(grid, pot)
    dt = grid.dt
    cache = _StepCache(grid.h, dt)
    y = np.array(G, dtype=float)
    for n in range(grid.M):
        rhs = y / dt
        if V is not None:
            rhs = rhs + V[n]
        y = cache.get(pot.values[n]).solve(rhs)
    return y


def adjoint_block(grid, QT, a=None):
    """Adjoint solve for stacked terminal data; returns shape ``(M+1, N, k)``."""
    pot = _potential(grid, a)
    check_stability(grid, pot)
    dt = grid.dt
    cache = _StepCache(grid.h, dt)
    QT = np.asarray(QT, dtype=float)
    q = np.empty((grid.M + 1,) + QT.shape)
    q[grid.M] = QT
    for n in range(grid.M, 0, -1):
        q[n - 1] = cache.get(pot.values[n - 1]).solve(q[n] / dt)
    return q


# -- semilinear ----------------------------------------------------------------

@dataclass(frozen=True)
class Nonlinearity:
    """A ``C^1`` globally Lipschitz ``f`` with ``f(0) = 0``.

    ``slope_at_zero`` is ``f'(0)``, the value given to ``f(s)/s`` at ``s = 0``.
    """

    func: object
    slope_at_zero: float
    lipschitz: float
    name: str = "custom"

    def __post_init__(self):
        if abs(float(self.func(np.array([0.0]))[0])) > 1e-14:
            raise ValueError("nonlinearity must satisfy f(0) = 0")
        if not self.lipschitz >= 0:
            raise ValueError("Lipschitz constant must be nonnegative")

    def __call__(self, s):
        return self.func(np.asarray(s, dtype=float))

    @classmethod
    def zero(cls):
        return cls(np.zeros_like, 0.0, 0.0, "zero")

    @classmethod
    def linear(cls, c):
        c = float(c)
        return cls(lambda s: c * s, c, abs(c), f"linear({c:g})")

    @classmethod
    def sine(cls, amplitude=1.0):
        amp = float(amplitude)
        return cls(lambda s: amp * np.sin(s), amp, abs(amp), f"sine({amp:g})")

    @classmethod
    def tabulated(cls, s_points, f_values):
        """Piecewise-linear ``f`` through the given nodes (extended linearly)."""
        s = np.asarray(s_points, dtype=float)
        f = np.asarray(f_values, dtype=float)
        if s.ndim != 1 or s.shape != f.shape or s.size < 2:
            raise ValueError("tabulated nonlinearity needs two matching 1-D arrays, length >= 2")
        if np.any(np.diff(s) <= 0):
            raise ValueError("tabulated abscissae must be strictly increasing")
        slopes = np.diff(f) / np.diff(s)
        k = np.searchsorted(s, 0.0)
        if k == s.size or s[k] != 0.0:
            raise ValueError("tabulated nonlinearity must contain the node s = 0")
        slope0 = slopes[min(k, slopes.size - 1)]

        def func(x):
            x = np.asarray(x, dtype=float)
            idx = np.clip(np.searchsorted(s, x) - 1, 0, slopes.size - 1)
            return f[idx] + slopes[idx] * (x - s[idx])

        return cls(func, float(slope0), float(np.max(np.abs(slopes))), "tabulated")


def semilinear_potential(f, zeta):
    """``g(zeta) = f(zeta) / zeta`` with ``g(0) = f'(0)``."""
    zeta = np.asarray(zeta, dtype=float)
    out = np.full(zeta.shape, float(f.slope_at_zero))
    nz = zeta != 0
    out[nz] = f(zeta[nz]) / zeta[nz]
    return out


def semilinear_step(grid, y_prev, v_slice, f, zeta=None, omega=None):
    """One implicit step with the frozen potential ``g(zeta)`` (``zeta`` defaults to ``y_prev``).

    ``v_slice`` is ``v^{n+1/2}``; it is masked by ``omega`` when given.
    """
    y_prev = np.asarray(y_prev, dtype=float)
    zeta = y_prev if zeta is None else np.asarray(zeta, dtype=float)
    pot = semilinear_potential(f, zeta)
    if not np.all(np.isfinite(pot)):
        raise ValueError("nonlinearity returned non-finite values")
    if not grid.dt * np.max(np.abs(pot), initial=0.0) < 0.25:
        raise StabilityError("dt * |g(zeta)|_inf must be < 1/4")
    rhs = y_prev / grid.dt
    if v_slice is not None:
        v = np.asarray(v_slice, dtype=float)
        rhs = rhs + (v * grid.space.indicator(omega) if omega is not None else v)
    return step_matrix(grid.h, grid.dt, pot).solve(rhs)


def semilinear_residual(grid, y, v, f, omega):
    """Max-norm residual of ``D_t y - Delta_h t+y + f(t+y) - 1_omega v``."""
    yv = y.values if isinstance(y, GridFunction) else np.asarray(y)
    vv = v.values if isinstance(v, GridFunction) else np.asarray(v)
    h, dt = grid.h, grid.dt
    ynext = yv[1:]
    padded = np.pad(ynext, ((0, 0), (1, 1)))
    lap = (padded[:, 2:] - 2 * padded[:, 1:-1] + padded[:, :-2]) / h**2
    res = (yv[1:] - yv[:-1]) / dt - lap + f(ynext) - vv * grid.space.indicator(omega)
    return float(np.max(np.abs(res)))

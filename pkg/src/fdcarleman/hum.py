"""Penalised HUM controls computed by conjugate gradient on the Gramian.

For terminal adjoint data ``q_T`` the Gramian is

    Lambda q_T = y^M   where  y = solve_forward(0, 1_omega q, a),  q = solve_adjoint(q_T, a)

and the minimiser ``q_hat_T`` of

    J(q_T) = 1/2 |q|^2_{L2(omega x (0,T))} + phi/2 |q_T|^2 + (g, q^{1/2})

solves ``(Lambda + phi I) q_hat_T = -y_free^M``.  The control is
``v = 1_omega q_hat`` and the controlled state satisfies ``y^M = -phi q_hat_T``.
"""
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConvergenceError, LongHorizonError, PlacementError
from .mesh import GridFunction, SpaceTimeGrid, TimeGrid, norm_l2, norm_l2_restricted
from .solvers import (PotentialField, _potential, adjoint_block, check_stability,
                      forward_block, semilinear_potential, semilinear_residual,
                      solve_adjoint, solve_forward)
from .weights import calibrate, penalty


@dataclass(frozen=True, eq=False)
class ControlProblem:
    grid: SpaceTimeGrid
    omega: tuple
    g: np.ndarray
    potential: PotentialField = None
    theta_exp: int = 4
    phi: float = None
    c2: float = 0.05
    cg_tol: float = 1e-10
    cg_max_iter: int = None

    def __post_init__(self):
        grid = self.grid
        a, b = (float(w) for w in self.omega)
        if not 0 <= a < b <= grid.space.L:
            raise ValueError(f"omega={self.omega} must be a nonempty subinterval of (0, L)")
        if not grid.space.indicator((a, b)).any():
            raise ValueError(f"omega={self.omega} contains no interior mesh point")
        object.__setattr__(self, "omega", (a, b))
        g = np.array(self.g, dtype=float)
        if g.shape != (grid.N,):
            raise PlacementError(f"initial data has shape {g.shape}, expected ({grid.N},)")
        if not np.all(np.isfinite(g)):
            raise ValueError("initial data must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "potential", _potential(grid, self.potential))
        if self.theta_exp not in (1, 2, 3, 4):
            raise ValueError(f"theta_exp must be an integer in [1, 4], got {self.theta_exp}")
        if self.phi is None:
            object.__setattr__(self, "phi", penalty(grid.h, self.theta_exp, self.c2))
        if not self.phi > 0:
            raise ValueError("penalty phi must be positive")
        if not self.cg_tol > 0:
            raise ValueError("cg_tol must be positive")
        if self.cg_max_iter is None:
            object.__setattr__(self, "cg_max_iter", 5 * grid.N)
        check_stability(grid, self.potential)

    @property
    def mask(self):
        return self.grid.space.indicator(self.omega)

    def with_potential(self, potential):
        return replace(self, potential=potential)


def gramian_apply(problem, q_T):
    """``(Lambda + phi I) q_T``."""
    grid = problem.grid
    q = solve_adjoint(grid, q_T, problem.potential)
    v = q.values[: grid.M] * problem.mask
    y = solve_forward(grid, np.zeros(grid.N), v, problem.potential)
    return y.values[-1] + problem.phi * np.asarray(q_T, dtype=float)


def dense_gramian(problem):
    """Dense ``Lambda + phi I`` assembled column by column (test oracle)."""
    grid = problem.grid
    eye = np.eye(grid.N)
    q = adjoint_block(grid, eye, problem.potential)
    V = q[: grid.M] * problem.mask[None, :, None]
    yM = forward_block(grid, np.zeros((grid.N, grid.N)), V, problem.potential)
    return yM + problem.phi * eye


def conjugate_gradient(apply, b, tol, max_iter):
    """Plain CG for an SPD operator; stops on ``|r| <= tol |b|`` (true residual).

    Returns ``(x, iterations, history)`` where ``history`` holds relative
    residuals, or raises :class:`ConvergenceError` carrying the history.
    """
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    history = [1.0 if bnorm > 0 else 0.0]
    if bnorm == 0:
        return x, 0, history
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    it = 0
    while it < max_iter:
        Ap = apply(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise ConvergenceError(f"operator is not positive definite (p.Ap={pAp:.3g})",
                                   history)
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        it += 1
        rr_new = float(r @ r)
        history.append(math.sqrt(rr_new) / bnorm)
        if history[-1] <= tol:
            # confirm with the true residual and restart from it if it drifted
            r = b - apply(x)
            rr_new = float(r @ r)
            history[-1] = math.sqrt(rr_new) / bnorm
            if history[-1] <= tol:
                return x, it, history
            p = r.copy()
            rr = rr_new
            continue
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise ConvergenceError(
        f"CG did not reach tol={tol:g} in {max_iter} iterations "
        f"(relative residual {history[-1]:.3g})", history)


@dataclass(eq=False)
class HUMSolution:
    problem: ControlProblem
    q_hat_T: np.ndarray
    q: GridFunction
    v: GridFunction
    y: GridFunction
    cg_iterations: int
    residual_history: list
    ledger: object = None
    extra: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.y.grid

    @property
    def relative_residual(self):
        return self.residual_history[-1]

    @property
    def g_norm(self):
        return norm_l2(self.y.at(0))

    @property
    def v_norm(self):
        return norm_l2_restricted(self.v, self.problem.omega)

    @property
    def yM_norm(self):
        return norm_l2(self.y.at(-1))

    @property
    def phi(self):
        return self.problem.phi

    def target_gap(self):
        """``|y^M + phi q_hat_T| / (|y^M| + phi |q_hat_T|)``; zero up to CG error."""
        yM = self.y.values[-1]
        gap = np.linalg.norm(yM + self.phi * self.q_hat_T)
        scale = np.linalg.norm(yM) + self.phi * np.linalg.norm(self.q_hat_T)
        return float(gap / scale) if scale > 0 else 0.0

    def cost(self):
        return cost_functional(self.problem, self.q_hat_T)

    def to_dict(self):
        out = {
            "h": self.problem.grid.h,
            "dt": self.problem.grid.dt,
            "N": self.problem.grid.N,
            "M": self.problem.grid.M,
            "T": self.problem.grid.time.T,
            "omega": list(self.problem.omega),
            "phi": self.phi,
            "a_norm_inf": self.problem.potential.norm_inf,
            "g_norm": self.g_norm,
            "v_norm": self.v_norm,
            "yM_norm": self.yM_norm,
            "ratio_yM_over_sqrt_phi_g": _safe_ratio(self.yM_norm, math.sqrt(self.phi) * self.g_norm),
            "ratio_v_over_g": _safe_ratio(self.v_norm, self.g_norm),
            "cg_iterations": self.cg_iterations,
            "cg_relative_residual": self.relative_residual,
            "target_gap": self.target_gap(),
            "cost": self.cost(),
            "ledger": self.ledger.to_dict() if self.ledger is not None else None,
        }
        out.update(self.extra)
        return out

    def trajectory_rows(self):
        """Rows ``(n, t_n, x_i, y^n_i, v^{n+1/2}_i)``; ``v`` is 0 on the row ``n = M``."""
        grid = self.grid
        t = grid.time.points("primal_extended")
        x = grid.space.points("primal_interior")
        v = np.vstack([self.v.values, np.zeros((1, grid.N))])
        for n in range(grid.M + 1):
            for i in range(grid.N):
                yield n, float(t[n]), float(x[i]), float(self.y.values[n, i]), float(v[n, i])


def _safe_ratio(num, den):
    return float(num / den) if den > 0 else 0.0


def assess(problem, constants=None):
    """Non-strict parameter ledger for a problem (reported, never enforced)."""
    ledger = calibrate(problem.grid, problem.potential.norm_inf, problem.theta_exp,
                       constants, strict=False)
    if problem.phi < 1e-12:
        ledger.warnings.append(f"phi(h)={problem.phi:.3g} < 1e-12")
    if not ledger.feasible:
        ledger.warnings.append("violated: " + ", ".join(ledger.violated))
    return ledger


def solve_hum(problem, constants=None, enforce=False):
    """Penalised HUM control of ``problem``.

    The parameter ledger is recorded on the solution.  With ``enforce`` an
    infeasible ledger raises, otherwise it only warns.
    """
    grid = problem.grid
    if enforce:
        ledger = calibrate(grid, problem.potential.norm_inf, problem.theta_exp, constants)
    else:
        ledger = assess(problem, constants)
        if not ledger.feasible:
            warnings.warn("Carleman parameter ledger infeasible at this resolution: "
                          + ", ".join(ledger.violated), RuntimeWarning, stacklevel=2)
    free = solve_forward(grid, problem.g, None, problem.potential)
    b = -free.values[-1]
    q_hat, iters, hist = conjugate_gradient(lambda p: gramian_apply(problem, p), b,
                                            problem.cg_tol, problem.cg_max_iter)
    q = solve_adjoint(grid, q_hat, problem.potential)
    v_vals = q.values[: grid.M] * problem.mask
    v = GridFunction(grid, v_vals, "primal_interior", "dual")
    y = solve_forward(grid, problem.g, v_vals, problem.potential)
    return HUMSolution(problem, q_hat, q, v, y, iters, hist, ledger)


def cost_functional(problem, q_T):
    grid = problem.grid
    q_T = np.asarray(q_T, dtype=float)
    q = solve_adjoint(grid, q_T, problem.potential)
    qd = GridFunction(grid, q.values[: grid.M], "primal_interior", "dual")
    obs = norm_l2_restricted(qd, problem.omega) ** 2
    return float(0.5 * obs + 0.5 * problem.phi * grid.h * q_T @ q_T
                 + grid.h * problem.g @ q.values[0])


# -- long horizon ---------------------------------------------------------------

def solve_hum_long_horizon(problem, T0=0.5, constants=None):
    """Control on ``[0, T0']`` then free evolution up to ``T``.

    ``T0' = M0 dt`` with ``M0 = floor(T0 / dt)`` so that the first phase ends
    on a grid instant.  The returned solution covers the whole horizon; its
    ``extra`` records ``M0`` and the dissipation factor
    ``kappa = (1 - 2 dt |a|)^-(M - M0)`` bounding ``|y^M|^2 / |y^{M0}|^2``.
    """
    grid = problem.grid
    if not 0 < T0 < 1:
        raise LongHorizonError(f"first-phase horizon must lie in (0, 1), got {T0}")
    dt = grid.dt
    M0 = int(math.floor(T0 / dt * (1 + 1e-12)))
    if M0 < 1:
        raise LongHorizonError(f"T0={T0} is shorter than one time step dt={dt}")
    if M0 >= grid.M:
        return solve_hum(problem, constants)
    g1 = SpaceTimeGrid(grid.space, TimeGrid(M0 * dt, M0))
    g2 = SpaceTimeGrid(grid.space, TimeGrid((grid.M - M0) * dt, grid.M - M0))
    pot = problem.potential
    sub = replace(problem, grid=g1, potential=pot.restrict(g1, M0), phi=problem.phi)
    first = solve_hum(sub, constants)
    tail = solve_forward(g2, first.y.values[-1], None, pot.tail(g2, M0))
    y = np.vstack([first.y.values, tail.values[1:]])
    v = np.vstack([first.v.values, np.zeros((grid.M - M0, grid.N))])
    a = pot.norm_inf
    kappa = (1 - 2 * dt * a) ** (-(grid.M - M0))
    sol = HUMSolution(problem, first.q_hat_T, first.q,
                      GridFunction(grid, v, "primal_interior", "dual"),
                      GridFunction(grid, y, "primal_interior", "primal_extended"),
                      first.cg_iterations, first.residual_history, first.ledger,
                      extra={"two_phase": True, "M0": M0, "T0": M0 * dt,
                             "yM0_norm": first.yM_norm, "kappa": kappa})
    return sol


# -- semilinear -----------------------------------------------------------------

@dataclass(eq=False)
class SemilinearSolution:
    solution: HUMSolution
    iterations: int
    converged: bool
    increments: list
    residual: float

    def to_dict(self):
        out = self.solution.to_dict()
        out.update({
            "fixed_point_iterations": self.iterations,
            "fixed_point_converged": self.converged,
            "fixed_point_increments": list(self.increments),
            "semilinear_residual": self.residual,
        })
        return out


def _primal_norm(grid, vals):
    return math.sqrt(grid.dt * grid.h * float(np.sum(vals**2)))


def solve_semilinear(problem, f, fp_tol=1e-8, fp_max=50, constants=None):
    """Picard iteration on the potential ``g(zeta) = f(zeta)/zeta``.

    ``zeta_0`` is the uncontrolled linear solution.  Each iteration solves the
    linear HUM problem with potential ``g(zeta_k)`` and stops when
    ``|zeta_{k+1} - zeta_k| <= fp_tol (1 + |zeta_k|)`` in ``L2`` over
    ``t_1..t_M``.  When the potential does not change between iterations the
    next iterate is identical and no extra solve is made.  ``iterations``
    counts linear HUM solves.
    """
    grid = problem.grid
    if not grid.dt * f.lipschitz < 0.25:
        check_stability(grid, PotentialField.constant(grid, f.lipschitz))
    zeta = solve_forward(grid, problem.g, None, None).values
    prev_pot = None
    sol = None
    increments = []
    converged = False
    it = 0
    while it < fp_max:
        pot = semilinear_potential(f, zeta[1:])
        if prev_pot is not None and np.array_equal(pot, prev_pot):
            increments.append(0.0)
            converged = True
            break
        sol = solve_hum(problem.with_potential(PotentialField(grid, pot)), constants)
        it += 1
        new = sol.y.values
        inc = _primal_norm(grid, new[1:] - zeta[1:])
        increments.append(inc)
        done = inc <= fp_tol * (1 + _primal_norm(grid, zeta[1:]))
        zeta, prev_pot = new, pot
        if done:
            converged = True
            break
    if not converged:
        warnings.warn(f"fixed-point iteration did not converge in {fp_max} iterations "
                      f"(last increment {increments[-1]:.3g})", RuntimeWarning, stacklevel=2)
    res = semilinear_residual(grid, sol.y, sol.v, f, problem.omega)
    return SemilinearSolution(sol, it, converged, increments, res)

"""Estimator-style front end for the HUM solvers.

``fit`` computes the penalised HUM control for one initial datum and keeps
the solution; ``transform`` maps initial data to flattened controls and
``predict`` to the final states ``y^M``.
"""
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_initial_data, check_interval, check_positive, check_theta_exp
from .hum import ControlProblem, solve_hum, solve_hum_long_horizon, solve_semilinear
from .mesh import SpaceTimeGrid
from .solvers import Nonlinearity, PotentialField
from .weights import CalibrationConstants, steps_for


class HUMController(TransformerMixin, BaseEstimator):
    def __init__(self, length=1.0, horizon=0.5, n_interior=39, n_steps=None, omega=(0.3, 0.8),
                 potential=0.0, theta_exp=4, penalty_c2=0.05, penalty=None, cg_tol=1e-10,
                 cg_max_iter=None, first_phase=0.5, constants=None):
        self.length = length
        self.horizon = horizon
        self.n_interior = n_interior
        self.n_steps = n_steps
        self.omega = omega
        self.potential = potential
        self.theta_exp = theta_exp
        self.penalty_c2 = penalty_c2
        self.penalty = penalty
        self.cg_tol = cg_tol
        self.cg_max_iter = cg_max_iter
        self.first_phase = first_phase
        self.constants = constants

    def _grid(self):
        L = check_positive(self.length, "length")
        T = check_positive(self.horizon, "horizon")
        N = check_positive(self.n_interior, "n_interior", integer=True)
        theta = check_theta_exp(self.theta_exp)
        h = L / (N + 1)
        a_norm = self._a_norm_hint()
        M = self.n_steps
        if M is None:
            M = steps_for(T, h, theta, a_norm)
        return SpaceTimeGrid.uniform(L, N, T, check_positive(M, "n_steps", integer=True))

    def _a_norm_hint(self):
        a = self.potential
        if a is None:
            return 0.0
        if np.isscalar(a):
            return abs(float(a))
        if isinstance(a, PotentialField):
            return a.norm_inf
        if callable(a):
            return 0.0
        return float(np.max(np.abs(a)))

    def _potential(self, grid):
        a = self.potential
        if a is None or np.isscalar(a):
            return PotentialField.constant(grid, 0.0 if a is None else a)
        if isinstance(a, PotentialField):
            return a
        if callable(a):
            return PotentialField.sample(grid, a)
        return PotentialField(grid, a)

    def _problem(self, g):
        grid = self._grid()
        omega = check_interval(self.omega, grid.space.L)
        phi = None
        if self.penalty is not None:
            phi = float(self.penalty(grid.h)) if callable(self.penalty) else float(self.penalty)
        return ControlProblem(grid, omega, g, self._potential(grid), self.theta_exp, phi=phi,
                              c2=self.penalty_c2, cg_tol=self.cg_tol,
                              cg_max_iter=self.cg_max_iter)

    def _constants(self):
        c = self.constants
        if c is None or isinstance(c, CalibrationConstants):
            return c
        return CalibrationConstants(**c)

    def _solve(self, g):
        problem = self._problem(g)
        if problem.grid.time.T >= 1:
            return solve_hum_long_horizon(problem, self.first_phase, self._constants())
        return solve_hum(problem, self._constants())

    def _store(self, sol):
        self.solution_ = sol
        self.grid_ = sol.grid
        self.q_hat_T_ = sol.q_hat_T
        self.control_ = np.asarray(sol.v.values)
        self.trajectory_ = np.asarray(sol.y.values)
        self.n_iter_ = sol.cg_iterations
        self.residual_ = sol.relative_residual
        self.ledger_ = sol.ledger
        self.phi_ = sol.phi
        self.n_features_in_ = sol.grid.N
        return self

    def fit(self, X, y=None):
        X = check_initial_data(X, self.n_interior)
        if X.shape[0] != 1:
            raise ValueError("fit expects a single initial datum")
        return self._store(self._solve(X[0]))

    def transform(self, X):
        """Controls ``v`` for each initial datum, flattened to ``M * N`` columns."""
        check_is_fitted(self, "solution_")
        X = check_initial_data(X, self.n_features_in_)
        return np.stack([self._solve(g).v.values.ravel() for g in X])

    def predict(self, X):
        """Controlled final states ``y^M``."""
        check_is_fitted(self, "solution_")
        X = check_initial_data(X, self.n_features_in_)
        return np.stack([self._solve(g).y.values[-1] for g in X])

    def score(self, X, y=None):
        """Mean of ``-|y^M| / (sqrt(phi) |g|)`` (higher is better)."""
        X = check_initial_data(X, self.n_features_in_)
        out = []
        for g in X:
            sol = self._solve(g)
            den = math.sqrt(sol.phi) * sol.g_norm
            out.append(-sol.yM_norm / den if den > 0 else 0.0)
        return float(np.mean(out))


_NONLINEARITIES = {"zero": Nonlinearity.zero, "sine": Nonlinearity.sine}


class SemilinearHUMController(HUMController):
    def __init__(self, length=1.0, horizon=0.5, n_interior=39, n_steps=None, omega=(0.3, 0.8),
                 nonlinearity="sine", theta_exp=4, penalty_c2=0.05, penalty=None, cg_tol=1e-10,
                 cg_max_iter=None, fp_tol=1e-8, fp_max=50, constants=None):
        super().__init__(length=length, horizon=horizon, n_interior=n_interior, n_steps=n_steps,
                         omega=omega, potential=None, theta_exp=theta_exp,
                         penalty_c2=penalty_c2, penalty=penalty, cg_tol=cg_tol,
                         cg_max_iter=cg_max_iter, constants=constants)
        self.nonlinearity = nonlinearity
        self.fp_tol = fp_tol
        self.fp_max = fp_max

    def _f(self):
        f = self.nonlinearity
        if isinstance(f, Nonlinearity):
            return f
        if f in _NONLINEARITIES:
            return _NONLINEARITIES[f]()
        raise ValueError(f"unknown nonlinearity {f!r}")

    def _a_norm_hint(self):
        return self._f().lipschitz

    def _solve(self, g):
        problem = self._problem(g)
        res = solve_semilinear(problem, self._f(), self.fp_tol, self.fp_max, self._constants())
        self._last = res
        return res.solution

    def fit(self, X, y=None):
        super().fit(X)
        res = self._last
        self.fp_iterations_ = res.iterations
        self.converged_ = res.converged
        self.increments_ = list(res.increments)
        return self

"""Carleman weights and the calibration of their parameters.

The weights are ``r = exp(s(t) phi(x))`` with ``s = tau * theta``, where

* ``psi(x) = C_psi - (x - x0)^2`` with ``x0`` the centre of ``B0``,
* ``phi(x) = exp(lambda psi) - exp(lambda K) < 0`` (``K > max psi``),
* ``theta(t) = 1 / ((t + delta T)(T + delta T - t))``.

``tau theta phi`` easily reaches -1e3, so weights are only ever handed out
as logarithms; callers exponentiate at the very end.
"""
import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .exceptions import InfeasibleParameters, LongHorizonError

# Relative slack when checking the coupling inequalities in floating point;
# with dt at the rule's bound the second one is an equality in exact arithmetic.
CONDITION_RTOL = 1e-12


@dataclass(frozen=True)
class WeightSystem:
    lam: float
    tau: float
    delta: float
    T: float
    x0: float
    c_psi: float
    K: float
    b0: tuple
    b: tuple
    time_shift: float = 0.0

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0 < self.delta <= 0.5:
            raise ValueError(f"delta must lie in (0, 1/2], got {self.delta}")
        if not self.b[0] <= self.b0[0] < self.b0[1] <= self.b[1]:
            raise ValueError(f"B0={self.b0} must be contained in B={self.b}")
        if not self.K > self.c_psi:
            raise ValueError("K must exceed max psi = C_psi")

    @classmethod
    def for_domain(cls, L, T, omega, lam=2.0, tau=1.0, delta=0.25, margin=0.1):
        """Weights with ``B = omega`` and ``B0`` the middle half of ``omega``.

        ``C_psi = (L + margin L)^2 + 1`` keeps ``psi > 0`` on the enlarged
        domain ``(-margin L, L + margin L)``; ``K = C_psi + 1``.
        """
        a, b = omega
        quarter = (b - a) / 4
        b0 = (a + quarter, b - quarter)
        c_psi = (L + margin * L) ** 2 + 1.0
        return cls(lam=lam, tau=tau, delta=delta, T=T, x0=0.5 * (b0[0] + b0[1]),
                   c_psi=c_psi, K=c_psi + 1.0, b0=b0, b=tuple(omega))

    def time_reversed(self, dt):
        """Weights seen by the time-reversed field.

        Reversal maps the dual-extended instants ``t_{1/2} .. t_{M+1/2}`` onto
        the primal ``t_M .. t_0``, i.e. ``t -> T + dt/2 - t``.  Because theta
        is symmetric about ``T/2`` this is the same as shifting its argument.
        """
        return replace(self, time_shift=0.5 * dt - self.time_shift)

    # -- evaluations --------------------------------------------------------

    def theta(self, t):
        t = np.asarray(t, dtype=float) - self.time_shift
        dT = self.delta * self.T
        if np.any(t <= -dT) or np.any(t >= self.T + dT):
            raise ValueError(
                f"theta is singular outside (-delta T, T + delta T) = ({-dT}, {self.T + dT})")
        return 1.0 / ((t + dT) * (self.T + dT - t))

    def theta_prime(self, t):
        """``theta' = (2t - T) theta^2``."""
        tt = np.asarray(t, dtype=float) - self.time_shift
        return (2 * tt - self.T) * self.theta(t) ** 2

    def s(self, t):
        return self.tau * self.theta(t)

    def psi(self, x):
        return self.c_psi - (np.asarray(x, dtype=float) - self.x0) ** 2

    def dpsi(self, x):
        return -2.0 * (np.asarray(x, dtype=float) - self.x0)

    def phi_upper(self, x):
        return np.exp(self.lam * self.psi(x))

    def phi_lower(self, x):
        return np.exp(self.lam * self.psi(x)) - math.exp(self.lam * self.K)

    def log_r(self, t, x):
        """``log r = s(t) phi(x)`` broadcast over ``t`` and ``x``."""
        return self.s(t) * self.phi_lower(x)

    def log_weight(self, t, x, theta_power=0):
        """``log(exp(2 tau theta phi) theta^p)`` on the outer product ``t x x``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        th = self.theta(t)[:, None]
        return 2 * self.tau * th * self.phi_lower(x)[None, :] + theta_power * np.log(th)

    def check_invariants(self, space_mesh):
        """Pointwise checks of the weight assumptions on a mesh."""
        L = space_mesh.L
        x = space_mesh.points("primal_with_boundary")
        enlarged = np.linspace(-0.1 * L, 1.1 * L, 4 * space_mesh.N + 9)
        outside = x[(x <= self.b0[0]) | (x >= self.b0[1])]
        grad = np.abs(self.dpsi(outside)) if outside.size else np.array([np.inf])
        return {
            "psi_positive": bool(np.all(self.psi(enlarged) > 0)),
            "phi_negative": bool(np.all(self.phi_lower(enlarged) < 0)),
            "grad_psi_min_outside_B0": float(np.min(grad)),
            "grad_psi_bounded_below": bool(np.min(grad) > 0),
        }


@dataclass(frozen=True)
class CalibrationConstants:
    """Constants that exist in the analysis only by proof; all overridable."""

    epsilon0: float = 0.1
    tau2: float = 2.0
    delta1: float = 0.25
    lam: float = 2.0
    h0: float = math.inf

    def __post_init__(self):
        if not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")
        if not self.tau2 > 0:
            raise ValueError("tau2 must be positive")
        if not 0 < self.delta1 < 0.5:
            raise ValueError("delta1 must lie in (0, 1/2)")
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")


@dataclass
class ParameterLedger:
    constants: CalibrationConstants
    theta_exp: int
    T: float
    h: float
    dt: float
    a_norm: float
    tau: float
    delta: float
    h1: float
    dt_max: float
    conditions: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def feasible(self):
        return all(c["holds"] for c in self.conditions.values())

    @property
    def violated(self):
        return [name for name, c in self.conditions.items() if not c["holds"]]

    def weights(self, L, omega):
        return WeightSystem.for_domain(L, self.T, omega, lam=self.constants.lam,
                                       tau=self.tau, delta=min(self.delta, 0.5))

    def to_dict(self):
        out = {
            "constants": {k: _jsonable(v) for k, v in asdict(self.constants).items()},
            "theta_exp": self.theta_exp,
            "T": self.T,
            "h": self.h,
            "dt": self.dt,
            "a_norm": self.a_norm,
            "tau": self.tau,
            "delta": self.delta,
            "h1": self.h1,
            "dt_max": _jsonable(self.dt_max),
            "feasible": self.feasible,
            "conditions": {k: {kk: _jsonable(vv) for kk, vv in c.items()}
                           for k, c in self.conditions.items()},
            "warnings": list(self.warnings),
        }
        return out


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _condition(lhs, rhs, strict=False):
    if strict:
        holds = lhs < rhs
    else:
        holds = lhs <= rhs * (1 + CONDITION_RTOL) if math.isfinite(rhs) else True
    return {"lhs": float(lhs), "rhs": float(rhs), "holds": bool(holds)}


def max_time_step(T, h, theta_exp, a_norm=0.0):
    """``min{T^-2 h^(4/theta), 1/(4 |a|)}``."""
    coupled = h ** (4.0 / theta_exp) / T**2
    stab = math.inf if a_norm == 0 else 1.0 / (4.0 * a_norm)
    return min(coupled, stab)


def steps_for(T, h, theta_exp, a_norm=0.0):
    """Fewest steps ``M`` with ``T/M`` inside the coupling rule and ``dt |a| < 1/4``."""
    dt_max = max_time_step(T, h, theta_exp, a_norm)
    M = max(1, math.ceil(T / dt_max * (1 - 1e-14)))
    while (T / M) * a_norm >= 0.25:
        M += 1
    return M


def threshold_h1(T, a_norm, theta_exp, constants):
    """``h1 = eps0 (delta1 / tau2 (1 + 1/T + |a|^(2/3))^-1)^theta``."""
    base = 1.0 + 1.0 / T + a_norm ** (2.0 / 3.0)
    return constants.epsilon0 * (constants.delta1 / (constants.tau2 * base)) ** theta_exp


def calibrate(grid, a_norm=0.0, theta_exp=4, constants=None, strict=True):
    """Couple ``tau``, ``delta`` to ``h`` and ``dt`` and check every condition.

    With ``strict`` (the default) an :class:`InfeasibleParameters` naming the
    violated conditions is raised, and ``T >= 1`` raises
    :class:`LongHorizonError`.  With ``strict=False`` the ledger is returned
    regardless so that it can be reported.
    """
    constants = constants or CalibrationConstants()
    if theta_exp not in (1, 2, 3, 4):
        raise ValueError(f"theta_exp must be an integer in [1, 4], got {theta_exp}")
    T, h, dt = grid.time.T, grid.space.h, grid.time.dt
    if strict and T >= 1:
        raise LongHorizonError(
            f"single-phase calibration needs T < 1 (got T={T}); use the two-phase driver")
    a_norm = float(a_norm)
    tau = constants.tau2 * (T + T**2 + T**2 * a_norm ** (2.0 / 3.0))
    h1 = threshold_h1(T, a_norm, theta_exp, constants)
    delta = (h / h1) ** (1.0 / theta_exp) * constants.delta1
    dt_max = max_time_step(T, h, theta_exp, a_norm)
    eps0 = constants.epsilon0

    conditions = {
        "h <= min(h0, h1)": _condition(h, min(constants.h0, h1)),
        "T < 1": _condition(T, 1.0, strict=True),
        "delta <= delta1": _condition(delta, constants.delta1),
        "tau h / (delta T^2) <= eps0": _condition(tau * h / (delta * T**2), eps0),
        "tau^4 dt / (delta^4 T^6) <= eps0": _condition(tau**4 * dt / (delta**4 * T**6), eps0),
        "dt <= T^-2 h^(4/theta)": _condition(dt, h ** (4.0 / theta_exp) / T**2),
        "dt |a| < 1/4": _condition(dt * a_norm, 0.25, strict=True),
        "dt <= delta T / 2": _condition(dt, delta * T / 2),
    }
    ledger = ParameterLedger(constants=constants, theta_exp=int(theta_exp), T=T, h=h, dt=dt,
                             a_norm=a_norm, tau=tau, delta=delta, h1=h1, dt_max=dt_max,
                             conditions=conditions)
    if strict and not ledger.feasible:
        bad = ledger.violated
        detail = "; ".join(
            f"{name} (lhs={conditions[name]['lhs']:.6g}, rhs={conditions[name]['rhs']:.6g})"
            for name in bad)
        raise InfeasibleParameters(f"infeasible parameters: {detail}", bad)
    return ledger


def penalty(h, theta_exp, c2=0.05):
    """Default target size ``exp(-C2 / h^(1/theta))``."""
    value = math.exp(-c2 / h ** (1.0 / theta_exp))
    if value < 1e-12:
        warnings.warn(f"phi(h)={value:.3g} < 1e-12: the Gramian system is badly conditioned",
                      RuntimeWarning, stacklevel=2)
    return value


def reference_observability_constant(T, a_norm, c1=1.0):
    """``exp(C1 (1 + 1/T + |a|^(2/3) + T |a|))`` for a chosen ``C1``."""
    return math.exp(c1 * (1 + 1 / T + a_norm ** (2.0 / 3.0) + T * a_norm))

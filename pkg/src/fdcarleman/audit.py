"""Numerical audits of the discrete Carleman estimate and of its ingredients.

``carleman_sides`` evaluates every weighted sum appearing on either side of
the fully discrete Carleman inequality for a given field.  The weights
``exp(2 tau theta phi)`` underflow double precision at realistic parameters,
so each term is accumulated as a log-sum-exp and stored both as a logarithm
and (possibly underflowing) linear value.  Ratios are always formed from the
logarithms.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import InfeasibleParameters, PlacementError
from .mesh import GridFunction
from .solvers import PotentialField, adjoint_block
from .weights import penalty, reference_observability_constant

UNDEFINED = "undefined"

LHS_TERMS = ("time_derivative", "laplacian", "gradient_dual", "gradient_primal", "zero_order")
RHS_TERMS = ("source", "local", "endpoints")


@dataclass
class CarlemanReport:
    mode: str
    log_terms: dict
    parameters: dict = field(default_factory=dict)

    @property
    def terms(self):
        return {k: _exp(v) for k, v in self.log_terms.items()}

    @property
    def log_lhs(self):
        return _lse([self.log_terms[k] for k in LHS_TERMS])

    @property
    def log_rhs(self):
        return _lse([self.log_terms[k] for k in RHS_TERMS])

    @property
    def log_ratio(self):
        lhs, rhs = self.log_lhs, self.log_rhs
        if rhs == -math.inf:
            return None
        return lhs - rhs

    @property
    def ratio(self):
        """``LHS / RHS``, or :data:`UNDEFINED` when both sides vanish."""
        lr = self.log_ratio
        if lr is None:
            return UNDEFINED if self.log_lhs == -math.inf else math.inf
        return math.exp(lr)

    def is_finite(self):
        return all(v == -math.inf or math.isfinite(v) for v in self.log_terms.values())

    def to_dict(self):
        return {
            "mode": self.mode,
            "terms": self.terms,
            "log_terms": {k: _log_json(v) for k, v in self.log_terms.items()},
            "log_lhs": _log_json(self.log_lhs),
            "log_rhs": _log_json(self.log_rhs),
            "ratio": self.ratio,
            "parameters": self.parameters,
        }


def _exp(v):
    return 0.0 if v == -math.inf else math.exp(v)


def _log_json(v):
    return UNDEFINED if v == -math.inf else v


def _lse(values):
    values = [v for v in values if v != -math.inf]
    if not values:
        return -math.inf
    return float(logsumexp(values))


def _weighted_log_sum(log_w, vals, coef):
    """``log(coef * sum exp(log_w) vals^2)`` with zero entries skipped."""
    sq = np.asarray(vals, dtype=float) ** 2
    nz = sq > 0
    if not np.any(nz):
        return -math.inf
    log_w = np.broadcast_to(log_w, sq.shape)
    return float(logsumexp(log_w[nz] + np.log(sq[nz]))) + math.log(coef)


def _pad(vals):
    return np.pad(vals, ((0, 0), (1, 1)))


def _space_terms(z, h):
    """Interior values -> (laplacian, dual gradient, averaged gradient)."""
    zb = _pad(z)
    grad = np.diff(zb, axis=1) / h
    lap = np.diff(grad, axis=1) / h
    mgrad = 0.5 * (grad[:, 1:] + grad[:, :-1])
    return lap, grad, mgrad


def _check_ledger(ledger):
    if ledger is not None and not ledger.feasible:
        bad = ledger.violated
        raise InfeasibleParameters("infeasible Carleman parameters: " + ", ".join(bad), bad)


def carleman_sides(q, weights, mode="backward", ledger=None):
    """Both sides of the discrete Carleman estimate for a field ``q``.

    ``backward``: ``q`` on ``dual_extended`` instants ``t_{1/2} .. t_{M+1/2}``;
    the operator is ``L q = -Dbar_t q - Delta_h tbar- q`` and time weights
    are taken at ``t_{n-1/2}``.

    ``forward``: ``q`` on ``primal_extended`` instants ``t_0 .. t_M``; the
    operator is ``L y = D_t y - Delta_h t+ y`` and time weights are taken at
    ``t_{n+1}``.

    In both cases ``q`` is an interior field with zero Dirichlet traces.
    """
    _check_ledger(ledger)
    if not isinstance(q, GridFunction) or q.space != "primal_interior":
        raise PlacementError("carleman_sides expects an interior GridFunction")
    grid = q.grid
    h, dt = grid.h, grid.dt
    vals = q.values
    if mode == "backward":
        if q.time != "dual_extended":
            raise PlacementError("backward audit needs a dual_extended field")
        t_w = grid.time.points("dual")         # t_{n-1/2}, n = 1..M
        dtq = np.diff(vals, axis=0) / dt        # Dbar_t q at t_n
        z = vals[:-1]                           # tbar- q
        lq = -dtq
        t_end = (grid.time.points("dual_extended")[0], grid.time.points("dual_extended")[-1])
        end_vals = (vals[0], vals[-1])
    elif mode == "forward":
        if q.time != "primal_extended":
            raise PlacementError("forward audit needs a primal_extended field")
        t_w = grid.time.points("primal")       # t_{n+1}, n = 0..M-1
        dtq = np.diff(vals, axis=0) / dt
        z = vals[1:]                            # t+ y
        lq = dtq
        t_end = (grid.time.points("primal_extended")[0], grid.time.points("primal_extended")[-1])
        end_vals = (vals[0], vals[-1])
    else:
        raise ValueError(f"mode must be 'backward' or 'forward', got {mode!r}")

    lap, grad, mgrad = _space_terms(z, h)
    lq = lq - lap
    xp = grid.space.points("primal_interior")
    xd = grid.space.points("dual")
    tau = weights.tau
    c = dt * h

    lw = {p: weights.log_weight(t_w, xp, p) for p in (-1, 1, 3)}
    lw0 = weights.log_weight(t_w, xp, 0)
    lwd = weights.log_weight(t_w, xd, 1)
    in_b = (xp > weights.b[0]) & (xp < weights.b[1])

    log_terms = {
        "time_derivative": _weighted_log_sum(lw[-1], dtq, c / tau),
        "laplacian": _weighted_log_sum(lw[-1], lap, c / tau),
        "gradient_dual": _weighted_log_sum(lwd, grad, c * tau),
        "gradient_primal": _weighted_log_sum(lw[1], mgrad, c * tau),
        "zero_order": _weighted_log_sum(lw[3], z, c * tau**3),
        "source": _weighted_log_sum(lw0, lq, c),
        "local": _weighted_log_sum(lw[3][:, in_b], z[:, in_b], c * tau**3),
    }
    ends = [_weighted_log_sum(weights.log_weight([t], xp, 0), v[None, :], h / h**2)
            for t, v in zip(t_end, end_vals)]
    log_terms["endpoints"] = _lse(ends)
    params = {"lambda": weights.lam, "tau": tau, "delta": weights.delta, "h": h, "dt": dt,
              "N": grid.N, "M": grid.M, "T": grid.time.T, "x0": weights.x0,
              "B": list(weights.b), "B0": list(weights.b0), "time_shift": weights.time_shift}
    return CarlemanReport(mode, log_terms, params)


def time_reverse(q):
    """``y^k = q^{M+1/2-k}``: a dual-extended field as a primal-extended one."""
    if q.time != "dual_extended":
        raise PlacementError("time reversal expects a dual_extended field")
    return GridFunction(q.grid, q.values[::-1], q.space, "primal_extended")


def adjoint_samples(grid, n_samples, rng, potential=None):
    """Adjoint fields from standard Gaussian terminal data, as ``(n, M+1, N)``."""
    QT = rng.standard_normal((grid.N, n_samples))
    q = adjoint_block(grid, QT, potential)
    return np.moveaxis(q, -1, 0)


def carleman_sample_study(grid, weights, n_samples, rng, potential=None, ledger=None,
                          concentration=10.0):
    """Backward audit over random adjoint samples with concentration summary."""
    _check_ledger(ledger)
    samples = adjoint_samples(grid, n_samples, rng, potential)
    reports = [carleman_sides(GridFunction(grid, s, "primal_interior", "dual_extended"), weights)
               for s in samples]
    log_ratios = np.array([r.log_ratio for r in reports], dtype=float)
    ratios = np.exp(log_ratios)
    med = float(np.median(ratios))
    summary = {
        "n_samples": n_samples,
        "max_ratio": float(np.max(ratios)),
        "median_ratio": med,
        "min_ratio": float(np.min(ratios)),
        "max_over_median": float(np.max(ratios) / med),
        "concentration_threshold": concentration,
        "concentrated": bool(np.max(ratios) <= concentration * med),
        "all_finite": all(r.is_finite() for r in reports),
    }
    return reports, summary


# -- observability --------------------------------------------------------------

@dataclass
class ObservabilityReport:
    c_obs: float
    median: float
    n_samples: int
    reference: float
    c1: float
    ratios: list
    snapshot: dict

    def to_dict(self):
        return {"c_obs": self.c_obs, "median": self.median, "n_samples": self.n_samples,
                "reference_constant": self.reference, "c1": self.c1, "snapshot": self.snapshot}


def observability_ratios(grid, omega, QT, potential=None, theta_exp=4, c2=0.05):
    """``|q^{1/2}| / sqrt(|1_omega q|^2 + exp(-C2/h^(1/theta)) |q_T|^2)`` per column."""
    q = adjoint_block(grid, QT, potential)
    h, dt = grid.h, grid.dt
    mask = grid.space.indicator(omega)
    obs = dt * h * np.sum(q[: grid.M][:, mask, :] ** 2, axis=(0, 1))
    pen = penalty(h, theta_exp, c2) * h * np.sum(np.asarray(QT) ** 2, axis=0)
    num = np.sqrt(h * np.sum(q[0] ** 2, axis=0))
    den = np.sqrt(obs + pen)
    keep = den > 0
    return num[keep] / den[keep]


def estimate_observability(grid, omega, n_samples, rng, potential=None, theta_exp=4,
                           c2=0.05, c1=1.0, n_modes=5):
    """Empirical observability constant over Gaussian data and low sine modes."""
    pot = potential if potential is not None else PotentialField.zero(grid)
    x = grid.space.points("primal_interior")
    L = grid.space.L
    modes = np.stack([np.sin(k * np.pi * x / L) for k in range(1, min(n_modes, grid.N) + 1)],
                     axis=1)
    QT = np.concatenate([rng.standard_normal((grid.N, n_samples)), modes], axis=1)
    ratios = observability_ratios(grid, omega, QT, pot, theta_exp, c2)
    a = pot.norm_inf
    return ObservabilityReport(
        c_obs=float(np.max(ratios)), median=float(np.median(ratios)), n_samples=int(ratios.size),
        reference=reference_observability_constant(grid.time.T, a, c1), c1=c1,
        ratios=ratios.tolist(),
        snapshot={"N": grid.N, "M": grid.M, "h": grid.h, "dt": grid.dt, "T": grid.time.T,
                  "omega": list(omega), "a_norm_inf": a, "theta_exp": theta_exp, "c2": c2})


# -- weight orders -------------------------------------------------------------

def _weight_residuals(weights, t, x, h):
    """Residuals of the three discrete weight identities at points ``x``.

    With ``r = exp(s phi)``, ``rho = 1/r``:

    * ``r d_h rho + s lam phi_upper psi'``
    * ``r m_h^2 rho - 1``      (``m_h^2 rho = (rho(x-h) + 2 rho + rho(x+h)) / 4``)
    * ``r d_h^2 rho - (s^2 phi'^2 - s phi'')``
    """
    s = float(weights.s(t))
    lam = weights.lam

    def ratio(dx):
        # r(x) rho(x + dx) = exp(-s (phi(x+dx) - phi(x))), differences of phi_upper
        return np.exp(-s * (weights.phi_upper(x + dx) - weights.phi_upper(x)))

    fu = weights.phi_upper(x)
    dpsi = weights.dpsi(x)
    dphi = lam * fu * dpsi
    d2phi = lam * fu * (lam * dpsi**2 - 2.0)
    r1 = (ratio(h / 2) - ratio(-h / 2)) / h + s * lam * fu * dpsi
    r2 = (ratio(-h) + 2.0 + ratio(h)) / 4.0 - 1.0
    r3 = (ratio(h) - 2.0 + ratio(-h)) / h**2 - (s**2 * dphi**2 - s * d2phi)
    return {"first_difference": r1, "double_average": r2, "second_difference": r3}


def audit_weight_orders(weights, t=None, x=None, h=0.02, levels=3):
    """Richardson orders of the weight residuals over ``h, h/2, h/4``.

    The order is ``log2(|e_h - e_{h/2}| / |e_{h/2} - e_{h/4}|)`` in max norm
    over the sample points, so no limit value is assumed.
    """
    if t is None:
        t = 0.5 * weights.T
    if not 0 < t < weights.T:
        raise ValueError("t must lie strictly inside (0, T)")
    if x is None:
        x = np.linspace(0.1, 0.9, 33)
    x = np.asarray(x, dtype=float)
    hs = [h / 2**k for k in range(levels)]
    res = [_weight_residuals(weights, t, x, hk) for hk in hs]
    rows = []
    for name in res[0]:
        errs = [float(np.max(np.abs(r[name]))) for r in res]
        d1 = np.max(np.abs(res[0][name] - res[1][name]))
        d2 = np.max(np.abs(res[1][name] - res[2][name]))
        order = float(math.log2(d1 / d2)) if d2 > 0 and d1 > 0 else math.inf
        rows.append({"residual": name, "t": float(t), "h": hs, "max_abs_residual": errs,
                     "order": order})
    return rows


def theta_derivative_order(weights, t=None, dt=1e-3):
    """Order of the centred difference of ``theta`` against ``(2t - T) theta^2``."""
    if t is None:
        t = 0.3 * weights.T
    errs = []
    for k in range(3):
        d = dt / 2**k
        fd = (weights.theta(t + d) - weights.theta(t - d)) / (2 * d)
        errs.append(abs(float(fd - weights.theta_prime(t))))
    return math.log2(errs[1] / errs[2]) if errs[2] > 0 else math.inf, errs

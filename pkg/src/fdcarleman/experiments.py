"""Experiment drivers behind the command-line subcommands.

Each ``run_*`` function takes a validated :class:`ExperimentConfig`, writes
its artifacts under ``cfg.out`` and returns ``(passed, summary)`` where
``passed`` says whether every checked property held.  Input problems are
raised as exceptions and mapped to exit codes by the CLI.
"""
import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import calculus
from .audit import (LHS_TERMS, RHS_TERMS, adjoint_samples, audit_weight_orders,
                    carleman_sample_study, carleman_sides, estimate_observability,
                    time_reverse)
from .hum import ControlProblem, solve_hum, solve_hum_long_horizon, solve_semilinear
from .mesh import GridFunction, SpaceMesh, SpaceTimeGrid, TimeGrid
from .solvers import Nonlinearity, PotentialField
from .weights import CalibrationConstants, calibrate, steps_for

log = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
TARGET_TOL = 1e-8
ORDER_MIN = 1.9
DECAY_FACTOR = 3.0


def fmt(x):
    """17 significant digits: enough to round-trip any double."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _outdir(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


# -- builders -------------------------------------------------------------------

def constants_of(cfg):
    w = cfg.weights
    return CalibrationConstants(epsilon0=w.epsilon0, tau2=w.tau2, delta1=w.delta1, lam=w.lam,
                                h0=w.h0)


def potential_bound(cfg):
    p = cfg.potential
    if p.kind == "zero":
        return 0.0
    if p.kind == "constant":
        return abs(p.value)
    return float(np.max(np.abs(np.asarray(p.values, dtype=float))))


def potential_of(cfg, grid):
    p = cfg.potential
    if p.kind == "zero":
        return PotentialField.zero(grid)
    if p.kind == "constant":
        return PotentialField.constant(grid, p.value)
    interp = RegularGridInterpolator((np.asarray(p.t_points, float), np.asarray(p.x_points, float)),
                                     np.asarray(p.values, float), bounds_error=False,
                                     fill_value=None)
    return PotentialField.sample(grid, lambda t, x: interp(np.stack([t, x], axis=-1)))


def nonlinearity_of(cfg):
    n = cfg.nonlinearity
    if n.kind == "none":
        return Nonlinearity.zero()
    if n.kind == "sine":
        return Nonlinearity.sine(n.coefficient)
    if n.kind == "linear":
        return Nonlinearity.linear(n.coefficient)
    return Nonlinearity.tabulated(n.s_points, n.f_values)


def grid_of(cfg, h, a_norm):
    space = SpaceMesh.from_spacing(cfg.domain.length, h)
    T = cfg.domain.horizon
    M = cfg.discretization.n_steps or steps_for(T, space.h, cfg.discretization.theta_exp, a_norm)
    return SpaceTimeGrid(space, TimeGrid(T, M))


def initial_data_of(cfg, grid, rng):
    d = cfg.initial_data
    x = grid.space.points("primal_interior")
    if d.kind == "zero":
        return np.zeros(grid.N)
    if d.kind == "random":
        return d.scale * rng.standard_normal(grid.N)
    L = grid.space.L
    g = sum(c * np.sin((k + 1) * np.pi * x / L) for k, c in enumerate(d.coefficients))
    return d.scale * np.asarray(g, dtype=float) + 0.0 * x


def problem_of(cfg, grid, g, potential):
    s = cfg.solver
    return ControlProblem(grid, cfg.omega, g, potential, cfg.discretization.theta_exp,
                          c2=cfg.penalty.c2, cg_tol=s.cg_tol,
                          cg_max_iter=s.cg_max_iter or None)


def _phase_grid(cfg, grid):
    """Grid on which the single-phase calibration applies."""
    if grid.time.T < 1:
        return grid
    M0 = int(math.floor(cfg.solver.first_phase / grid.dt * (1 + 1e-12)))
    return SpaceTimeGrid(grid.space, TimeGrid(M0 * grid.dt, max(M0, 1)))


# -- identities -----------------------------------------------------------------

def run_identities(cfg, rng):
    ic = cfg.identities
    grids = [SpaceTimeGrid.uniform(cfg.domain.length, N, cfg.domain.horizon, M)
             for N in ic.n_values for M in ic.m_values]
    start = time.perf_counter()
    results = calculus.run_identity_suite(grids, ic.trials, rng, tol=ic.tolerance)
    log.info("identity suite: %.2fs", time.perf_counter() - start)
    failures = sorted(name for name, r in results.items() if not r["passed"])
    summary = {"seed": cfg.seed, "tolerance": ic.tolerance, "trials": ic.trials,
               "n_values": list(ic.n_values), "m_values": list(ic.m_values),
               "results": results, "failures": failures}
    write_json(os.path.join(_outdir(cfg), "identities.json"), summary)
    return not failures, summary


# -- control --------------------------------------------------------------------

def _control_checks(sol):
    problem = sol.problem
    yM = sol.y.values[-1]
    phq = sol.phi * sol.q_hat_T
    h = problem.grid.h
    gap = math.sqrt(h) * np.linalg.norm(yM + phq)
    bound = TARGET_TOL * (1 + math.sqrt(h) * np.linalg.norm(phq))
    outside = ~problem.mask
    return {
        "target": {"value": float(gap), "bound": float(bound), "holds": bool(gap <= bound)},
        "euler_lagrange": {"value": sol.relative_residual, "bound": problem.cg_tol,
                           "holds": bool(sol.relative_residual <= problem.cg_tol)},
        "support": {"holds": bool(np.all(sol.v.values[:, outside] == 0.0))},
    }


def _trajectory_csv(path, sol):
    write_csv(path, ["n", "t_n", "x_i", "y", "v"], sol.trajectory_rows())


def run_control(cfg, rng):
    a_norm = potential_bound(cfg)
    grid = grid_of(cfg, cfg.discretization.h, a_norm)
    pot = potential_of(cfg, grid)
    ledger = calibrate(_phase_grid(cfg, grid), pot.norm_inf, cfg.discretization.theta_exp,
                       constants_of(cfg), strict=cfg.weights.enforce)
    g = initial_data_of(cfg, grid, rng)
    problem = problem_of(cfg, grid, g, pot)
    if grid.time.T >= 1:
        sol = solve_hum_long_horizon(problem, cfg.solver.first_phase, constants_of(cfg))
    else:
        sol = solve_hum(problem, constants_of(cfg))
    sol.ledger = ledger
    checks = _control_checks(sol)
    report = sol.to_dict()
    report.update({"seed": cfg.seed, "checks": checks, "config": cfg.to_dict(),
                   "csv_schema_version": CSV_SCHEMA_VERSION})
    out = _outdir(cfg)
    write_json(os.path.join(out, "control_report.json"), report)
    _trajectory_csv(os.path.join(out, "control_trajectory.csv"), sol)
    return all(c["holds"] for c in checks.values()), report


def run_semilinear(cfg, rng):
    f = nonlinearity_of(cfg)
    grid = grid_of(cfg, cfg.discretization.h, f.lipschitz)
    ledger = calibrate(grid, f.lipschitz, cfg.discretization.theta_exp, constants_of(cfg),
                       strict=cfg.weights.enforce)
    g = initial_data_of(cfg, grid, rng)
    problem = problem_of(cfg, grid, g, None)
    res = solve_semilinear(problem, f, cfg.solver.fp_tol, cfg.solver.fp_max, constants_of(cfg))
    res.solution.ledger = ledger
    checks = _control_checks(res.solution)
    checks["fixed_point"] = {"iterations": res.iterations, "holds": bool(res.converged)}
    report = res.to_dict()
    report.update({"seed": cfg.seed, "nonlinearity": f.name, "checks": checks,
                   "config": cfg.to_dict(), "csv_schema_version": CSV_SCHEMA_VERSION})
    out = _outdir(cfg)
    write_json(os.path.join(out, "semilinear_report.json"), report)
    _trajectory_csv(os.path.join(out, "semilinear_trajectory.csv"), res.solution)
    return all(c["holds"] for c in checks.values()), report


# -- decay study ----------------------------------------------------------------

DECAY_COLUMNS = ["h", "dt", "delta", "tau", "phi", "g_norm", "v_norm", "yM_norm",
                 "ratio_target", "ratio_control", "cg_iterations", "feasible"]


@dataclass
class DecayStudyRow:
    h: float
    dt: float
    delta: float
    tau: float
    phi: float
    g_norm: float
    v_norm: float
    yM_norm: float
    ratio_target: float
    ratio_control: float
    cg_iterations: int
    feasible: bool
    wall_time: float
    ledger: dict

    def csv_row(self):
        return [getattr(self, c) for c in DECAY_COLUMNS]


def decay_row(cfg, h, index):
    """One study instance; owns all its state (its RNG is derived from the index)."""
    start = time.perf_counter()
    rng = make_rng([cfg.seed, index])
    a_norm = potential_bound(cfg)
    grid = grid_of(cfg, h, a_norm)
    pot = potential_of(cfg, grid)
    g = initial_data_of(cfg, grid, rng)
    problem = problem_of(cfg, grid, g, pot)
    ledger = calibrate(_phase_grid(cfg, grid), pot.norm_inf, cfg.discretization.theta_exp,
                       constants_of(cfg), strict=False)
    if grid.time.T >= 1:
        sol = solve_hum_long_horizon(problem, cfg.solver.first_phase, constants_of(cfg))
    else:
        sol = solve_hum(problem, constants_of(cfg))
    gn = sol.g_norm
    return DecayStudyRow(
        h=grid.h, dt=grid.dt, delta=ledger.delta, tau=ledger.tau, phi=sol.phi, g_norm=gn,
        v_norm=sol.v_norm, yM_norm=sol.yM_norm,
        ratio_target=sol.yM_norm / (math.sqrt(sol.phi) * gn) if gn > 0 else 0.0,
        ratio_control=sol.v_norm / gn if gn > 0 else 0.0,
        cg_iterations=sol.cg_iterations, feasible=ledger.feasible,
        wall_time=time.perf_counter() - start, ledger=ledger.to_dict())


def decay_checks(rows):
    rc = [r.ratio_control for r in rows]
    rt = [r.ratio_target for r in rows]
    spread = max(rc) / min(rc) if min(rc) > 0 else math.inf
    return {
        "control_ratio_spread": {"value": spread, "bound": DECAY_FACTOR,
                                 "holds": bool(spread <= DECAY_FACTOR)},
        "target_ratio_vs_coarsest": {"value": max(rt) / rt[0] if rt[0] > 0 else math.inf,
                                     "bound": DECAY_FACTOR,
                                     "holds": bool(max(rt) <= DECAY_FACTOR * rt[0])},
    }


def run_decay_study(cfg, threads=None):
    hs = list(cfg.discretization.h_sequence)
    if not hs:
        raise ValueError("decay study needs a nonempty h_sequence")
    # fix an index per h before dispatch so results do not depend on scheduling
    order = sorted(range(len(hs)), key=lambda i: -hs[i])
    threads = threads or cfg.threads
    jobs = [(hs[i], i) for i in order]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda job: decay_row(cfg, *job), jobs))
    else:
        rows = [decay_row(cfg, *job) for job in jobs]
    for r in rows:
        log.info("h=%.6g: %.3fs, %d CG iterations", r.h, r.wall_time, r.cg_iterations)
    checks = decay_checks(rows)
    out = _outdir(cfg)
    write_csv(os.path.join(out, "decay_study.csv"), DECAY_COLUMNS, (r.csv_row() for r in rows))
    summary = {"seed": cfg.seed, "csv_schema_version": CSV_SCHEMA_VERSION,
               "columns": DECAY_COLUMNS, "checks": checks,
               "ledgers": [r.ledger for r in rows], "config": cfg.to_dict()}
    write_json(os.path.join(out, "decay_study.json"), summary)
    return all(c["holds"] for c in checks.values()), {"rows": rows, **summary}


# -- audit ----------------------------------------------------------------------

def relative_gap(a, b):
    """``max |a_k - b_k| / max(|a|, |b|)`` over the terms of two reports."""
    ta, tb = a.log_terms, b.log_terms
    top = max(max(ta.values()), max(tb.values()))
    if top == -math.inf:
        return 0.0
    worst = 0.0
    for k in ta:
        # |e^x - e^y| / e^top without leaving log space
        x, y = ta[k], tb[k]
        if x == y:
            continue
        hi, lo = max(x, y), min(x, y)
        worst = max(worst, math.exp(hi - top) * -math.expm1(lo - hi))
    return worst


def homogeneity_gap(q, weights, factor=10.0):
    """Deviation of every term from scaling by ``factor^2``, relative to its side's total."""
    base = carleman_sides(q, weights)
    scaled = carleman_sides(q * factor, weights)
    shift = 2 * math.log(factor)
    worst = 0.0
    for names, total in ((LHS_TERMS, base.log_lhs), (RHS_TERMS, base.log_rhs)):
        if total == -math.inf:
            continue
        for k in names:
            x, y = base.log_terms[k] + shift, scaled.log_terms[k]
            if x == y:
                continue
            hi, lo = max(x, y), min(x, y)
            worst = max(worst, math.exp(hi - total - shift) * -math.expm1(lo - hi))
    ratio_gap = 0.0
    if base.log_ratio is not None:
        ratio_gap = abs(math.expm1(scaled.log_ratio - base.log_ratio))
    return max(worst, ratio_gap)


def run_audit(cfg, rng):
    a_norm = potential_bound(cfg)
    grid = grid_of(cfg, cfg.discretization.h, a_norm)
    pot = potential_of(cfg, grid)
    ledger = calibrate(grid, pot.norm_inf, cfg.discretization.theta_exp, constants_of(cfg))
    weights = ledger.weights(grid.space.L, cfg.omega)
    ac = cfg.audit
    reports, summary = carleman_sample_study(grid, weights, ac.samples, rng, pot, ledger,
                                             ac.concentration)
    rev = weights.time_reversed(grid.dt)
    reversal = homog = 0.0
    for s in adjoint_samples(grid, min(ac.samples, 10), make_rng([cfg.seed, 1]), pot):
        q = GridFunction(grid, s, "primal_interior", "dual_extended")
        reversal = max(reversal, relative_gap(carleman_sides(q, weights),
                                              carleman_sides(time_reverse(q), rev, "forward")))
        homog = max(homog, homogeneity_gap(q, weights))
    obs = estimate_observability(grid, cfg.omega, ac.observability_samples, rng, pot,
                                 cfg.discretization.theta_exp, cfg.penalty.c2, cfg.weights.c1)
    orders = audit_weight_orders(weights, h=ac.order_h)
    checks = {
        "finite": {"holds": summary["all_finite"]},
        "concentration": {"value": summary["max_over_median"], "bound": ac.concentration,
                          "holds": summary["concentrated"]},
        "homogeneity": {"value": homog, "bound": 1e-12, "holds": bool(homog <= 1e-12)},
        "time_reversal": {"value": reversal, "bound": 1e-10, "holds": bool(reversal <= 1e-10)},
        "observability_finite": {"value": obs.c_obs,
                                 "holds": bool(0 < obs.c_obs < math.inf)},
        "weight_orders": {"value": min(r["order"] for r in orders), "bound": ORDER_MIN,
                          "holds": all(r["order"] >= ORDER_MIN for r in orders)},
    }
    out = _outdir(cfg)
    names = LHS_TERMS + RHS_TERMS
    header = ["sample", *names, *(f"log_{k}" for k in names), "ratio"]
    rows = []
    for i, r in enumerate(reports):
        t = r.terms
        rows.append([i, *(t[k] for k in names), *(r.log_terms[k] for k in names), r.ratio])
    write_csv(os.path.join(out, "carleman_samples.csv"), header, rows)
    write_csv(os.path.join(out, "weight_orders.csv"),
              ["residual", "h", "max_abs_residual", "order"],
              ([o["residual"], hk, e, o["order"]] for o in orders
               for hk, e in zip(o["h"], o["max_abs_residual"])))
    report = {"seed": cfg.seed, "ledger": ledger.to_dict(), "carleman": summary,
              "carleman_parameters": reports[0].parameters,
              "observability": obs.to_dict(), "weight_orders": orders, "checks": checks,
              "config": cfg.to_dict(), "csv_schema_version": CSV_SCHEMA_VERSION}
    write_json(os.path.join(out, "audit_report.json"), report)
    return all(c["holds"] for c in checks.values()), report


import math

import numpy as np
import pytest

from fdcarleman.audit import (UNDEFINED, adjoint_samples, audit_weight_orders,
                              carleman_sample_study, carleman_sides, estimate_observability,
                              observability_ratios, theta_derivative_order, time_reverse)
from fdcarleman.exceptions import InfeasibleParameters, PlacementError
from fdcarleman.experiments import homogeneity_gap, relative_gap
from fdcarleman.mesh import GridFunction, SpaceTimeGrid
from fdcarleman.solvers import solve_adjoint
from fdcarleman.weights import CalibrationConstants, calibrate

DESK = CalibrationConstants(epsilon0=0.1, tau2=0.2, delta1=0.49)


@pytest.fixture
def setup():
    grid = SpaceTimeGrid.uniform(1.0, 40, 0.5, 40)
    ledger = calibrate(grid, 0.0, 4, DESK)
    return grid, ledger, ledger.weights(1.0, (0.3, 0.8))


def dual_field(grid, values):
    return GridFunction(grid, values, "primal_interior", "dual_extended")


def test_zero_field_sentinel(setup):
    grid, _, w = setup
    rep = carleman_sides(dual_field(grid, np.zeros((41, 40))), w)
    assert all(v == 0.0 for v in rep.terms.values())
    assert rep.ratio == UNDEFINED
    assert rep.to_dict()["ratio"] == UNDEFINED


def test_adjoint_solution_source_is_negligible(setup, rng):
    grid, _, w = setup
    q = solve_adjoint(grid, rng.standard_normal(40))
    rep = carleman_sides(q, w)
    assert rep.is_finite()
    # L q = 0 up to rounding for an exact adjoint solution with a = 0
    assert rep.log_terms["source"] < rep.log_rhs - 30
    assert math.isfinite(rep.log_ratio)


def test_homogeneity(setup, rng):
    grid, _, w = setup
    q = solve_adjoint(grid, rng.standard_normal(40))
    assert homogeneity_gap(q, w) <= 1e-12
    # terms well above rounding scale individually, to the same tolerance
    base, scaled = carleman_sides(q, w), carleman_sides(q * 10, w)
    for k in ("time_derivative", "laplacian", "gradient_dual", "gradient_primal", "zero_order",
              "local", "endpoints"):
        assert abs(math.expm1(scaled.log_terms[k] - base.log_terms[k] - 2 * math.log(10))) <= 1e-12


def test_homogeneity_generic_field(setup, rng):
    grid, _, w = setup
    q = dual_field(grid, rng.standard_normal((41, 40)))
    base, scaled = carleman_sides(q, w), carleman_sides(q * 10, w)
    for k, v in base.log_terms.items():
        assert abs(math.expm1(scaled.log_terms[k] - v - 2 * math.log(10))) <= 1e-12


def test_time_reversal_symmetry(setup, rng):
    grid, _, w = setup
    for s in adjoint_samples(grid, 5, rng):
        q = dual_field(grid, s)
        back = carleman_sides(q, w)
        fwd = carleman_sides(time_reverse(q), w.time_reversed(grid.dt), "forward")
        assert relative_gap(back, fwd) <= 1e-10


def test_concentration(setup, rng):
    grid, ledger, w = setup
    reports, summary = carleman_sample_study(grid, w, 50, rng, ledger=ledger)
    assert summary["all_finite"]
    assert summary["max_over_median"] <= 10


def test_infeasible_ledger_rejected(rng):
    grid = SpaceTimeGrid.uniform(1.0, 40, 0.5, 40)
    ledger = calibrate(grid, 0.0, 4, strict=False)
    w = ledger.weights(1.0, (0.3, 0.8))
    with pytest.raises(InfeasibleParameters, match="h <= min"):
        carleman_sides(dual_field(grid, np.ones((41, 40))), w, ledger=ledger)


def test_mode_placement(setup):
    grid, _, w = setup
    with pytest.raises(PlacementError):
        carleman_sides(dual_field(grid, np.ones((41, 40))), w, "forward")
    with pytest.raises(ValueError):
        carleman_sides(dual_field(grid, np.ones((41, 40))), w, "sideways")


def test_observability_full_window(rng):
    grid = SpaceTimeGrid.uniform(1.0, 30, 0.5, 10)
    rep = estimate_observability(grid, (0.0, 1.0), 30, rng)
    # |q^{1/2}| <= |q^{n+1/2}| for all n when a = 0, so the ratio is at most 1/sqrt(T)
    assert 0 < rep.c_obs <= 1 / math.sqrt(0.5)


def test_observability_monotone_in_window(rng):
    grid = SpaceTimeGrid.uniform(1.0, 30, 0.5, 10)
    QT = rng.standard_normal((30, 20))
    wide = observability_ratios(grid, (0.2, 0.8), QT)
    narrow = observability_ratios(grid, (0.35, 0.65), QT)
    assert np.all(narrow >= wide) and narrow.max() >= wide.max()


def test_observability_skips_zero_data():
    grid = SpaceTimeGrid.uniform(1.0, 10, 0.5, 5)
    assert observability_ratios(grid, (0.2, 0.8), np.zeros((10, 3))).size == 0


def test_weight_orders(setup):
    _, _, w = setup
    rows = audit_weight_orders(w)
    assert {r["residual"] for r in rows} == {"first_difference", "double_average",
                                             "second_difference"}
    assert all(r["order"] >= 1.9 for r in rows)


def test_first_difference_vanishes_at_vertex(setup):
    _, _, w = setup
    rows = audit_weight_orders(w, x=[w.x0])
    first = next(r for r in rows if r["residual"] == "first_difference")
    assert max(first["max_abs_residual"]) <= 1e-9


def test_theta_derivative(setup):
    _, _, w = setup
    order, _ = theta_derivative_order(w)
    assert order >= 1.9

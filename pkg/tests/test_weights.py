import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fdcarleman.exceptions import InfeasibleParameters, LongHorizonError
from fdcarleman.mesh import SpaceMesh, SpaceTimeGrid, TimeGrid
from fdcarleman.weights import (CalibrationConstants, WeightSystem, calibrate, max_time_step,
                                penalty, steps_for, threshold_h1)

DESK = CalibrationConstants(epsilon0=0.1, tau2=0.2, delta1=0.49)


@pytest.fixture
def weights():
    return WeightSystem.for_domain(1.0, 0.5, (0.3, 0.8), lam=2.0, tau=1.5, delta=0.25)


def test_theta_midpoint(weights):
    assert math.isclose(float(weights.theta(0.25)), 1 / (0.5**2 * 0.75**2), rel_tol=1e-14)


def test_theta_domain_error(weights):
    with pytest.raises(ValueError):
        weights.theta(-0.125)
    with pytest.raises(ValueError):
        weights.theta(0.5 + 0.2)


def test_psi_vertex(weights):
    assert weights.psi(weights.x0) == weights.c_psi
    assert math.isclose(float(weights.phi_upper(weights.x0)), math.exp(2 * weights.c_psi))


def test_defaults_follow_omega(weights):
    assert weights.b == (0.3, 0.8)
    assert weights.b0 == pytest.approx((0.425, 0.675))
    assert weights.x0 == pytest.approx(0.55)
    assert weights.c_psi == pytest.approx(1.1**2 + 1)
    assert weights.K == weights.c_psi + 1


@given(st.floats(-0.1, 1.1))
def test_phi_lower_negative(x):
    w = WeightSystem.for_domain(1.0, 0.5, (0.3, 0.8))
    assert w.phi_lower(x) < 0 and w.psi(x) > 0


@given(st.floats(0.0, 0.5), st.floats(0.0, 1.0))
def test_log_r_nonpositive_and_reciprocal(t, x):
    w = WeightSystem.for_domain(1.0, 0.5, (0.3, 0.8), tau=1e-3, delta=0.3)
    lr = float(w.log_r(t, x))
    assert lr <= 0
    assert math.isclose(math.exp(lr) * math.exp(-lr), 1.0, rel_tol=1e-14)


def test_log_r_peaks_at_midpoint(weights):
    t = np.linspace(0, 0.5, 101)
    for x in (0.1, 0.55, 0.9):
        assert int(np.argmax(weights.log_r(t, x))) == 50


def test_theta_derivative_order(weights):
    h = 1e-3
    errs = []
    for k in range(3):
        d = h / 2**k
        fd = (weights.theta(0.1 + d) - weights.theta(0.1 - d)) / (2 * d)
        errs.append(abs(float(fd - weights.theta_prime(0.1))))
    assert math.log2(errs[1] / errs[2]) >= 1.9


@given(st.floats(0.05, 0.5), st.floats(0.1, 0.95), st.integers(1, 400))
def test_theta_bounded_when_dt_small(delta, T, M):
    dt = T / M
    assume(dt <= delta * T / 2)
    w = WeightSystem.for_domain(1.0, T, (0.2, 0.6), delta=delta)
    t = np.linspace(0, T + dt, 2001)
    th = w.theta(t)
    assert np.all(th > 0)
    assert th.max() <= 2 / (delta * T**2) * (1 + 1e-12)


def test_time_reversal_involution(weights):
    assert weights.time_reversed(0.1).time_reversed(0.1).time_shift == 0.0


def test_invariants_on_mesh(weights):
    inv = weights.check_invariants(SpaceMesh(1.0, 39))
    assert inv["psi_positive"] and inv["phi_negative"] and inv["grad_psi_bounded_below"]


def test_calibrate_substitution():
    h, T = 0.025, 0.5
    grid = SpaceTimeGrid(SpaceMesh.from_spacing(1.0, h), TimeGrid(T, steps_for(T, h, 4)))
    led = calibrate(grid, 0.0, 4, DESK)
    h1 = threshold_h1(T, 0.0, 4, DESK)
    assert led.delta == pytest.approx((h / h1) ** 0.25 * DESK.delta1, rel=1e-14)
    assert led.tau * h / (led.delta * T**2) <= DESK.epsilon0
    assert led.tau**4 * grid.dt / (led.delta**4 * T**6) <= DESK.epsilon0 * (1 + 1e-12)
    assert led.feasible
    d = led.to_dict()
    assert set(d["conditions"]) == set(led.conditions)
    assert all({"lhs", "rhs", "holds"} <= set(c) for c in d["conditions"].values())


@given(st.floats(0.2, 3.0), st.floats(0.05, 0.49), st.floats(0.05, 0.95),
       st.integers(1, 4), st.floats(0.01, 1.0), st.floats(0.0, 5.0))
def test_calibrated_conditions_hold(tau2, delta1, T, theta, frac, a):
    assume(delta1 <= tau2)
    const = CalibrationConstants(epsilon0=0.1, tau2=tau2, delta1=delta1)
    h1 = threshold_h1(T, a, theta, const)
    L = 1.0
    N = math.ceil(L / (frac * h1)) - 1
    assume(N < 10**12)
    space = SpaceMesh(L, N)
    grid = SpaceTimeGrid(space, TimeGrid(T, steps_for(T, space.h, theta, a)))
    led = calibrate(grid, a, theta, const, strict=False)
    for name in ("tau h / (delta T^2) <= eps0", "tau^4 dt / (delta^4 T^6) <= eps0",
                 "delta <= delta1", "h <= min(h0, h1)"):
        assert led.conditions[name]["holds"], name


def test_default_constants_infeasible_at_desk_scale():
    grid = SpaceTimeGrid.uniform(1.0, 39, 0.5, 5)
    with pytest.raises(InfeasibleParameters) as err:
        calibrate(grid)
    assert "h <= min(h0, h1)" in err.value.violated
    assert "h <= min(h0, h1)" in str(err.value)


def test_long_horizon_rejected():
    with pytest.raises(LongHorizonError):
        calibrate(SpaceTimeGrid.uniform(1.0, 39, 1.5, 15), 0.0, 4, DESK)


@given(st.floats(0.0, 50.0))
def test_h1_shrinks_with_potential(a):
    assert threshold_h1(0.5, 2 * a + 1e-3, 4, DESK) < threshold_h1(0.5, a, 4, DESK)


def test_time_step_rule():
    assert max_time_step(0.5, 0.025, 4) == pytest.approx(0.1)
    assert max_time_step(0.5, 0.025, 4, a_norm=10.0) == pytest.approx(0.025)
    M = steps_for(0.5, 0.05, 4)
    assert M == 3 and 0.5 / M <= 0.2
    # dt * |a| must stay strictly below 1/4
    assert 0.5 / steps_for(0.5, 0.025, 4, 5.0) * 5.0 < 0.25


def test_penalty_default():
    assert penalty(1 / 40, 4) == pytest.approx(math.exp(-0.05 * 40**0.25))
    with pytest.warns(RuntimeWarning):
        penalty(1e-6, 1, c2=1.0)

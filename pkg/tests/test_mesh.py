import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fdcarleman.exceptions import PlacementError
from fdcarleman.mesh import (GridFunction, SpaceMesh, SpaceTimeGrid, TimeGrid, inner_product,
                             integral_space, integral_spacetime, integral_time_dual,
                             integral_time_primal, norm_l2, norm_l2_restricted, norm_linf)


def instant(grid, values, space="primal_interior"):
    return GridFunction(grid, values, space)


@given(st.floats(0.1, 10), st.integers(1, 500))
def test_space_mesh_spacing(L, N):
    mesh = SpaceMesh(L, N)
    assert math.isclose(mesh.h * (N + 1), L, rel_tol=1e-14)
    assert mesh.count("primal_interior") == N
    assert mesh.count("dual") == N + 1
    x = mesh.points("primal_with_boundary")
    assert x[0] == 0.0 and math.isclose(x[-1], L, rel_tol=1e-14)


@given(st.floats(0.1, 10), st.integers(1, 500))
def test_time_grid_counts(T, M):
    tg = TimeGrid(T, M)
    assert math.isclose(tg.dt * M, T, rel_tol=1e-14)
    assert tg.count("primal") == tg.count("dual") == M
    ext = tg.points("dual_extended")
    assert math.isclose(ext[-1], T + tg.dt / 2, rel_tol=1e-14) and ext[-1] > T


@pytest.mark.parametrize("N,L", [(0, 1.0), (3, 0.0), (2.5, 1.0)])
def test_space_mesh_rejects_bad_input(N, L):
    with pytest.raises(ValueError):
        SpaceMesh(L, N)


def test_from_spacing():
    assert SpaceMesh.from_spacing(1.0, 0.025).N == 39
    with pytest.raises(ValueError):
        SpaceMesh.from_spacing(1.0, 0.3)


def test_values_shape_follows_placement():
    grid = SpaceTimeGrid.uniform(1, 4, 1, 3)
    assert GridFunction(grid, np.zeros((4, 6)), "primal_with_boundary", "primal_extended").shape == (4, 6)
    assert GridFunction(grid, np.zeros((4, 5)), "dual", "dual_extended").shape == (4, 5)
    with pytest.raises(PlacementError):
        GridFunction(grid, np.zeros((3, 4)), "primal_interior", "primal_extended")


def test_integral_space_examples():
    grid = SpaceTimeGrid.uniform(1.0, 4, 1.0, 1)
    assert math.isclose(integral_space(instant(grid, np.ones(4))), 0.8)
    assert math.isclose(integral_space(instant(grid, np.ones(5), "dual")), 1.0)
    grid3 = SpaceTimeGrid.uniform(1.0, 3, 1.0, 1)
    x = grid3.space.points()
    assert math.isclose(integral_space(instant(grid3, x)), 0.375)


def test_integral_space_placement_error():
    grid = SpaceTimeGrid.uniform(1.0, 4, 1.0, 1)
    with pytest.raises(PlacementError):
        integral_space(instant(grid, np.ones(6), "primal_with_boundary"))


def test_integral_time_examples():
    assert integral_time_primal(np.ones(8), TimeGrid(2.0, 8)) == 2.0
    assert integral_time_primal(np.arange(1, 5), TimeGrid(1.0, 4)) == 2.5
    assert integral_time_dual(np.zeros(3), TimeGrid(1.0, 3)) == 0.0
    with pytest.raises(PlacementError):
        integral_time_dual(np.zeros(4), TimeGrid(1.0, 3))


def test_norm_examples():
    grid = SpaceTimeGrid.uniform(1.0, 4, 1.0, 1)
    assert math.isclose(inner_product(instant(grid, np.ones(4)), instant(grid, np.ones(4))), 0.8)
    grid9 = SpaceTimeGrid.uniform(1.0, 9, 1.0, 1)
    assert math.isclose(norm_l2_restricted(instant(grid9, np.ones(9)), (0.3, 0.7)), math.sqrt(0.4))
    grid3 = SpaceTimeGrid.uniform(1.0, 3, 1.0, 1)
    assert norm_linf(instant(grid3, [-2.0, 3.0, -1.0])) == 3.0


def test_restricted_norm_is_strict():
    # x = 0.5 is on the boundary of (0.5, 1): excluded
    grid = SpaceTimeGrid.uniform(1.0, 3, 1.0, 1)
    u = instant(grid, [1.0, 10.0, 1.0])
    assert math.isclose(norm_l2_restricted(u, (0.5, 1.0)), math.sqrt(0.25))


def test_placement_mismatch():
    grid = SpaceTimeGrid.uniform(1.0, 4, 1.0, 1)
    with pytest.raises(PlacementError):
        inner_product(instant(grid, np.ones(4)), instant(grid, np.ones(5), "dual"))


vec = st.lists(st.floats(-1e3, 1e3), min_size=7, max_size=7)


@given(vec, vec)
def test_cauchy_schwarz(u, v):
    grid = SpaceTimeGrid.uniform(1.0, 7, 1.0, 1)
    U, V = instant(grid, u), instant(grid, v)
    assert abs(inner_product(U, V)) <= norm_l2(U) * norm_l2(V) * (1 + 1e-14) + 1e-300


@given(vec, vec, st.floats(-10, 10), st.floats(-10, 10))
def test_integral_linear(u, v, a, b):
    grid = SpaceTimeGrid.uniform(1.0, 7, 1.0, 1)
    U, V = instant(grid, u), instant(grid, v)
    lhs = integral_space(a * U + b * V)
    rhs = a * integral_space(U) + b * integral_space(V)
    scale = abs(a) * integral_space(instant(grid, np.abs(u))) + \
        abs(b) * integral_space(instant(grid, np.abs(v)))
    assert abs(lhs - rhs) <= 1e-14 * scale + 1e-300


def test_spacetime_integral_is_iterated(rng):
    grid = SpaceTimeGrid.uniform(1.0, 6, 0.7, 5)
    u = GridFunction(grid, rng.standard_normal((5, 6)), "primal_interior", "primal")
    iterated = integral_time_primal([integral_space(u.at(n)) for n in range(5)], grid.time)
    assert math.isclose(integral_spacetime(u), iterated, rel_tol=1e-14)


def test_grid_function_is_read_only():
    grid = SpaceTimeGrid.uniform(1.0, 3, 1.0, 1)
    u = instant(grid, np.ones(3))
    with pytest.raises(ValueError):
        u.values[0] = 2.0

import numpy as np
import pytest

from fdcarleman import calculus as C
from fdcarleman.exceptions import PlacementError
from fdcarleman.mesh import GridFunction, SpaceTimeGrid


def pwb(grid, values, time="single_instant"):
    return GridFunction(grid, values, "primal_with_boundary", time)


def test_diff_of_linear_is_one():
    grid = SpaceTimeGrid.uniform(1.0, 9, 1.0, 1)
    x = grid.space.points("primal_with_boundary")
    d = C.diff_h(pwb(grid, x))
    assert d.space == "dual"
    np.testing.assert_allclose(d.values, 1.0, rtol=1e-13)


def test_laplacian_of_quadratic_is_two():
    grid = SpaceTimeGrid.uniform(1.0, 9, 1.0, 1)
    x = grid.space.points("primal_with_boundary")
    lap = C.laplacian(pwb(grid, x**2))
    assert lap.space == "primal_interior"
    np.testing.assert_allclose(lap.values, 2.0, rtol=1e-11)


def test_hand_stencil():
    grid = SpaceTimeGrid.uniform(1.0, 3, 1.0, 1)  # h = 0.25
    d = C.diff_h(pwb(grid, [0, 0, 1, 0, 0])).values[0]
    np.testing.assert_allclose(d, [0, 4, -4, 0])


def test_time_diff_backward_examples():
    grid = SpaceTimeGrid.uniform(1.0, 1, 1.0, 2)  # dt = 0.5
    u = GridFunction(grid, np.array([[1.0], [3.0], [2.0]]), "primal_interior", "dual_extended")
    np.testing.assert_allclose(C.time_diff_backward(u).values[:, 0], [4.0, -2.0])
    t = grid.time.points("dual_extended")[:, None]
    lin = GridFunction(grid, t, "primal_interior", "dual_extended")
    np.testing.assert_allclose(C.time_diff_backward(lin).values, 1.0, rtol=1e-14)
    const = GridFunction(grid, np.ones((3, 1)), "primal_interior", "dual_extended")
    assert np.all(C.time_diff_backward(const).values == 0)


def test_operators_check_placement():
    grid = SpaceTimeGrid.uniform(1.0, 4, 1.0, 2)
    u = GridFunction(grid, np.ones(4))
    with pytest.raises(PlacementError):
        C.diff_h(u)
    with pytest.raises(PlacementError):
        C.diffbar_h(u)
    with pytest.raises(PlacementError):
        C.time_diff_backward(GridFunction(grid, np.ones((2, 4)), "primal_interior", "dual"))


@pytest.mark.parametrize("N", [4, 16, 31])
def test_laplacian_eigenmodes(N):
    grid = SpaceTimeGrid.uniform(2.0, N, 1.0, 1)
    x = grid.space.points()
    for k in range(1, N + 1):
        s = np.sin(k * np.pi * x / 2.0)
        lap = C.laplacian(C.with_boundary(GridFunction(grid, s))).values[0]
        mu = C.dirichlet_eigenvalue(k, N, 2.0)
        np.testing.assert_allclose(lap, -mu * s, rtol=1e-12, atol=1e-12 * mu)


def test_average_then_diffbar_is_wide_difference(rng):
    grid = SpaceTimeGrid.uniform(1.0, 11, 1.0, 1)
    p = rng.standard_normal(13)
    wide = (p[2:] - p[:-2]) / (2 * grid.h)
    np.testing.assert_allclose(C.diffbar_h(C.avg_h(pwb(grid, p))).values[0], wide,
                               rtol=1e-13, atol=1e-13 * np.abs(wide).max())


def test_verify_identity_cases(rng):
    grid = SpaceTimeGrid.uniform(1.0, 8, 0.5, 7)
    f = GridFunction(grid, np.r_[0.0, rng.standard_normal(8), 0.0], "primal_with_boundary")
    g = GridFunction(grid, rng.standard_normal(9), "dual")
    assert C.verify_identity("int_by_parts_space", f, g) <= 1e-13
    g1, g2 = (GridFunction(grid, rng.standard_normal((8, 8)), "primal_interior", "dual_extended")
              for _ in range(2))
    assert C.verify_identity("deriv_prod", g1, g2) <= 1e-13
    const = GridFunction(grid, np.ones((8, 8)), "primal_interior", "dual_extended")
    assert C.verify_identity("f_Dt_2", const) == 0.0


def test_verify_identity_unknown_name(grid, rng):
    with pytest.raises(KeyError):
        C.verify_identity("no_such_identity", GridFunction(grid, np.ones(15)))


@pytest.mark.parametrize("name", sorted(C.IDENTITIES))
def test_every_identity_on_random_data(name, rng):
    for N, M in [(3, 2), (8, 9), (31, 40)]:
        grid = SpaceTimeGrid.uniform(1.3, N, 0.7, M)
        for _ in range(10):
            args = C.random_arguments(name, grid, rng)
            assert C.verify_identity(name, *args) <= 1e-12


def test_broken_operator_is_caught(monkeypatch, rng):
    monkeypatch.setattr(C, "avg_h", lambda u: C.diff_h(u))
    grid = SpaceTimeGrid.uniform(1.0, 8, 0.5, 9)
    out = C.run_identity_suite([grid], 5, rng, names=["average_product_rule"])
    assert not out["average_product_rule"]["passed"]

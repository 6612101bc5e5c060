"""Difference, averaging and translation operators on the staggered meshes.

Space operators act along the last axis, time operators along the first, so
each one applies row by row to a whole trajectory.  Every operator checks the
placement of its input and returns a :class:`GridFunction` placed where the
result lives::

    diff_h, avg_h        primal_with_boundary -> dual
    diffbar_h, avgbar_h  dual -> primal_interior
    laplacian            primal_with_boundary -> primal_interior
    time_diff_forward    primal_extended (t_0..t_M) -> dual
    time_diff_backward   dual_extended (t_1/2..t_M+1/2) -> primal

The second half of the module checks the exact summation-by-parts and product
identities these operators satisfy.
"""
import numpy as np

from .exceptions import PlacementError
from .mesh import GridFunction, check_same_placement

IDENTITY_TOLERANCE = 1e-12


def _require(u, space=None, time=None):
    if space is not None and u.space not in _tup(space):
        raise PlacementError(f"expected space placement {space}, got {u.space!r}")
    if time is not None and u.time not in _tup(time):
        raise PlacementError(f"expected time placement {time}, got {u.time!r}")


def _tup(x):
    return (x,) if isinstance(x, str) else tuple(x)


def _new(u, values, space=None, time=None):
    return GridFunction(u.grid, values, space or u.space, time or u.time, u.instant)


# -- space ------------------------------------------------------------------

def with_boundary(u, left=0.0, right=0.0):
    """Extend an interior function with the given boundary values."""
    _require(u, space="primal_interior")
    n_t = u.shape[0]
    vals = np.concatenate(
        [np.full((n_t, 1), left), u.values, np.full((n_t, 1), right)], axis=1)
    return _new(u, vals, space="primal_with_boundary")


def interior(u):
    _require(u, space="primal_with_boundary")
    return _new(u, u.values[:, 1:-1], space="primal_interior")


def shift_plus(u):
    _require(u, space="primal_with_boundary")
    return _new(u, u.values[:, 1:], space="dual")


def shift_minus(u):
    _require(u, space="primal_with_boundary")
    return _new(u, u.values[:, :-1], space="dual")


def shiftbar_plus(u):
    _require(u, space="dual")
    return _new(u, u.values[:, 1:], space="primal_interior")


def shiftbar_minus(u):
    _require(u, space="dual")
    return _new(u, u.values[:, :-1], space="primal_interior")


def diff_h(u):
    _require(u, space="primal_with_boundary")
    return _new(u, np.diff(u.values, axis=1) / u.grid.h, space="dual")


def avg_h(u):
    _require(u, space="primal_with_boundary")
    return _new(u, 0.5 * (u.values[:, 1:] + u.values[:, :-1]), space="dual")


def diffbar_h(u):
    _require(u, space="dual")
    return _new(u, np.diff(u.values, axis=1) / u.grid.h, space="primal_interior")


def avgbar_h(u):
    _require(u, space="dual")
    return _new(u, 0.5 * (u.values[:, 1:] + u.values[:, :-1]), space="primal_interior")


def laplacian(u):
    """``Delta_h u = diffbar_h(diff_h(u))``, the (1, -2, 1)/h^2 stencil."""
    return diffbar_h(diff_h(u))


def laplacian_matrix(N, h):
    """Dense (1, -2, 1)/h^2 matrix on the interior nodes."""
    main = np.full(N, -2.0)
    off = np.ones(N - 1)
    return (np.diag(main) + np.diag(off, 1) + np.diag(off, -1)) / h**2


def dirichlet_eigenvalue(k, N, L):
    """``mu_k = (4/h^2) sin^2(k pi h / 2L)``, so that ``-Delta_h s_k = mu_k s_k``."""
    h = L / (N + 1)
    return 4.0 / h**2 * np.sin(k * np.pi * h / (2 * L)) ** 2


# -- time -------------------------------------------------------------------

def time_shift_plus(u):
    """``(t+ u)^{n+1/2} = u^{n+1}``."""
    _require(u, time="primal_extended")
    return _new(u, u.values[1:], time="dual")


def time_shift_minus(u):
    """``(t- u)^{n+1/2} = u^n``."""
    _require(u, time="primal_extended")
    return _new(u, u.values[:-1], time="dual")


def time_diff_forward(u):
    """``(D_t u)^{n+1/2} = (u^{n+1} - u^n) / dt``."""
    _require(u, time="primal_extended")
    return _new(u, np.diff(u.values, axis=0) / u.grid.dt, time="dual")


def time_shiftbar_plus(u):
    """``(tbar+ u)^n = u^{n+1/2}`` for ``n = 1..M``; needs ``t_{M+1/2}``."""
    _require(u, time="dual_extended")
    return _new(u, u.values[1:], time="primal")


def time_shiftbar_minus(u):
    """``(tbar- u)^n = u^{n-1/2}`` for ``n = 1..M``."""
    _require(u, time=("dual", "dual_extended"))
    return _new(u, u.values[: u.grid.M], time="primal")


def time_diff_backward(u):
    """``(Dbar_t u)^n = (u^{n+1/2} - u^{n-1/2}) / dt`` for ``n = 1..M``."""
    _require(u, time="dual_extended")
    return _new(u, np.diff(u.values, axis=0) / u.grid.dt, time="primal")


def restrict_dual(u):
    """Drop the exterior point ``t_{M+1/2}`` of a dual-extended function."""
    _require(u, time="dual_extended")
    return _new(u, u.values[: u.grid.M], time="dual")


# -- identities -------------------------------------------------------------

def _h_inner(a, b):
    """Row-wise discrete L2(Omega) products."""
    return a.grid.h * np.sum(a.values * b.values, axis=1)


def _ident_space_product(u, v):
    if u.space == "primal_with_boundary":
        lhs = diff_h(u * v)
        rhs = diff_h(u) * avg_h(v) + avg_h(u) * diff_h(v)
    else:
        lhs = diffbar_h(u * v)
        rhs = diffbar_h(u) * avgbar_h(v) + avgbar_h(u) * diffbar_h(v)
    return lhs.values, rhs.values


def _ident_average_product(u, v):
    h2 = u.grid.h ** 2 / 4
    if u.space == "primal_with_boundary":
        lhs = avg_h(u * v)
        rhs = avg_h(u) * avg_h(v) + h2 * (diff_h(u) * diff_h(v))
    else:
        lhs = avgbar_h(u * v)
        rhs = avgbar_h(u) * avgbar_h(v) + h2 * (diffbar_h(u) * diffbar_h(v))
    return lhs.values, rhs.values


def _ident_double_average(u, v):
    lhs = avgbar_h(avg_h(u))
    rhs = interior(u) + (u.grid.h ** 2 / 4) * laplacian(u)
    return lhs.values, rhs.values


def _ident_int_by_parts_space(f, g):
    lhs = _h_inner(interior(f), diffbar_h(g))
    fv, gv = f.values, g.values
    rhs = -_h_inner(diff_h(f), g) + fv[:, -1] * gv[:, -1] - fv[:, 0] * gv[:, 0]
    return lhs, rhs


def _ident_shift_av_space(f, g):
    h = f.grid.h
    lhs = _h_inner(interior(f), avgbar_h(g))
    fv, gv = f.values, g.values
    rhs = _h_inner(avg_h(f), g) - h / 2 * fv[:, -1] * gv[:, -1] - h / 2 * fv[:, 0] * gv[:, 0]
    return lhs, rhs


def _ident_deriv_prod(g1, g2):
    lhs = time_diff_backward(g1 * g2)
    rhs1 = time_shiftbar_plus(g1) * time_diff_backward(g2) \
        + time_diff_backward(g1) * time_shiftbar_minus(g2)
    rhs2 = time_shiftbar_minus(g1) * time_diff_backward(g2) \
        + time_diff_backward(g1) * time_shiftbar_plus(g2)
    return np.stack([lhs.values, lhs.values]), np.stack([rhs1.values, rhs2.values])


def _ident_f_dt_2(f, _):
    d = time_diff_backward(f)
    lhs = time_shiftbar_plus(f) * d
    rhs = 0.5 * time_diff_backward(f * f) + (0.5 * f.grid.dt) * (d * d)
    return lhs.values, rhs.values


def _ident_f_dt_3(f, _):
    d = time_diff_backward(f)
    lhs = time_shiftbar_minus(f) * d
    rhs = 0.5 * time_diff_backward(f * f) - (0.5 * f.grid.dt) * (d * d)
    return lhs.values, rhs.values


def _time_sum(a, b):
    """``sum_n dt (a^n, b^n)_H`` over whatever time rows ``a`` and ``b`` hold."""
    return a.grid.dt * float(np.sum(_h_inner(a, b)))


def _ident_trans_doub(u, v):
    lhs = _time_sum(time_shift_plus(u), restrict_dual(v))
    rhs = _time_sum(_new(u, u.values[1:], time="primal"), time_shiftbar_minus(v))
    return lhs, rhs


def _ident_trans_doub2(u, v):
    dt = u.grid.dt
    lhs = _time_sum(time_shift_minus(u), restrict_dual(v))
    u0, uM = u.at(0), u.at(-1)
    v0, vM = v.at(0), v.at(-1)
    rhs = dt * _h_inner(u0, v0)[0] - dt * _h_inner(uM, vM)[0] \
        + _time_sum(_new(u, u.values[1:], time="primal"), time_shiftbar_plus(v))
    return lhs, rhs


def _ident_int_by_parts(u, v):
    lhs = _time_sum(time_diff_forward(u), restrict_dual(v))
    rhs = -_h_inner(u.at(0), v.at(0))[0] + _h_inner(u.at(-1), v.at(-1))[0] \
        - _time_sum(time_diff_backward(v), _new(u, u.values[1:], time="primal"))
    return lhs, rhs


def _ident_by_parts_same(f, g):
    lhs = _time_sum(time_diff_backward(f), time_shiftbar_minus(g))
    rhs = -_h_inner(f.at(0), g.at(0))[0] + _h_inner(f.at(-1), g.at(-1))[0] \
        - _time_sum(time_shiftbar_plus(f), time_diff_backward(g))
    return lhs, rhs


def _ident_by_parts_same_dual(f, g):
    lhs = _time_sum(time_diff_forward(f), time_shift_plus(g))
    rhs = -_h_inner(f.at(0), g.at(0))[0] + _h_inner(f.at(-1), g.at(-1))[0] \
        - _time_sum(time_shift_minus(f), time_diff_forward(g))
    return lhs, rhs


# name -> (check, placement of u, placement of v); placements are (space, time)
IDENTITIES = {
    "space_product_rule": (_ident_space_product,
                           ("primal_with_boundary", "single_instant"),
                           ("primal_with_boundary", "single_instant")),
    "space_product_rule_dual": (_ident_space_product,
                                ("dual", "single_instant"), ("dual", "single_instant")),
    "average_product_rule": (_ident_average_product,
                             ("primal_with_boundary", "single_instant"),
                             ("primal_with_boundary", "single_instant")),
    "average_product_rule_dual": (_ident_average_product,
                                  ("dual", "single_instant"), ("dual", "single_instant")),
    "double_average": (_ident_double_average,
                       ("primal_with_boundary", "single_instant"), None),
    "int_by_parts_space": (_ident_int_by_parts_space,
                           ("primal_with_boundary", "single_instant"),
                           ("dual", "single_instant")),
    "shift_av_space": (_ident_shift_av_space,
                       ("primal_with_boundary", "single_instant"),
                       ("dual", "single_instant")),
    "deriv_prod": (_ident_deriv_prod,
                   ("primal_interior", "dual_extended"), ("primal_interior", "dual_extended")),
    "f_Dt_2": (_ident_f_dt_2, ("primal_interior", "dual_extended"), None),
    "f_Dt_3": (_ident_f_dt_3, ("primal_interior", "dual_extended"), None),
    "trans_doub": (_ident_trans_doub,
                   ("primal_interior", "primal_extended"), ("primal_interior", "dual_extended")),
    "trans_doub2": (_ident_trans_doub2,
                    ("primal_interior", "primal_extended"), ("primal_interior", "dual_extended")),
    "int_by_parts": (_ident_int_by_parts,
                     ("primal_interior", "primal_extended"), ("primal_interior", "dual_extended")),
    "by_parts_same": (_ident_by_parts_same,
                      ("primal_interior", "dual_extended"), ("primal_interior", "dual_extended")),
    "by_parts_same_dual": (_ident_by_parts_same_dual,
                           ("primal_interior", "primal_extended"),
                           ("primal_interior", "primal_extended")),
}


def verify_identity(name, u, v=None):
    """Relative residual ``|LHS - RHS| / (1 + |LHS|)`` of a named identity.

    Vector-valued identities use the max norm.  ``v`` is ignored by the
    single-argument identities.
    """
    try:
        check, pu, pv = IDENTITIES[name]
    except KeyError:
        raise KeyError(f"unknown identity {name!r}; known: {sorted(IDENTITIES)}") from None
    if (u.space, u.time) != pu:
        raise PlacementError(f"{name}: first argument must be placed {pu}, got {(u.space, u.time)}")
    if pv is not None:
        if v is None or (v.space, v.time) != pv:
            got = None if v is None else (v.space, v.time)
            raise PlacementError(f"{name}: second argument must be placed {pv}, got {got}")
        if pu == pv:
            check_same_placement(u, v)
    lhs, rhs = check(u, v)
    lhs, rhs = np.atleast_1d(lhs), np.atleast_1d(rhs)
    return float(np.max(np.abs(lhs - rhs)) / (1.0 + np.max(np.abs(lhs))))


def random_arguments(name, grid, rng):
    """Standard normal inputs placed as identity ``name`` requires."""
    _, pu, pv = IDENTITIES[name]

    def draw(placement):
        space, time = placement
        shape = (grid.time.count(time), grid.space.count(space))
        return GridFunction(grid, rng.standard_normal(shape), space, time)

    return draw(pu), (draw(pv) if pv is not None else None)


def run_identity_suite(grids, trials, rng, names=None, tol=IDENTITY_TOLERANCE):
    """Worst residual of each identity over ``trials`` random draws per grid.

    Returns ``{name: {"max_residual": float, "trials": int, "passed": bool}}``.
    """
    results = {}
    for name in names or IDENTITIES:
        worst, count = 0.0, 0
        for grid in grids:
            for _ in range(trials):
                u, v = random_arguments(name, grid, rng)
                worst = max(worst, verify_identity(name, u, v))
                count += 1
        results[name] = {"max_residual": worst, "trials": count, "passed": worst <= tol}
    return results

"""Input checks shared by the estimators and the config loader."""
import numbers

import numpy as np
from sklearn.utils import check_array


def check_interval(omega, L, name="omega"):
    try:
        a, b = (float(w) for w in omega)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a pair of numbers, got {omega!r}") from None
    if not 0 <= a < b <= L:
        raise ValueError(f"{name}=({a}, {b}) must be a nonempty subinterval of (0, {L})")
    return a, b


def check_positive(value, name, integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind) or not value > 0:
        raise ValueError(f"{name} must be a positive {'integer' if integer else 'number'}, "
                         f"got {value!r}")
    return int(value) if integer else float(value)


def check_theta_exp(theta_exp):
    if isinstance(theta_exp, bool) or theta_exp not in (1, 2, 3, 4):
        raise ValueError(f"theta_exp must be an integer in [1, 4], got {theta_exp!r}")
    return int(theta_exp)


def check_initial_data(X, n_interior):
    """2-D ``(n_samples, N)`` float array of finite initial data."""
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n_interior:
        raise ValueError(f"initial data has {X.shape[1]} nodes, the mesh has {n_interior}")
    return X

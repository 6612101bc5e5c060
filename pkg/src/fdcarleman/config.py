"""Experiment configuration: a TOML file mapped onto frozen dataclasses.

Every table and key is checked at load time; unknown keys are errors, so a
typo in a calibration constant cannot silently fall back to a default.
The schema is documented in ``docs/config.md``.
"""
import dataclasses
import math
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from ._validation import check_interval, check_positive, check_theta_exp


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DomainConfig:
    length: float = 1.0
    horizon: float = 0.5


@dataclass(frozen=True)
class InitialDataConfig:
    kind: str = "modes"              # modes | random | zero
    coefficients: tuple = (1.0, 0.0, 0.3)
    scale: float = 1.0


@dataclass(frozen=True)
class PotentialConfig:
    kind: str = "zero"               # zero | constant | tabulated
    value: float = 0.0
    t_points: tuple = ()
    x_points: tuple = ()
    values: tuple = ()


@dataclass(frozen=True)
class NonlinearityConfig:
    kind: str = "sine"               # none | sine | linear | table
    coefficient: float = 1.0
    s_points: tuple = ()
    f_values: tuple = ()


@dataclass(frozen=True)
class DiscretizationConfig:
    theta_exp: int = 4
    h: float = 0.025
    h_sequence: tuple = (0.05, 0.025, 0.0125, 0.00625)
    n_steps: int = 0                 # 0 = use the time-step rule


@dataclass(frozen=True)
class PenaltyConfig:
    c2: float = 0.05


@dataclass(frozen=True)
class WeightsConfig:
    lam: float = 2.0
    epsilon0: float = 0.1
    tau2: float = 2.0
    delta1: float = 0.25
    h0: float = math.inf
    c1: float = 1.0
    enforce: bool = True


@dataclass(frozen=True)
class SolverConfig:
    cg_tol: float = 1e-10
    cg_max_iter: int = 0             # 0 = 5 N
    fp_tol: float = 1e-8
    fp_max: int = 50
    first_phase: float = 0.5


@dataclass(frozen=True)
class AuditConfig:
    samples: int = 50
    observability_samples: int = 20
    concentration: float = 10.0
    order_h: float = 0.02


@dataclass(frozen=True)
class IdentitiesConfig:
    trials: int = 200
    n_values: tuple = (3, 8, 31)
    m_values: tuple = (2, 9, 40)
    tolerance: float = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 12345
    out: str = "out"
    threads: int = 1
    omega: tuple = (0.3, 0.8)
    domain: DomainConfig = field(default_factory=DomainConfig)
    initial_data: InitialDataConfig = field(default_factory=InitialDataConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    nonlinearity: NonlinearityConfig = field(default_factory=NonlinearityConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    identities: IdentitiesConfig = field(default_factory=IdentitiesConfig)

    def to_dict(self):
        def conv(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            if isinstance(v, tuple):
                return [conv(x) for x in v]
            if isinstance(v, dict):
                return {k: conv(x) for k, x in v.items()}
            return v
        return conv(dataclasses.asdict(self))


# TOML key -> dataclass field where they differ
_RENAMES = {"lambda": "lam"}


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"[{path}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = _RENAMES.get(key, key)
        if name not in fields:
            raise ConfigError(f"unknown key {path + '.' if path else ''}{key}")
        f = fields[name]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        where = f"{path}.{key}" if path else key
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, where)
        else:
            kwargs[name] = _coerce(value, default, where)
    return cls(**kwargs)


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be an array")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    raise ConfigError(f"cannot interpret {where}")


def _validate(cfg):
    try:
        L = check_positive(cfg.domain.length, "domain.length")
        check_positive(cfg.domain.horizon, "domain.horizon")
        check_interval(cfg.omega, L)
        check_theta_exp(cfg.discretization.theta_exp)
        check_positive(cfg.discretization.h, "discretization.h")
        for h in cfg.discretization.h_sequence:
            if isinstance(h, bool) or not isinstance(h, (int, float)) or not 0 < h < L:
                raise ValueError(f"h_sequence entries must lie in (0, L), got {h!r}")
        if cfg.discretization.n_steps < 0:
            raise ValueError("discretization.n_steps must be >= 0")
        check_positive(cfg.penalty.c2, "penalty.c2")
        check_positive(cfg.solver.cg_tol, "solver.cg_tol")
        check_positive(cfg.solver.fp_tol, "solver.fp_tol")
        check_positive(cfg.solver.fp_max, "solver.fp_max", integer=True)
        if cfg.solver.cg_max_iter < 0:
            raise ValueError("solver.cg_max_iter must be >= 0")
        check_positive(cfg.threads, "threads", integer=True)
        if not 0 <= cfg.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        check_positive(cfg.audit.samples, "audit.samples", integer=True)
        check_positive(cfg.audit.observability_samples, "audit.observability_samples",
                       integer=True)
        check_positive(cfg.audit.concentration, "audit.concentration")
        check_positive(cfg.audit.order_h, "audit.order_h")
        check_positive(cfg.identities.trials, "identities.trials", integer=True)
        for n in cfg.identities.n_values + cfg.identities.m_values:
            check_positive(n, "identities grid size", integer=True)
        if cfg.initial_data.kind not in ("modes", "random", "zero"):
            raise ValueError(f"initial_data.kind must be modes|random|zero")
        if cfg.potential.kind not in ("zero", "constant", "tabulated"):
            raise ValueError("potential.kind must be zero|constant|tabulated")
        if cfg.potential.kind == "tabulated":
            t, x = np.asarray(cfg.potential.t_points), np.asarray(cfg.potential.x_points)
            vals = np.asarray(cfg.potential.values, dtype=float)
            if vals.shape != (t.size, x.size) or t.size < 2 or x.size < 2:
                raise ValueError("potential.values must be a len(t_points) x len(x_points) table")
        if cfg.nonlinearity.kind not in ("none", "sine", "linear", "table"):
            raise ValueError("nonlinearity.kind must be none|sine|linear|table")
        w = cfg.weights
        from .weights import CalibrationConstants
        CalibrationConstants(w.epsilon0, w.tau2, w.delta1, w.lam, w.h0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path=None, overrides=None):
    """Read and validate a config file (``None`` gives the defaults)."""
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
    data.update(overrides or {})
    return _validate(_build(ExperimentConfig, data, ""))


def config_from_dict(data):
    return _validate(_build(ExperimentConfig, dict(data), ""))

"""Fully discrete Carleman estimates and penalised HUM controls for the 1-D heat equation."""
from .audit import (CarlemanReport, ObservabilityReport, audit_weight_orders, carleman_sides,
                    estimate_observability, time_reverse)
from .calculus import run_identity_suite, verify_identity
from .estimators import HUMController, SemilinearHUMController
from .exceptions import (ConvergenceError, InfeasibleParameters, LongHorizonError,
                         PlacementError, StabilityError)
from .hum import (ControlProblem, HUMSolution, dense_gramian, gramian_apply, solve_hum,
                  solve_hum_long_horizon, solve_semilinear)
from .mesh import GridFunction, SpaceMesh, SpaceTimeGrid, TimeGrid
from .solvers import Nonlinearity, PotentialField, solve_adjoint, solve_forward, thomas_solve
from .weights import CalibrationConstants, ParameterLedger, WeightSystem, calibrate

__version__ = "0.1.0"

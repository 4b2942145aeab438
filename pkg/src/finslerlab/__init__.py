"""finslerlab: residual-based numerical checks for Finsler geometry.

Builds exact connection and curvature data for configurable Finsler metric
families via truncated Taylor arithmetic, verifies concircular vector-field
candidates, classifies special Finsler spaces and recurrence types, and runs
every implication between those notions as a property test over sampled
admissible points.
"""

__version__ = "0.1.0"

from .concircular import CandidateField, ConcircularReport, consequence_battery, fit_and_verify
from .connection import ConnectionData, cartan_coefficients, frame, h_cov_derive, spray_and_nonlinear, v_cov_derive
from .curvature import CurvatureData, curvatures, identity_battery
from .classify import classify_special, fit_recurrence, theorem_harness
from .diffcore import MultiDual, derive, fd_check, taylor_space
from .errors import AdmissibilityError, ConfigError, DomainEvalError, ExpressionError, FinslerError
from .metric import (JetPoint, MetricModel, PointTensor, angular_metric,
                     cartan_tensor, contracted_torsion, fundamental_tensor,
                     sample_points, validate_model)
from .tolerances import TolerancePolicy

__all__ = [
    "AdmissibilityError", "CandidateField", "ConcircularReport", "ConfigError",
    "ConnectionData", "CurvatureData", "DomainEvalError", "ExpressionError",
    "FinslerError", "JetPoint", "MetricModel", "MultiDual", "PointTensor",
    "TolerancePolicy", "angular_metric", "cartan_coefficients", "cartan_tensor",
    "classify_special", "consequence_battery", "contracted_torsion",
    "curvatures", "derive", "fd_check", "fit_and_verify", "fit_recurrence",
    "frame", "fundamental_tensor", "h_cov_derive", "identity_battery",
    "sample_points", "spray_and_nonlinear", "taylor_space", "theorem_harness",
    "v_cov_derive", "validate_model",
]

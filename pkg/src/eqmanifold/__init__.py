"""Local analysis of vector fields with a codimension-one manifold of equilibria {x = 0}."""
from .classify import ClassificationReport, classify, parameter_case_classify, singularity_order
from .desingular import divide_by_x, drift_at, verify_manifold
from .dynamics import (
    Trajectory,
    TrajectoryOptions,
    cusp_fold_curve,
    heteroclinic_targets,
    integrate,
    phase_portrait,
    transcritical_curve,
)
from .errors import EqManifoldError
from .expr import Expression, differentiate, parse_expression
from .field import BUILTINS, FieldModel, Tolerances, builtin, jet, load_problem
from .flowbox import FlowBoxChart, build_chart, chart_to_phase, phase_to_chart

__version__ = "0.1.0"

__all__ = [
    "BUILTINS", "ClassificationReport", "EqManifoldError", "Expression", "FieldModel",
    "FlowBoxChart", "Tolerances", "Trajectory", "TrajectoryOptions", "build_chart", "builtin",
    "chart_to_phase", "classify", "cusp_fold_curve", "differentiate", "divide_by_x", "drift_at",
    "heteroclinic_targets", "integrate", "jet", "load_problem", "parameter_case_classify",
    "parse_expression", "phase_portrait", "phase_to_chart", "singularity_order",
    "transcritical_curve", "verify_manifold",
]

"""Pressure-driven channel flow coupled to a compliant wall.

The flow is solved on a fixed reference rectangle through the height map
``x2 = y2 h(y1, t)``; the wall is a damped string with a bending term.
The deformation-dependent nonlinearity is resolved by a global fixed-point
iteration over whole wall trajectories.
"""
from .analysis import (DependenceReport, EquicontinuityProfile, IdentityResult, consistency_study,
                       dependence_experiment, equicontinuity_profile, korn_constant,
                       verify_identity)
from .config import ModelConfig, apply_overrides, format_config, load_config, parse_config
from .coupling import (CoupledModel, IterationReport, Trajectory, evaluate_F, global_iterate,
                       z_distance)
from .errors import (AdmissibilityError, ChanFsiError, ConfigError, DimensionError, DomainError,
                     SolverError)
from .fluid import BoundaryPressures, FluidStepper, SchemeParams
from .geometry import (AdmissibilityParams, DeformationHistory, ReferenceRadius, check_admissible,
                       error_matrices, eval_deformation, piola_apply, point_transforms)
from .operators import FlowState, Grid2D
from .structure import WallParams, WallState

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "AdmissibilityParams", "BoundaryPressures", "ChanFsiError",
    "ConfigError", "CoupledModel", "DeformationHistory", "DependenceReport", "DimensionError",
    "DomainError", "EquicontinuityProfile", "FlowState", "FluidStepper", "Grid2D",
    "IdentityResult", "IterationReport", "ModelConfig", "ReferenceRadius", "SchemeParams",
    "SolverError", "Trajectory", "WallParams", "WallState", "apply_overrides",
    "check_admissible", "consistency_study", "dependence_experiment", "equicontinuity_profile",
    "error_matrices", "eval_deformation", "evaluate_F", "format_config", "global_iterate",
    "korn_constant", "load_config", "parse_config", "piola_apply", "point_transforms",
    "verify_identity", "z_distance",
]

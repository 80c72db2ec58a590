"""Finite element laboratory for concave-convex quasilinear Dirichlet problems
-Δ_p u = λ k u^q ± h u^σ with variable weights."""

from .branch import (
    BranchPoint,
    LambdaStarEstimate,
    estimate_lambda_star_plus,
    monotone_iterate,
    sweep_minimal_branch,
)
from .discretization import GridFunction, Mesh, WeightField, build_mesh
from .eigen import EigenPair, first_eigenpair
from .errors import (
    CCPlapError,
    DomainError,
    IncompatibleFieldsError,
    InvalidMeshError,
    InvalidObstacleError,
    InvalidSpecError,
    InvalidWeightError,
    NonConvergenceError,
)
from .nlsolve import newton_engine, solve_concave, solve_load, solve_torsion
from .plap import ProblemSpec, SolverOptions, energy_E, energy_F, jacobian, plap_apply, weak_residual
from .subsuper import SubSuperBundle, build_bundle
from .varmin import (
    MinimizeReport,
    coercivity_floor,
    compute_Lambda,
    estimate_lambda_star_minus,
    minimize_F,
    obstacle_minimize,
)
from .verify import boundary_slope_check, check_comparison, check_identities, picone_R

__version__ = "0.1.0"

__all__ = [
    "BranchPoint",
    "CCPlapError",
    "DomainError",
    "EigenPair",
    "GridFunction",
    "IncompatibleFieldsError",
    "InvalidMeshError",
    "InvalidObstacleError",
    "InvalidSpecError",
    "InvalidWeightError",
    "LambdaStarEstimate",
    "Mesh",
    "MinimizeReport",
    "NonConvergenceError",
    "ProblemSpec",
    "SolverOptions",
    "SubSuperBundle",
    "WeightField",
    "boundary_slope_check",
    "build_bundle",
    "build_mesh",
    "check_comparison",
    "check_identities",
    "coercivity_floor",
    "compute_Lambda",
    "energy_E",
    "energy_F",
    "estimate_lambda_star_minus",
    "estimate_lambda_star_plus",
    "first_eigenpair",
    "jacobian",
    "minimize_F",
    "monotone_iterate",
    "newton_engine",
    "obstacle_minimize",
    "picone_R",
    "plap_apply",
    "solve_concave",
    "solve_load",
    "solve_torsion",
    "sweep_minimal_branch",
    "weak_residual",
]

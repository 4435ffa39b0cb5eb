"""Reconstruction of initial sources for semilinear stochastic wave equations
from noisy partial lateral Cauchy data, by Adam minimization of a
Carleman-weighted Tikhonov functional averaged over sample paths; includes
the forward simulator used to manufacture the data."""

__version__ = "0.1.0"

from .mesh import Field, Mesh, build_mesh, cfl_number
from .weights import CarlemanParams, check_condition_psi2, classify_boundary, psi, theta, theta0
from .stochastic import BrownianPath, sample_path, split_seed
from .forward import (
    CauchyData,
    Nonlinearity,
    NONLINEARITIES,
    extract_neumann,
    generate_dataset,
    restrict_to_subdomain,
    solve_forward,
)
from .objective import DofLayout, ObjectiveContext, eval_F_field, eval_J, grad_J, phi_field
from .optimizer import AdamParams, AdamState, adam_step, cg_minimize, minimize
from .driver import RunPlan, RunResult, consecutive_difference, l2_relative_error, plan_from_spec, run_inverse
from .experiments import ExperimentSpec, registry, experiment_ids

__all__ = [
    "__version__",
    "Field", "Mesh", "build_mesh", "cfl_number",
    "CarlemanParams", "check_condition_psi2", "classify_boundary", "psi", "theta", "theta0",
    "BrownianPath", "sample_path", "split_seed",
    "CauchyData", "Nonlinearity", "NONLINEARITIES", "extract_neumann",
    "generate_dataset", "restrict_to_subdomain", "solve_forward",
    "DofLayout", "ObjectiveContext", "eval_F_field", "eval_J", "grad_J", "phi_field",
    "AdamParams", "AdamState", "adam_step", "cg_minimize", "minimize",
    "RunPlan", "RunResult", "consecutive_difference", "l2_relative_error",
    "plan_from_spec", "run_inverse",
    "ExperimentSpec", "registry", "experiment_ids",
]

"""Simulation and verification harness for a triangular cross-diffusion
susceptible/infective reaction-diffusion model."""

__version__ = "0.1.0"

from .constants import (
    AdmissibilityReport,
    DerivedConstants,
    compute_K,
    compute_delta_max,
    compute_epsilon_max,
    compute_gamma,
    derive_constants,
    discriminant,
    pi_bound,
    verify_admissible,
)
from .errors import (
    ConfigError,
    DomainError,
    HypothesisError,
    InputError,
    IntegrityError,
    TransformUnavailable,
)
from .grid import Grid, extrema, integrate, laplacian
from .model import (
    FieldSpec,
    Forcing,
    InitialData,
    ModelParams,
    Nonlinearity,
    eval_f,
    eval_lambda,
    growth_ratio,
    validate_hypotheses,
)
from .monitor import (
    MonitorReport,
    check_dissipation,
    check_envelope,
    check_invariants,
    decay_envelope,
    lyapunov_J,
)
from .solver import (
    State,
    StepControl,
    TransformedState,
    from_w,
    run,
    stable_dt,
    step_direct,
    step_transformed,
    to_w,
)
from .config import SimulationConfig, load_config, write_config

__all__ = [
    "AdmissibilityReport",
    "DerivedConstants",
    "compute_K",
    "compute_delta_max",
    "compute_epsilon_max",
    "compute_gamma",
    "derive_constants",
    "discriminant",
    "pi_bound",
    "verify_admissible",
    "ConfigError",
    "DomainError",
    "HypothesisError",
    "InputError",
    "IntegrityError",
    "TransformUnavailable",
    "Grid",
    "extrema",
    "integrate",
    "laplacian",
    "FieldSpec",
    "Forcing",
    "InitialData",
    "ModelParams",
    "Nonlinearity",
    "eval_f",
    "eval_lambda",
    "growth_ratio",
    "validate_hypotheses",
    "MonitorReport",
    "check_dissipation",
    "check_envelope",
    "check_invariants",
    "decay_envelope",
    "lyapunov_J",
    "State",
    "StepControl",
    "TransformedState",
    "from_w",
    "run",
    "stable_dt",
    "step_direct",
    "step_transformed",
    "to_w",
    "SimulationConfig",
    "load_config",
    "write_config",
]

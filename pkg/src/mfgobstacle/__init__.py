"""Stationary first-order mean-field-game obstacle problems on the torus.

Library layout: ``model`` holds the continuous problem data and assumption
audit, ``grid`` the periodic discrete calculus, ``solver`` the penalized
Newton solver, ``continuation`` the epsilon sweep and limit residuals,
``diagnostics`` the estimate reports and uniqueness test, and ``cli`` the
configuration-driven runner.
"""
from .continuation import (
    EpsilonSchedule,
    LimitReport,
    LimitSolution,
    TraceRow,
    TrendFit,
    limit_residuals,
    run_continuation,
    uplus_trend,
    write_trace_csv,
)
from .diagnostics import (
    EstimateReport,
    UniquenessGap,
    UniformityVerdict,
    assumption_constants,
    energy_identity_gap,
    estimate_report,
    uniqueness_gap,
)
from .errors import (
    AssumptionError,
    ConfigError,
    ContinuationError,
    DomainError,
    GridMismatchError,
    SolverError,
)
from .grid import (
    GridField,
    GridVectorField,
    NormBundle,
    PeriodicGrid,
    divergence,
    gradient,
    integrate,
    laplacian,
    norms,
    read_field_csv,
    write_field_csv,
)
from .model import (
    AssumptionCheck,
    AssumptionReport,
    CouplingSpec,
    HamiltonianJet,
    HamiltonianSpec,
    ModelSpec,
    PenalizationSpec,
    PotentialTerm,
    alpha_max,
    check_assumptions,
    coupling_floor,
    eval_coupling,
    eval_hamiltonian,
    eval_penalization,
    invert_coupling,
    validate_model,
)
from .solver import (
    PenalizedSolution,
    SolverOptions,
    jacobian_matrix,
    kfp_operator,
    linearized_hj_operator,
    mass_identity_gap,
    newton_solve,
    recover_theta,
    residual,
    theta_floor,
)
from .config import RunConfig, config_from_file, parse_config, serialize_config

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""Model-free learning of steady-state Kalman filters.

The package learns the steady-state filter of a discrete-time linear
system from trajectory simulation alone, by decomposing the problem into
one-step quadratic subproblems solved forward in time with (zeroth-order)
policy gradient, and ships exact Riccati-based reference solvers plus a
benchmark harness for validation.
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionMismatchError,
    DivergenceError,
    NumericsError,
    PreconditionError,
    RhpgKfError,
)
from .harness import (
    ExperimentSpec,
    derive_seed,
    derive_seed_sequence,
    load_config,
    read_records_csv,
    run_benchmark,
    write_records_csv,
)
from .rhpg import (
    InnerSolveResult,
    InnerSolverConfig,
    PolicyEvaluation,
    RunRecord,
    StageRecord,
    evaluate_policy,
    iteration_budget,
    pg_step,
    rhpg_kf,
    solve_subproblem_exact,
    solve_subproblem_zo,
)
from .riccati import (
    ErrorConstants,
    FareSolution,
    RiccatiTrace,
    error_constants,
    finite_gain,
    frde_step,
    gain_gap_identity,
    horizon_bound,
    lyapunov_step,
    rde_difference_step,
    riccati_trace,
    solve_fare,
)
from .simkit import (
    FilterSequence,
    FilterStage,
    GradientEstimate,
    MomentSet,
    Trajectory,
    exact_subproblem_gradient,
    propagate_moments,
    rollout,
    subproblem_objective,
    subproblem_optimum,
    zo_oracle,
)
from .sysmodel import (
    LtiSystem,
    ValidationReport,
    observability_rank,
    psd_sqrt,
    spectral_radius,
    validate_system,
    weighted_induced_norm,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DimensionMismatchError",
    "DivergenceError",
    "ErrorConstants",
    "ExperimentSpec",
    "FareSolution",
    "FilterSequence",
    "FilterStage",
    "GradientEstimate",
    "InnerSolveResult",
    "InnerSolverConfig",
    "LtiSystem",
    "MomentSet",
    "NumericsError",
    "PolicyEvaluation",
    "PreconditionError",
    "RhpgKfError",
    "RiccatiTrace",
    "RunRecord",
    "StageRecord",
    "Trajectory",
    "ValidationReport",
    "derive_seed",
    "derive_seed_sequence",
    "error_constants",
    "evaluate_policy",
    "exact_subproblem_gradient",
    "finite_gain",
    "frde_step",
    "gain_gap_identity",
    "horizon_bound",
    "iteration_budget",
    "load_config",
    "lyapunov_step",
    "observability_rank",
    "pg_step",
    "propagate_moments",
    "psd_sqrt",
    "rde_difference_step",
    "read_records_csv",
    "rhpg_kf",
    "riccati_trace",
    "rollout",
    "run_benchmark",
    "solve_fare",
    "solve_subproblem_exact",
    "solve_subproblem_zo",
    "spectral_radius",
    "subproblem_objective",
    "subproblem_optimum",
    "validate_system",
    "weighted_induced_norm",
    "write_records_csv",
    "zo_oracle",
]

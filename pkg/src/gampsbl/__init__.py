"""Sparse Bayesian learning with damped Gaussian message passing.

Recovers sparse vectors (and jointly sparse, temporally correlated frame
matrices) from underdetermined linear measurements. The package pairs a
cubic-cost exact EM reference with message-passing solvers whose damping
is chosen from the measurement matrix's spectral properties, plus oracle
bounds and a Monte-Carlo benchmark harness.
"""

from .bounds import SksResult, genie_mmse, sks
from .datasets import (
    ENSEMBLE_KINDS,
    EnsembleSpec,
    MmvProblem,
    SmvProblem,
    generate_matrix,
    generate_mmv,
    generate_smv,
)
from .estimators import EmSblRegression, GgampSblRegression, GgampTsblRegression
from .exact import (
    GAMMA_FLOOR,
    EmSblOptions,
    EmSblResult,
    Posterior,
    SblState,
    SingularSystemError,
    e_step_exact,
    m_step_gamma,
    m_step_sigma2,
    run_em_sbl,
    sbl_cost,
)
from .gamp import (
    DampingConfig,
    GampDivergenceError,
    GampState,
    choose_damping,
    damping_threshold,
    gamp_iterate,
    gs_awgn,
    gx_gaussian,
    precompute_s,
    spectral_norm_sq,
)
from .harness import ExperimentPlan, format_summary, run_plan, summarize
from .io import (
    RESULT_COLUMNS,
    ResultRecord,
    load_problem,
    read_results_csv,
    save_problem,
    write_results_csv,
)
from .metrics import NMSE_FLOOR_DB, nmse_db, tnmse_db
from .mmv import (
    GgampTsblOptions,
    MmvState,
    TemporalMessages,
    backward_pass,
    forward_pass,
    m_step_mmv,
    refresh_messages,
    solve_mmv,
    within_update,
)
from .smv import (
    GgampSblOptions,
    SolveResult,
    SolverDivergenceError,
    cost_descent_report,
    solve_smv,
)

__version__ = "0.1.0"

__all__ = [
    "ENSEMBLE_KINDS",
    "EnsembleSpec",
    "SmvProblem",
    "MmvProblem",
    "generate_matrix",
    "generate_smv",
    "generate_mmv",
    "GAMMA_FLOOR",
    "SblState",
    "Posterior",
    "EmSblOptions",
    "EmSblResult",
    "SingularSystemError",
    "e_step_exact",
    "m_step_gamma",
    "m_step_sigma2",
    "sbl_cost",
    "run_em_sbl",
    "DampingConfig",
    "GampState",
    "GampDivergenceError",
    "gx_gaussian",
    "gs_awgn",
    "precompute_s",
    "gamp_iterate",
    "damping_threshold",
    "spectral_norm_sq",
    "choose_damping",
    "GgampSblOptions",
    "SolveResult",
    "SolverDivergenceError",
    "solve_smv",
    "cost_descent_report",
    "GgampTsblOptions",
    "TemporalMessages",
    "MmvState",
    "forward_pass",
    "backward_pass",
    "refresh_messages",
    "within_update",
    "m_step_mmv",
    "solve_mmv",
    "genie_mmse",
    "sks",
    "SksResult",
    "NMSE_FLOOR_DB",
    "nmse_db",
    "tnmse_db",
    "ExperimentPlan",
    "run_plan",
    "summarize",
    "format_summary",
    "ResultRecord",
    "RESULT_COLUMNS",
    "save_problem",
    "load_problem",
    "write_results_csv",
    "read_results_csv",
    "EmSblRegression",
    "GgampSblRegression",
    "GgampTsblRegression",
]

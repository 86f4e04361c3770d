"""Deterministic simulator and analysis tools for federated online learning.

Clients run local online gradient steps against a drifting stochastic
environment and periodically average their iterates. The package provides the
simulation engine, closed-form and Monte Carlo oracles for the comparator and
heterogeneity quantities, regret bound evaluation, empirical audits of the
supporting inequalities, and a reporting harness with a CLI.
"""

from .adversary import KINDS, AdversarySchedule, make_schedule
from .bounds import (
    AuditPreconditionError,
    AuditVerdict,
    BoundReport,
    burn_in_cutoff,
    burn_in_cutoff_ceiling,
    evaluate_convex_bound,
    evaluate_strong_bound,
    split_optimality_gap,
)
from .core import (
    UNBOUNDED,
    ConfigError,
    DistParams,
    ExperimentConfig,
    RngStream,
    StepSizePolicy,
    TheoryConstants,
    load_config,
    resolve_step_sizes,
)
from .engine import (
    DivergenceError,
    TraceRecord,
    apply_sync,
    consensus_error,
    project,
    run_replicate,
)
from .harness import (
    ExperimentResult,
    SpeedupStudy,
    SweepResult,
    TauStudy,
    audit_run,
    build_problem,
    emit_run,
    emit_speedup,
    emit_sweep,
    emit_tau,
    fit_log_law,
    fit_power_law,
    recommended_sync_period,
    run_experiment,
    speedup_study,
    sweep,
    tau_study,
)
from .losses import AnalyticUnavailable, LossModel, make_loss_model
from .oracles import (
    ComparatorSet,
    HeterogeneityProfile,
    InsufficientBudgetError,
    OracleError,
    compute_comparators,
    compute_profile,
    make_global_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "AdversarySchedule",
    "AnalyticUnavailable",
    "AuditPreconditionError",
    "AuditVerdict",
    "BoundReport",
    "ComparatorSet",
    "ConfigError",
    "DistParams",
    "DivergenceError",
    "ExperimentConfig",
    "ExperimentResult",
    "HeterogeneityProfile",
    "InsufficientBudgetError",
    "KINDS",
    "LossModel",
    "OracleError",
    "RngStream",
    "SpeedupStudy",
    "StepSizePolicy",
    "SweepResult",
    "TauStudy",
    "TheoryConstants",
    "TraceRecord",
    "UNBOUNDED",
    "apply_sync",
    "audit_run",
    "build_problem",
    "burn_in_cutoff",
    "burn_in_cutoff_ceiling",
    "compute_comparators",
    "compute_profile",
    "consensus_error",
    "emit_run",
    "emit_speedup",
    "emit_sweep",
    "emit_tau",
    "evaluate_convex_bound",
    "evaluate_strong_bound",
    "fit_log_law",
    "fit_power_law",
    "load_config",
    "make_global_oracle",
    "make_loss_model",
    "make_schedule",
    "project",
    "recommended_sync_period",
    "resolve_step_sizes",
    "run_experiment",
    "run_replicate",
    "speedup_study",
    "split_optimality_gap",
    "sweep",
    "tau_study",
    "__version__",
]

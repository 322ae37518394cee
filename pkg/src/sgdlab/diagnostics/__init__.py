"""Ensemble simulation, rate predictions and fits, and lemma checks."""

from .engine import (
    AllDivergedError,
    Ensemble,
    EnsembleSummary,
    RunSpec,
    TrajectoryRecord,
    record_rows,
    run_ensemble,
    run_trajectory,
    simulate,
    simulate_ensemble,
    summarize,
)
from .lemmas import CheckResult, LemmaReport, PlateauResult, applicable_checks, lemma_suite, plateau_check
from .rates import (
    RateFit,
    TimeAverageClass,
    TimeAverageOrder,
    classify_time_average_order,
    compute_p,
    cumulative_steps,
    fit_decay_exponent,
    fit_log_linear,
    loglog_slope,
    predicted_rate_envelope,
    rate_exponent,
    time_average_curve,
)

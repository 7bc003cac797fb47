"""Skipped-point analysis of near-critical transient (1,2) random walks.

A (1,2) random walk steps +2 with probability p_n = 1/3 + r_n and -1
otherwise.  When the perturbation r_n decays to zero the walk is nearly
critical, and the sites it jumps over and never revisits -- skipped points
-- carry the fine structure of its transience.  This package computes the
continued-fraction tails and D-series that control escape probabilities,
exact skip probabilities via banded boundary-value solves, reproducible
Monte Carlo experiments, and finite/infinite skipped-point classification.
"""
from .criteria import Verdict, classify_numeric, classify_table, classify_theorem2, recurrence_check
from .dseries import (
    DTable,
    NotConvergedError,
    SeriesDiagnostics,
    build_d_table,
    criterion_series,
    d_limit,
    d_partial,
    series_diagnostics,
)
from .exact import (
    HittingSolution,
    SkipProbability,
    SolveError,
    ab_ratios,
    escape_to_infinity,
    eta,
    joint_skip_bounds,
    joint_skip_prob,
    k0_epsilon,
    layer_entry,
    p_abc,
    q1_abc,
    q2_abc,
    q_abc,
    sandwich_bounds,
    skip_prob,
    skip_prob_bounds,
    solve_interval,
)
from .montecarlo import (
    GrowthTable,
    SkipExperiment,
    SkipStats,
    count_growth,
    design_experiment,
    estimate_skip,
    return_probability,
    simulate_walk,
)
from .perturbation import (
    ChainParams,
    FamilyError,
    PerturbationSpec,
    check_regularity,
    spec_from_json,
    spec_to_json,
)
from .tails import NonContractingError, TailTable, compute_tails, monotonicity_index

__version__ = "0.1.0"

__all__ = [
    "ChainParams",
    "DTable",
    "FamilyError",
    "GrowthTable",
    "HittingSolution",
    "NonContractingError",
    "NotConvergedError",
    "PerturbationSpec",
    "SeriesDiagnostics",
    "SkipExperiment",
    "SkipProbability",
    "SkipStats",
    "SolveError",
    "TailTable",
    "Verdict",
    "ab_ratios",
    "build_d_table",
    "check_regularity",
    "classify_numeric",
    "classify_table",
    "classify_theorem2",
    "compute_tails",
    "count_growth",
    "criterion_series",
    "d_limit",
    "d_partial",
    "design_experiment",
    "escape_to_infinity",
    "estimate_skip",
    "eta",
    "joint_skip_bounds",
    "joint_skip_prob",
    "k0_epsilon",
    "layer_entry",
    "monotonicity_index",
    "p_abc",
    "q1_abc",
    "q2_abc",
    "q_abc",
    "recurrence_check",
    "return_probability",
    "sandwich_bounds",
    "series_diagnostics",
    "simulate_walk",
    "skip_prob",
    "skip_prob_bounds",
    "solve_interval",
    "spec_from_json",
    "spec_to_json",
]

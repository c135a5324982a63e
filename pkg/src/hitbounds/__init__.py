"""Tight expected-hitting-time bounds for interval-rate Markov jump models.

A model is a finite state space, a target set, and per-pair intervals
``[lower, upper]`` for the off-diagonal transition rates.  The package
computes the exact lower and upper expected times to reach the target over
*all* processes consistent with the intervals — homogeneous, time-varying,
or history-dependent alike — plus precise-chain references, Monte Carlo
cross-checks, and contraction diagnostics.

>>> import numpy as np, hitbounds as hb
>>> lower = np.array([[0, 1.0, 0.5], [0, 0, 1.0], [0, 0, 0]])
>>> upper = np.array([[0, 2.0, 1.0], [1.0, 0, 3.0], [0, 0, 0]])
>>> model = hb.Model(hb.StateSpace(["s0", "s1", "s2"]),
...                  hb.TargetSet([2], 3), hb.IntervalRateSet(lower, upper))
>>> result = hb.solve_value_iteration(model)
>>> np.round(result.lower, 6).tolist()
[0.555556, 0.333333, 0.0]
"""

__version__ = "0.1.0"

from .core import (IntervalRateSet, Model, StateSpace, TargetSet,
                   ValidationReport, Violation, as_value_function,
                   is_rate_matrix, is_transition_matrix, member_matrix,
                   require_valid, validate_model)
from .diagnostics import (QuasicontractivityReport, StabilityReport, StarNorm,
                          build_star_norm, quasicontractivity_check,
                          stability_constants, star_norm)
from .errors import (AssumptionViolationError, BoundViolationError,
                     EstimationError, HitBoundsError, InfeasibilityError,
                     ModelFormatError, NonConvergenceError, StepSizeError,
                     ValidationError)
from .hitting import (ConvergenceStudy, HittingTimeResult, convergence_study,
                      precise_continuous, precise_discrete, residual,
                      solve_discretized, solve_policy_iteration,
                      solve_value_iteration)
from .lowerops import (SemigroupMap, apply_lower, apply_upper, argmax_matrix,
                       argmin_matrix, lower_exp, matrix_exp, op_norm, restrict,
                       upper_exp)
from .mc import (EmpiricalEstimate, TrajectorySample, batch_homogeneous,
                 batch_piecewise, batch_random_member_per_jump,
                 default_horizon, estimate_from_arrays, estimate_hitting,
                 sample_history_dependent, sample_homogeneous,
                 sample_inhomogeneous)
from .structure import (ReachabilityCertificate, check_absorbing,
                        check_lower_reachability)

__all__ = [
    "__version__",
    # core
    "StateSpace", "TargetSet", "IntervalRateSet", "Model", "Violation",
    "ValidationReport", "as_value_function", "is_rate_matrix",
    "is_transition_matrix", "member_matrix", "validate_model", "require_valid",
    # operators
    "apply_lower", "apply_upper", "argmin_matrix", "argmax_matrix",
    "lower_exp", "upper_exp", "matrix_exp", "restrict", "op_norm",
    "SemigroupMap",
    # structure
    "check_absorbing", "check_lower_reachability", "ReachabilityCertificate",
    # hitting
    "HittingTimeResult", "ConvergenceStudy", "precise_continuous",
    "precise_discrete", "solve_value_iteration", "solve_policy_iteration",
    "solve_discretized", "residual", "convergence_study",
    # mc
    "TrajectorySample", "EmpiricalEstimate", "sample_homogeneous",
    "sample_inhomogeneous", "sample_history_dependent", "estimate_hitting",
    "estimate_from_arrays", "batch_homogeneous", "batch_piecewise",
    "batch_random_member_per_jump", "default_horizon",
    # diagnostics
    "StabilityReport", "StarNorm", "QuasicontractivityReport",
    "stability_constants", "build_star_norm", "star_norm",
    "quasicontractivity_check",
    # errors
    "HitBoundsError", "ModelFormatError", "ValidationError",
    "BoundViolationError", "StepSizeError", "InfeasibilityError",
    "NonConvergenceError", "AssumptionViolationError", "EstimationError",
]

"""Lower/upper rate operators, transition semigroups, and restrictions.

For a row-wise interval set of rate matrices, the lower rate operator has the
closed form

    (Qf)(x) = sum_{y != x} q*(y) * (f(y) - f(x)),

where ``q*(y)`` is the lower bound when ``f(y) > f(x)`` and the upper bound
when ``f(y) < f(x)`` (ties take the lower bound — the coefficient is zero, so
any feasible rate attains the infimum, and a fixed rule keeps the minimizing
member deterministic).  The upper operator is the conjugate ``-Q(-f)``.

The lower/upper *transition* semigroup at time ``t`` is approximated by the
Euler product ``(I + (t/n) Q)^n``, which is a genuine lower/upper transition
operator whenever ``(t/n) ||Q|| <= 1`` and converges with an a-priori error
bound proportional to ``t^2 ||Q||^2 / n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .core import IntervalRateSet, TargetSet, as_value_function, is_rate_matrix
from .errors import StepSizeError

#: Hard cap on Euler-product step counts; beyond this a warning is issued and
#: the requested tolerance may not be met.
MAX_EXP_STEPS = 2 ** 24


class StepCountWarning(UserWarning):
    """The step count needed for a requested tolerance exceeds the cap."""


def apply_lower(rates: IntervalRateSet, f) -> np.ndarray:
    """Apply the lower rate operator: pointwise min over members of Qf."""
    f = as_value_function(f, rates.size)
    d = f[None, :] - f[:, None]  # d[x, y] = f(y) - f(x)
    w = np.where(d < 0.0, rates.upper, rates.lower)
    return np.einsum("xy,xy->x", w, d)


def apply_upper(rates: IntervalRateSet, f) -> np.ndarray:
    """Apply the upper rate operator (exact conjugate of :func:`apply_lower`)."""
    return -apply_lower(rates, -as_value_function(f, rates.size))


def argmin_matrix(rates: IntervalRateSet, f) -> np.ndarray:
    """A member rate matrix attaining ``Qf = apply_lower(f)``.

    Uses the same bound selection and tie rule as :func:`apply_lower`, so the
    returned matrix is deterministic.
    """
    f = as_value_function(f, rates.size)
    d = f[None, :] - f[:, None]
    Q = np.where(d < 0.0, rates.upper, rates.lower).copy()
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def argmax_matrix(rates: IntervalRateSet, f) -> np.ndarray:
    """A member rate matrix attaining ``Qf = apply_upper(f)``."""
    return argmin_matrix(rates, -as_value_function(f, rates.size))


def op_norm(M: np.ndarray) -> float:
    """Operator norm induced by the supremum norm: max absolute row sum."""
    M = np.asarray(M, dtype=np.float64)
    return float(np.abs(M).sum(axis=1).max())


def rate_norm_bound(rates: IntervalRateSet) -> float:
    """Upper bound on the norms of all members and of the lower/upper
    operator itself: twice the largest upper-bound row sum."""
    return rates.norm_bound()


def exp_step_count(rates: IntervalRateSet, t: float, tol: float = 1e-9,
                   warn: bool = True) -> int:
    """Number of Euler factors for time ``t`` at a-priori tolerance ``tol``.

    Picks the smallest n with (t/n)*||Q|| <= 1 and t^2 ||Q||^2 / n <= tol,
    capped at ``MAX_EXP_STEPS`` (with a warning, since the tolerance is then
    no longer guaranteed).
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    if t == 0:
        return 0
    bound = rates.norm_bound()
    n_stab = max(1, math.ceil(t * bound))
    n_acc = math.ceil(t * t * bound * bound / tol) if tol > 0 else MAX_EXP_STEPS
    n = max(n_stab, n_acc)
    if n > MAX_EXP_STEPS:
        if n_stab > MAX_EXP_STEPS:
            raise StepSizeError(
                f"stability needs {n_stab} steps for t={t}, above the cap")
        if warn:
            warnings.warn(
                f"step count {n} capped at {MAX_EXP_STEPS}; achieved error "
                f"bound is {t * t * bound * bound / MAX_EXP_STEPS:.3e}, not "
                f"the requested {tol:.3e}", StepCountWarning, stacklevel=3)
        n = MAX_EXP_STEPS
    return n


@dataclass(frozen=True)
class SemigroupMap:
    """The non-linear map ``f -> (I + (t/steps) Q)^steps f``.

    ``error_bound`` is the a-priori operator-norm distance to the exact
    lower/upper transition operator at time ``t`` (so the error on a vector
    f is at most ``error_bound * ||f||``).
    """

    rates: IntervalRateSet
    t: float
    steps: int
    orientation: str  # "lower" | "upper"
    error_bound: float

    def __post_init__(self):
        if self.orientation not in ("lower", "upper"):
            raise ValueError("orientation must be 'lower' or 'upper'")

    @property
    def delta(self) -> float:
        return self.t / self.steps if self.steps else 0.0

    def __call__(self, f) -> np.ndarray:
        f = as_value_function(f, self.rates.size)
        if self.steps == 0:
            return f.copy()
        return _kernels.euler_product(
            self.rates.lower, self.rates.upper, f, self.delta, self.steps,
            self.orientation == "upper")


def lower_exp(rates: IntervalRateSet, t: float, steps: int | None = None,
              tol: float = 1e-9) -> SemigroupMap:
    """Euler-product approximation of the lower transition operator e^{Qt}.

    With ``steps=None`` the step count is chosen automatically from ``tol``;
    an explicit ``steps`` must satisfy the stability condition
    ``(t/steps) ||Q|| <= 1``.
    """
    return _exp_map(rates, t, steps, tol, "lower")


def upper_exp(rates: IntervalRateSet, t: float, steps: int | None = None,
              tol: float = 1e-9) -> SemigroupMap:
    """Euler-product approximation of the upper transition operator."""
    return _exp_map(rates, t, steps, tol, "upper")


def _exp_map(rates: IntervalRateSet, t: float, steps: int | None, tol: float,
             orientation: str) -> SemigroupMap:
    if t < 0:
        raise ValueError("time must be non-negative")
    bound = rates.norm_bound()
    if t == 0:
        return SemigroupMap(rates, 0.0, 0, orientation, 0.0)
    if steps is None:
        steps = exp_step_count(rates, t, tol)
    else:
        steps = int(steps)
        if steps < 1:
            raise StepSizeError("need at least one step for t > 0")
        if (t / steps) * bound > 1.0 + 1e-12:
            raise StepSizeError(
                f"step t/n = {t / steps:.3e} violates (t/n)*||Q|| <= 1 "
                f"(||Q|| bound {bound:.3e})")
    err = t * t * bound * bound / steps
    return SemigroupMap(rates, float(t), steps, orientation, err)


def matrix_exp(Q: np.ndarray, t: float) -> np.ndarray:
    """Transition matrix e^{Qt} for a precise rate matrix.

    Delegates to scipy's scaling-and-squaring Padé implementation, then
    clips rounding-level negatives and checks the row-sum invariant.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if t < 0:
        raise ValueError("time must be non-negative")
    if not is_rate_matrix(Q, tol=1e-9):
        raise ValueError("matrix_exp requires a rate matrix")
    T = scipy.linalg.expm(Q * t)
    if T.min() < -1e-10:
        raise ArithmeticError(
            f"matrix exponential produced entry {T.min():.3e} < 0")
    np.clip(T, 0.0, None, out=T)
    row_err = np.abs(T.sum(axis=1) - 1.0).max()
    if row_err > 1e-10:
        raise ArithmeticError(
            f"matrix exponential rows deviate from 1 by {row_err:.3e}")
    return T


@dataclass(frozen=True)
class RestrictedOperator:
    """An operator on functions over A^c: zero-extend, apply, restrict.

    For linear operators this agrees with taking the sub-matrix over A^c,
    which :func:`restrict` returns directly when given a matrix.
    """

    op: object  # callable on full-length vectors
    target: TargetSet
    _comp: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_comp", self.target.complement)

    @property
    def dim(self) -> int:
        return len(self._comp)

    def extend(self, f_sub) -> np.ndarray:
        f_sub = np.asarray(f_sub, dtype=np.float64)
        full = np.zeros(self.target.size)
        full[self._comp] = f_sub
        return full

    def __call__(self, f_sub) -> np.ndarray:
        return np.asarray(self.op(self.extend(f_sub)))[self._comp]


def restrict(op, target: TargetSet):
    """Restrict an operator to the complement of the target set.

    Matrices become their A^c x A^c sub-matrix (e.g. a rate matrix becomes
    its subgenerator); callables are wrapped in :class:`RestrictedOperator`.
    """
    if isinstance(op, np.ndarray):
        comp = target.complement
        return op[np.ix_(comp, comp)].copy()
    if callable(op):
        return RestrictedOperator(op, target)
    raise TypeError(f"cannot restrict object of type {type(op)!r}")

"""State spaces, target sets, rate-matrix intervals, and model validation.

The central object is :class:`Model`: a finite labelled state space, a
non-empty proper subset of absorbing target states, and an
:class:`IntervalRateSet` giving independent ``[lower, upper]`` bounds on every
off-diagonal transition rate.  The set of rate matrices induced by such
row-wise box constraints is automatically non-empty, compact, convex, and has
separately specified rows, which is exactly the regularity needed by the
operators in :mod:`hitbounds.lowerops`.

Diagonal rate entries are never stored anywhere in this package; they are
always derived as the negative off-diagonal row sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundViolationError, ValidationError

#: Absolute tolerance for row-sum checks (double precision accumulation over
#: at most ~1e3 states).
ROW_SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class StateSpace:
    """Finite ordered state space with unique labels (size >= 2)."""

    labels: tuple[str, ...]

    def __init__(self, labels: Iterable[str]):
        object.__setattr__(self, "labels", tuple(str(x) for x in labels))
        if len(self.labels) < 2:
            raise ValidationError("state space needs at least two states")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("state labels must be unique")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown state label {label!r}") from None

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TargetSet:
    """Non-empty proper subset of state indices (the set to be hit)."""

    members: frozenset[int]
    size: int  # of the enclosing state space

    def __init__(self, members: Iterable[int], size: int):
        ms = frozenset(int(m) for m in members)
        object.__setattr__(self, "members", ms)
        object.__setattr__(self, "size", int(size))
        if not ms:
            raise ValidationError("target set must be non-empty")
        if any(m < 0 or m >= self.size for m in ms):
            raise ValidationError("target indices out of range")
        if len(ms) >= self.size:
            raise ValidationError("target must be a proper subset of the states")

    @property
    def mask(self) -> np.ndarray:
        """Boolean vector: True on target states."""
        m = np.zeros(self.size, dtype=bool)
        m[list(self.members)] = True
        m.flags.writeable = False
        return m

    @property
    def complement(self) -> np.ndarray:
        """Sorted indices of the non-target states."""
        out = np.flatnonzero(~self.mask)
        out.flags.writeable = False
        return out

    def indicator(self) -> np.ndarray:
        """The 0/1 value function of the target set."""
        return self.mask.astype(np.float64)


def as_value_function(f, size: int) -> np.ndarray:
    """Validate an array-like as a value function over ``size`` states."""
    out = np.asarray(f, dtype=np.float64)
    if out.shape != (size,):
        raise ValueError(f"value function must have shape ({size},), got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("value function entries must be finite")
    return out


def is_rate_matrix(Q: np.ndarray, tol: float = ROW_SUM_TOL) -> bool:
    """True iff off-diagonals are >= 0 and every row sums to 0 within tol."""
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        return False
    off = Q.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0.0):
        return False
    return bool(np.all(np.abs(Q.sum(axis=1)) <= tol))


def is_transition_matrix(T: np.ndarray, tol: float = ROW_SUM_TOL) -> bool:
    """True iff entries are >= 0 and every row sums to 1 within tol."""
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        return False
    if np.any(T < -tol):
        return False
    return bool(np.all(np.abs(T.sum(axis=1) - 1.0) <= tol))


@dataclass(frozen=True)
class IntervalRateSet:
    """Row-wise interval bounds on the off-diagonal transition rates.

    ``lower[x, y] <= q(x, y) <= upper[x, y]`` for ``x != y``; diagonals of the
    stored matrices are zero and ignored.  Every member matrix has its diagonal
    derived as the negative off-diagonal row sum.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lo = np.asarray(lower, dtype=np.float64).copy()
        up = np.asarray(upper, dtype=np.float64).copy()
        if lo.ndim != 2 or lo.shape != up.shape or lo.shape[0] != lo.shape[1]:
            raise ValidationError("bound matrices must be square and same shape")
        if lo.shape[0] < 2:
            raise ValidationError("need at least two states")
        np.fill_diagonal(lo, 0.0)
        np.fill_diagonal(up, 0.0)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ValidationError("rate bounds must be finite")
        if np.any(lo < 0.0):
            raise ValidationError("lower rate bounds must be non-negative")
        if np.any(lo > up):
            bad = np.argwhere(lo > up)[0]
            raise ValidationError(
                f"lower bound exceeds upper bound at ({bad[0]}, {bad[1]})")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(up))

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    @property
    def is_singleton(self) -> bool:
        return bool(np.array_equal(self.lower, self.upper))

    def norm_bound(self) -> float:
        """Cheap upper bound on sup-norms of all members: 2 * max upper row sum."""
        return 2.0 * float(self.upper.sum(axis=1).max())

    def all_lower(self) -> np.ndarray:
        """Member matrix with every off-diagonal at its lower bound."""
        return member_matrix(self, self.lower)

    def all_upper(self) -> np.ndarray:
        """Member matrix with every off-diagonal at its upper bound."""
        return member_matrix(self, self.upper)

    def contains(self, Q: np.ndarray, tol: float = 1e-12) -> bool:
        """True iff Q is a member (off-diagonals within bounds, rows sum 0)."""
        Q = np.asarray(Q, dtype=np.float64)
        if not is_rate_matrix(Q, tol=max(tol, ROW_SUM_TOL)):
            return False
        off = Q.copy()
        np.fill_diagonal(off, 0.0)
        return bool(np.all(off >= self.lower - tol)
                    and np.all(off <= self.upper + tol))


def member_matrix(rates: IntervalRateSet, selection) -> np.ndarray:
    """Build a member rate matrix from per-row off-diagonal choices.

    ``selection`` is a square array of off-diagonal rates (diagonal ignored);
    each entry must lie within the corresponding ``[lower, upper]`` interval.
    The diagonal of the result is the negative off-diagonal row sum.
    """
    sel = np.asarray(selection, dtype=np.float64).copy()
    if sel.shape != rates.lower.shape:
        raise ValueError(f"selection must have shape {rates.lower.shape}")
    np.fill_diagonal(sel, 0.0)
    too_low = sel < rates.lower
    too_high = sel > rates.upper
    if np.any(too_low) or np.any(too_high):
        x, y = np.argwhere(too_low | too_high)[0]
        raise BoundViolationError(
            f"selection {sel[x, y]!r} outside "
            f"[{rates.lower[x, y]}, {rates.upper[x, y]}] at ({x}, {y})")
    Q = sel
    np.fill_diagonal(Q, -Q.sum(axis=1))
    assert is_rate_matrix(Q), "member construction must yield a rate matrix"
    return Q


@dataclass(frozen=True)
class Model:
    """A state space, an absorbing target set, and an interval rate set."""

    space: StateSpace
    target: TargetSet
    rates: IntervalRateSet

    def __post_init__(self):
        n = self.space.size
        if self.target.size != n or self.rates.size != n:
            raise ValidationError("inconsistent dimensions between model parts")

    @property
    def size(self) -> int:
        return self.space.size

    def target_labels(self) -> tuple[str, ...]:
        return tuple(self.space.labels[i] for i in sorted(self.target.members))


@dataclass(frozen=True)
class Violation:
    """One validation failure: a short machine code plus human context."""

    code: str
    states: tuple[int, ...]
    message: str


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_model`; accepted iff no violations."""

    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "model accepted"
        return "; ".join(v.message for v in self.violations)


def validate_model(model: Model) -> ValidationReport:
    """Check bound ordering, the absorbing-target rule, and lower reachability.

    Side-effect free and idempotent; returns a report instead of raising so
    callers can surface every violation at once.
    """
    violations: list[Violation] = []
    lo, up = model.rates.lower, model.rates.upper

    bad = np.argwhere(lo > up)
    for x, y in bad:
        violations.append(Violation(
            "bound-order", (int(x), int(y)),
            f"lower({x},{y})={lo[x, y]} exceeds upper({x},{y})={up[x, y]}"))

    # Assumption: every target state is absorbing, i.e. no member can leave it.
    from .structure import check_absorbing, check_lower_reachability

    absorbing_ok, offenders = check_absorbing(model)
    if not absorbing_ok:
        for x, y in offenders:
            violations.append(Violation(
                "absorbing", (x, y),
                f"target state {model.space.labels[x]} has positive upper "
                f"rate to {model.space.labels[y]}"))

    if absorbing_ok and not bad.size:
        cert = check_lower_reachability(model)
        if not cert.passed:
            for x in cert.unreachable:
                violations.append(Violation(
                    "unreachable", (int(x),),
                    f"target not lower reachable from {model.space.labels[x]}"))

    return ValidationReport(tuple(violations))


def require_valid(model: Model) -> None:
    """Raise :class:`ValidationError` unless the model passes validation."""
    report = validate_model(model)
    if not report.ok:
        raise ValidationError(f"invalid model: {report.summary()}",
                              [v.message for v in report.violations])

"""Expected-hitting-time solvers.

For a precise rate matrix the expected time to reach a target set A solves a
linear system in the subgenerator (the rate matrix restricted to A^c); its
step-delta discrete counterpart solves a resolvent-type system.  For an
interval rate set, the tight lower/upper bounds over all consistent processes
solve the non-linear systems

    h(x) = 0                       for x in A,
    0    = 1 + (Qh)(x)             for x in A^c,

with Q the lower (resp. upper) rate operator.  Three solvers are provided:

* value iteration on the contraction  h <- delta*1_{A^c} + 1_{A^c}(I + delta*Q)h,
* policy iteration alternating extremal member selection with exact linear
  solves (also yielding a certificate member matrix), and
* fixed-point iteration for the delta-step discretized system, whose solution
  converges to the continuous one as delta -> 0 (see convergence_study).

Residuals of returned solutions are audited against the requested tolerance;
the iteration is resumed with a tighter stop rule when the audit fails, and a
non-convergence error is raised if that cannot be achieved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels, lowerops
from .core import Model, TargetSet, as_value_function, is_rate_matrix, require_valid
from .errors import InfeasibilityError, NonConvergenceError, StepSizeError

__all__ = [
    "HittingTimeResult",
    "ConvergenceStudy",
    "precise_continuous",
    "precise_discrete",
    "solve_value_iteration",
    "solve_policy_iteration",
    "solve_discretized",
    "residual",
    "convergence_study",
]

#: Iteration cap shared by the sweep-based solvers.
MAX_SWEEPS = 10 ** 7

METHOD_VALUE_ITERATION = "value-iteration"
METHOD_POLICY_ITERATION = "policy-iteration"
METHOD_DISCRETIZATION_LIMIT = "discretization-limit"


@dataclass(frozen=True)
class HittingTimeResult:
    """Lower/upper expected hitting times with solver metadata.

    Orientations that were not requested are ``None``.  ``iterations`` maps
    orientation name to sweep / policy-evaluation counts.  For policy
    iteration the certificate fields carry the extremal member matrices
    attaining the bounds.
    """

    lower: np.ndarray | None
    upper: np.ndarray | None
    residual_lower: float | None
    residual_upper: float | None
    iterations: dict[str, int]
    method: str
    delta_used: float
    certificate_lower: np.ndarray | None = None
    certificate_upper: np.ndarray | None = None

    def bound(self, orientation: str) -> np.ndarray:
        h = self.lower if orientation == "lower" else self.upper
        if h is None:
            raise ValueError(f"no {orientation} bound in this result")
        return h


@dataclass(frozen=True)
class ConvergenceStudy:
    """Discretization errors over a step grid, with a fitted rate.

    ``fitted_order`` is the slope of log error against log delta (None when
    the grid has fewer than two points); ``fitted_L`` is the largest observed
    error(delta) / (delta * ||h||), an empirical Lipschitz-style constant for
    the first-order error model  error <= L * delta * ||h||.
    """

    deltas: np.ndarray
    errors: np.ndarray
    fitted_order: float | None
    fitted_L: float


def _check_orientation(orientation: str, allow_both: bool = True) -> tuple[str, ...]:
    if orientation == "lower" or orientation == "upper":
        return (orientation,)
    if allow_both and orientation == "both":
        return ("lower", "upper")
    raise ValueError(f"orientation must be 'lower' or 'upper', got {orientation!r}")


# ---------------------------------------------------------------------------
# precise (single rate matrix) solvers
# ---------------------------------------------------------------------------

def _solve_refined(Asub: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    """Solve Asub x = b with one step of iterative refinement.

    Raises an infeasibility error when the matrix is singular; raises
    ArithmeticError when even the refined residual stays above 1e-10 — for
    the well-conditioned M-matrix systems produced by validated models that
    indicates the model assumptions do not actually hold.
    """
    try:
        x = np.linalg.solve(Asub, b)
        r = b - Asub @ x
        if np.abs(r).max() > 1e-13 * max(1.0, np.abs(b).max()):
            x = x + np.linalg.solve(Asub, r)
            r = b - Asub @ x
    except np.linalg.LinAlgError as exc:
        raise InfeasibilityError(f"singular system in {what}: {exc}") from exc
    if np.abs(r).max() > 1e-10:
        raise ArithmeticError(
            f"{what}: residual {np.abs(r).max():.3e} above 1e-10 after refinement")
    return x


def precise_continuous(Q: np.ndarray, target: TargetSet) -> np.ndarray:
    """Expected hitting times of ``target`` for one rate matrix.

    Solves G h = -1 on the complement of the target (G the subgenerator) by
    direct linear solve and extends by zero on the target.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if not is_rate_matrix(Q, tol=1e-9):
        raise ValueError("precise_continuous requires a rate matrix")
    comp = target.complement
    G = Q[np.ix_(comp, comp)]
    h_sub = _solve_refined(G, -np.ones(len(comp)), "precise_continuous")
    if h_sub.size and h_sub.min() < 0.0:
        raise InfeasibilityError(
            "negative expected hitting time: some state cannot reach the "
            f"target under this matrix (min {h_sub.min():.3e})")
    h = np.zeros(target.size)
    h[comp] = h_sub
    return h


def precise_discrete(Q: np.ndarray, target: TargetSet, delta: float) -> np.ndarray:
    """Expected hitting times of the delta-step skeleton of a precise chain.

    Solves (I - e^{G delta}) h = delta * 1 on the complement of the target.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if not is_rate_matrix(Q, tol=1e-9):
        raise ValueError("precise_discrete requires a rate matrix")
    if not delta > 0:
        raise ValueError("delta must be positive")
    comp = target.complement
    G = Q[np.ix_(comp, comp)]
    M = np.eye(len(comp)) - scipy.linalg.expm(G * delta)
    h_sub = _solve_refined(M, delta * np.ones(len(comp)), "precise_discrete")
    if h_sub.size and h_sub.min() < 0.0:
        raise InfeasibilityError(
            f"negative discrete hitting time (min {h_sub.min():.3e})")
    h = np.zeros(target.size)
    h[comp] = h_sub
    return h


# ---------------------------------------------------------------------------
# residual of the non-linear target system
# ---------------------------------------------------------------------------

def residual(model: Model, h, orientation: str) -> float:
    """Sup-norm defect of h in the lower/upper hitting-time system.

    Zero exactly when h vanishes on the target and 1 + (Qh)(x) = 0 off it.
    Evaluated with the vectorized operator application, independently of the
    compiled iteration kernels.
    """
    (orientation,) = _check_orientation(orientation, allow_both=False)
    h = as_value_function(h, model.size)
    apply_op = lowerops.apply_lower if orientation == "lower" else lowerops.apply_upper
    qh = apply_op(model.rates, h)
    mask = model.target.mask
    on_target = np.abs(h[mask]).max() if mask.any() else 0.0
    off = ~mask
    off_target = np.abs(1.0 + qh[off]).max() if off.any() else 0.0
    return float(max(on_target, off_target))


# ---------------------------------------------------------------------------
# imprecise solvers
# ---------------------------------------------------------------------------

def _audited_sweeps(kernel_call, model: Model, orientation: str, h: np.ndarray,
                    delta: float, tol: float, max_sweeps: int,
                    scale_residual=None) -> int:
    """Run a sweep kernel, audit the solution residual, tighten if needed.

    ``kernel_call(h, stop_change, budget)`` runs the compiled iteration in
    place and returns ``(sweeps, converged, worst_drop)``.  The stop rule
    ``change <= tol * delta`` estimates the fixed-point error through the
    contraction rate, but the hidden constant depends on the model, so the
    actual residual is measured afterwards and iteration resumes with a ten
    times smaller stop threshold until the residual is within 5 * tol
    (comfortably inside the documented 10 * tol contract).  Monotone
    iterations make resuming from the current iterate safe.
    """
    measure = scale_residual or (lambda hh: residual(model, hh, orientation))
    total = 0
    stop_change = tol * delta
    for _ in range(10):
        budget = max_sweeps - total
        if budget <= 0:
            break
        sweeps, converged, worst_drop = kernel_call(h, stop_change, budget)
        total += sweeps
        if worst_drop < -1e-9 * max(1.0, np.abs(h).max()):
            raise ArithmeticError(
                f"iteration lost monotonicity (drop {worst_drop:.3e})")
        if not converged:
            break
        res = measure(h)
        if res <= 5.0 * tol:
            return total
        stop_change *= 0.1
    res = measure(h)
    if res > 10.0 * tol:
        raise NonConvergenceError(
            f"{orientation} iteration stopped with residual {res:.3e} > "
            f"10*tol after {total} sweeps",
            residual=res, iterations=total)
    return total


def solve_value_iteration(model: Model, orientation: str = "both",
                          delta: float | None = None, tol: float = 1e-8,
                          max_sweeps: int = MAX_SWEEPS) -> HittingTimeResult:
    """Tight hitting-time bounds by monotone value iteration.

    Iterates  h <- delta*1_{A^c} + 1_{A^c}(I + delta*Q)h  from h = 0 with the
    lower (resp. upper) rate operator.  The default step 0.9 / ||Q||bound
    keeps I + delta*Q a genuine lower transition operator with a margin; the
    iterates increase monotonically to the minimal non-negative solution.
    """
    require_valid(model)
    wanted = _check_orientation(orientation)
    rates = model.rates
    bound = rates.norm_bound()
    if delta is None:
        delta = 0.9 / bound if bound > 0 else 1.0
    if not delta > 0:
        raise StepSizeError("delta must be positive")
    if delta * bound > 1.0 + 1e-12:
        raise StepSizeError(
            f"delta*||Q|| = {delta * bound:.3e} > 1: I + delta*Q is not a "
            "transition operator")

    mask = model.target.mask
    out: dict[str, np.ndarray] = {}
    res: dict[str, float] = {}
    iters: dict[str, int] = {}
    for side in wanted:
        h = np.zeros(model.size)
        flag = side == "upper"

        def run(hh, stop_change, budget, _flag=flag):
            return _kernels.value_iteration(
                rates.lower, rates.upper, mask, hh, delta, stop_change,
                budget, _flag)

        iters[side] = _audited_sweeps(run, model, side, h, delta, tol, max_sweeps)
        out[side] = h
        res[side] = residual(model, h, side)

    return HittingTimeResult(
        lower=out.get("lower"), upper=out.get("upper"),
        residual_lower=res.get("lower"), residual_upper=res.get("upper"),
        iterations=iters, method=METHOD_VALUE_ITERATION, delta_used=float(delta))


def solve_policy_iteration(model: Model, orientation: str = "both",
                           tol: float = 1e-10,
                           max_iters: int = 500) -> HittingTimeResult:
    """Tight hitting-time bounds by policy iteration over member matrices.

    Alternates an exact linear solve for the current member matrix with
    re-selection of the extremal member for the resulting value function.
    Under model validation every member's subgenerator is invertible, so each
    policy evaluation is well posed.  The final member matrix is returned as
    a certificate: the bound is *attained* by that homogeneous chain, and the
    returned values are exactly its precise solution.
    """
    require_valid(model)
    wanted = _check_orientation(orientation)
    rates = model.rates
    target = model.target

    out: dict[str, np.ndarray] = {}
    res: dict[str, float] = {}
    iters: dict[str, int] = {}
    certs: dict[str, np.ndarray] = {}
    for side in wanted:
        if side == "lower":
            Q = rates.all_lower()
            reselect = lowerops.argmin_matrix
        else:
            Q = rates.all_upper()
            reselect = lowerops.argmax_matrix
        seen = {Q.tobytes()}
        h = precise_continuous(Q, target)
        evaluations = 1
        while True:
            Q_next = reselect(rates, h)
            if np.array_equal(Q_next, Q):
                break
            h_next = precise_continuous(Q_next, target)
            evaluations += 1
            done = np.abs(h_next - h).max() <= tol
            h, Q = h_next, Q_next
            if done:
                break
            key = Q.tobytes()
            if key in seen:
                raise NonConvergenceError(
                    f"policy iteration cycled after {evaluations} solves",
                    residual=residual(model, h, side), iterations=evaluations)
            seen.add(key)
            if evaluations >= max_iters:
                raise NonConvergenceError(
                    f"policy iteration exceeded {max_iters} solves",
                    residual=residual(model, h, side), iterations=evaluations)
        out[side] = h
        certs[side] = Q
        res[side] = residual(model, h, side)
        iters[side] = evaluations

    return HittingTimeResult(
        lower=out.get("lower"), upper=out.get("upper"),
        residual_lower=res.get("lower"), residual_upper=res.get("upper"),
        iterations=iters, method=METHOD_POLICY_ITERATION, delta_used=0.0,
        certificate_lower=certs.get("lower"), certificate_upper=certs.get("upper"))


def solve_discretized(model: Model, orientation: str, delta: float,
                      tol: float = 1e-8, exp_tol: float | None = None,
                      max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Minimal non-negative solution of the delta-step discretized system.

    Fixed-point iteration from 0 on  h = delta*1_{A^c} + 1_{A^c} T_delta h,
    with T_delta the Euler-product approximation of the lower/upper
    transition operator at time delta (inner accuracy ``exp_tol``, default
    tol * delta).  As delta -> 0 the solution converges to the output of
    :func:`solve_value_iteration`.
    """
    require_valid(model)
    (orientation,) = _check_orientation(orientation, allow_both=False)
    if not delta > 0:
        raise StepSizeError("delta must be positive")
    if exp_tol is None:
        exp_tol = tol * delta
    rates = model.rates
    inner_steps = max(1, lowerops.exp_step_count(rates, delta, exp_tol))
    mask = model.target.mask
    flag = orientation == "upper"
    h = np.zeros(model.size)

    def run(hh, stop_change, budget):
        return _kernels.discretized_fixed_point(
            rates.lower, rates.upper, mask, hh, delta, inner_steps,
            stop_change, budget, flag)

    semigroup = (lowerops.upper_exp if flag else lowerops.lower_exp)(
        rates, delta, steps=inner_steps)

    def defect(hh) -> float:
        # sup-norm fixed-point defect, rescaled by delta to be comparable
        # with the continuous-system residual (and with tol).
        image = semigroup(hh)
        image[mask] = 0.0
        image[~mask] += delta
        return float(np.abs(hh - image).max() / delta)

    _audited_sweeps(run, model, orientation, h, delta, tol, max_sweeps,
                    scale_residual=defect)
    return h


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------

def convergence_study(model: Model, orientation: str, deltas,
                      member: np.ndarray | None = None,
                      threads: int = 1) -> ConvergenceStudy:
    """First-order convergence of the discretized systems.

    With ``member`` a rate matrix, compares ``precise_discrete`` against
    ``precise_continuous`` for that single chain; otherwise compares
    ``solve_discretized`` against ``solve_value_iteration`` for the interval
    set.  ``deltas`` must be a strictly decreasing positive grid.  Per-step
    solver tolerances in the interval mode scale with delta so the measured
    error is dominated by discretization, not by the inner solves.  Grid
    points are independent solves; ``threads > 1`` runs them in a thread
    pool (the compiled sweeps release the GIL), with results assembled in
    grid order regardless of scheduling.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.ndim != 1 or deltas.size == 0:
        raise ValueError("deltas must be a non-empty 1-d grid")
    if deltas.min() <= 0:
        raise ValueError("deltas must be positive")
    if deltas.size > 1 and not np.all(np.diff(deltas) < 0):
        raise ValueError("deltas must be strictly decreasing")

    if member is not None:
        h_ref = precise_continuous(member, model.target)
        solve_one = lambda d: precise_discrete(member, model.target, d)
    else:
        (orientation,) = _check_orientation(orientation, allow_both=False)
        h_ref = solve_value_iteration(model, orientation, tol=1e-10).bound(orientation)
        fixed = orientation
        solve_one = lambda d: solve_discretized(model, fixed, d, tol=1e-2 * d)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            approx = list(pool.map(solve_one, deltas))
    else:
        approx = [solve_one(d) for d in deltas]

    errors = np.array([np.abs(a - h_ref).max() for a in approx])
    scale = max(np.abs(h_ref).max(), 1e-300)
    fitted_L = float((errors / (deltas * scale)).max())
    if deltas.size >= 2:
        slope = np.polyfit(np.log(deltas), np.log(np.maximum(errors, 1e-300)), 1)[0]
        fitted_order = float(slope)
    else:
        fitted_order = None
    return ConvergenceStudy(deltas=deltas, errors=errors,
                            fitted_order=fitted_order, fitted_L=fitted_L)

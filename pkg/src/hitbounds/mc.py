"""Monte Carlo samplers and empirical hitting-time estimation.

Three sampler regimes, matching the three ways a set of rate matrices can
drive a jump process:

* homogeneous — one fixed member matrix for all time;
* piecewise inhomogeneous — a schedule of member matrices switched at fixed
  breakpoints (the memoryless property makes restarting the holding-time
  clock at each breakpoint exact);
* history dependent — a fresh member selected at every jump from the current
  state and jump count.

The tight lower/upper hitting-time bounds are the same for all three regimes,
so estimates from any of them must land inside the band; the adversarial
per-jump policy that always picks the minimizing (resp. maximizing) member
matrix should track the bound itself.

Each regime has a per-path sampler returning a full :class:`TrajectorySample`
and a vectorized batch counterpart that only records hit times, used for
large experiments.  Batch sampling is reproducible independently of the
thread count: paths are partitioned into a fixed number of blocks, each with
its own spawned RNG stream, and threads only pick up whole blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Model, TargetSet, as_value_function, member_matrix
from .errors import EstimationError

__all__ = [
    "TrajectorySample",
    "EmpiricalEstimate",
    "sample_homogeneous",
    "sample_inhomogeneous",
    "sample_history_dependent",
    "estimate_hitting",
    "estimate_from_arrays",
    "batch_homogeneous",
    "batch_piecewise",
    "batch_random_member_per_jump",
    "default_horizon",
]

#: Number of RNG blocks a batch run is split into.  Fixed (rather than tied
#: to the worker count) so results are bit-for-bit identical no matter how
#: many threads execute the blocks.
RNG_BLOCKS = 64

_Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class TrajectorySample:
    """One simulated path, recorded up to absorption or censoring.

    ``states`` begins with the start state and has one more entry than
    ``jump_times``.  ``hit_time`` is the first time the path is in the target
    set, or the horizon when the path was censored before reaching it.
    """

    jump_times: np.ndarray
    states: np.ndarray
    hit_time: float
    censored: bool

    @property
    def start(self) -> int:
        return int(self.states[0])


@dataclass(frozen=True)
class EmpiricalEstimate:
    mean: float
    ci_halfwidth: float
    n_paths: int
    censored_fraction: float


# ---------------------------------------------------------------------------
# per-path samplers
# ---------------------------------------------------------------------------

def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _pick_jump(row: np.ndarray, u: float) -> int:
    """Map u in [0,1) to a jump destination with probabilities row/sum(row).

    Comparing against the cumulative sum keeps zero-rate destinations
    unreachable: their cumulative interval has zero width and the strict
    inequality of ``side='right'`` skips it.
    """
    c = np.cumsum(row)
    y = int(np.searchsorted(c, u * c[-1], side="right"))
    return min(y, row.shape[0] - 1)


def sample_homogeneous(Q, target: TargetSet, start: int, horizon: float,
                       seed) -> TrajectorySample:
    """Simulate one path of the chain with rate matrix Q from ``start``.

    Holding times are exponential with rate -Q(x,x); jump destinations are
    proportional to the off-diagonal row.  The path ends on entering the
    target, in an absorbing state, or at the censoring horizon.
    """
    Q = np.asarray(Q, dtype=np.float64)
    off = Q.copy()
    np.fill_diagonal(off, 0.0)

    def rates_at(state, jumps, t):
        return off[state], np.inf

    return _walk(rates_at, target, start, horizon, _as_rng(seed))


def sample_inhomogeneous(model: Model, schedule, start: int, horizon: float,
                         seed) -> TrajectorySample:
    """Simulate one path switching member matrices at fixed breakpoints.

    ``schedule`` is a sequence of ``(t_end, selection)`` pairs with strictly
    increasing positive ``t_end``: piece k's selection drives the chain on
    ``[t_{k-1}, t_k)``, and the final selection persists to the horizon.
    Selections are validated against the interval bounds.
    """
    ends, rows = _compile_schedule(model, schedule)

    def rates_at(state, jumps, t):
        k = int(np.searchsorted(ends, t, side="right"))
        k = min(k, len(rows) - 1)
        piece_end = ends[k] if k < len(ends) else np.inf
        return rows[k][state], piece_end

    return _walk(rates_at, model.target, start, horizon, _as_rng(seed))


def sample_history_dependent(model: Model, policy, start: int, horizon: float,
                             seed) -> TrajectorySample:
    """Simulate one path whose rates are re-chosen at every jump.

    ``policy(state, jump_count)`` returns an off-diagonal selection within
    the bounds; it is validated on each call.  A constant policy reproduces
    :func:`sample_homogeneous` draw for draw.
    """
    rates = model.rates

    def rates_at(state, jumps, t):
        sel = member_matrix(rates, policy(state, jumps))
        np.fill_diagonal(sel, 0.0)
        return sel[state], np.inf

    return _walk(rates_at, model.target, start, horizon, _as_rng(seed))


def _compile_schedule(model: Model, schedule):
    """Validate a (t_end, selection) schedule into breakpoint/row arrays."""
    if not len(schedule):
        raise ValueError("schedule must have at least one piece")
    ends = []
    rows = []
    for t_end, sel in schedule:
        t_end = float(t_end)
        if ends and t_end <= ends[-1]:
            raise ValueError("schedule breakpoints must be strictly increasing")
        if t_end <= 0:
            raise ValueError("schedule breakpoints must be positive")
        M = member_matrix(model.rates, sel)
        np.fill_diagonal(M, 0.0)
        ends.append(t_end)
        rows.append(M)
    # the last piece persists past its nominal end
    return np.asarray(ends[:-1]), rows


def _walk(rates_at, target: TargetSet, start: int, horizon: float,
          rng: np.random.Generator) -> TrajectorySample:
    """Shared jump-process loop for the per-path samplers.

    ``rates_at(state, jump_count, t)`` returns the current off-diagonal rate
    row and the end of its validity window (breakpoints clamp the clock
    without a jump; the exponential's memorylessness makes that exact).
    All samplers consume randomness in the same order — one exponential and
    one uniform per realized jump — so regimes that coincide as processes
    coincide path for path under equal seeds.
    """
    if not 0 <= start < target.size:
        raise ValueError(f"start state {start} out of range")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    mask = target.mask
    times = [0.0]
    states = [int(start)]
    t = 0.0
    x = int(start)
    jumps = 0
    if mask[x]:
        return TrajectorySample(np.empty(0), np.asarray(states), 0.0, False)
    while True:
        row, piece_end = rates_at(x, jumps, t)
        total = float(row.sum())
        clamp = min(piece_end, horizon)
        if total <= 0.0:
            # absorbing under the current rates: wait out the piece
            if clamp >= horizon:
                return _censored(times, states, horizon)
            t = clamp
            continue
        t_next = t + rng.standard_exponential() / total
        if t_next > clamp:
            if clamp >= horizon:
                return _censored(times, states, horizon)
            t = clamp  # breakpoint reached without a jump
            continue
        y = _pick_jump(row, rng.random())
        t = t_next
        x = y
        jumps += 1
        times.append(t)
        states.append(x)
        if mask[x]:
            return TrajectorySample(np.asarray(times[1:]), np.asarray(states),
                                    t, False)


def _censored(times, states, horizon: float) -> TrajectorySample:
    return TrajectorySample(np.asarray(times[1:]), np.asarray(states),
                            float(horizon), True)


# ---------------------------------------------------------------------------
# batch samplers (hit times only, vectorized over paths)
# ---------------------------------------------------------------------------

def _spawn_blocks(n_paths: int, seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else \
        np.random.SeedSequence(seed)
    b = max(1, min(RNG_BLOCKS, n_paths))
    children = ss.spawn(b)
    edges = (np.arange(b + 1) * n_paths) // b
    return [(children[i], int(edges[i]), int(edges[i + 1])) for i in range(b)]


def _run_blocks(block_fn, n_paths: int, seed, threads: int):
    hit = np.empty(n_paths)
    cens = np.zeros(n_paths, dtype=bool)
    blocks = _spawn_blocks(n_paths, seed)

    def work(block):
        child, a, b = block
        if b > a:
            h, c = block_fn(np.random.default_rng(child), b - a)
            hit[a:b] = h
            cens[a:b] = c

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    else:
        for block in blocks:
            work(block)
    return hit, cens


def _categorical_rows(prob_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    c = np.cumsum(prob_rows, axis=1)
    y = (c < u[:, None]).sum(axis=1)
    return np.minimum(y, prob_rows.shape[1] - 1)


def batch_homogeneous(Q, target: TargetSet, start: int, horizon: float,
                      n_paths: int, seed, threads: int = 1):
    """Hit times of ``n_paths`` homogeneous paths; returns (times, censored)."""
    Q = np.asarray(Q, dtype=np.float64)
    off = Q.copy()
    np.fill_diagonal(off, 0.0)
    rate = off.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        prob = np.where(rate[:, None] > 0, off / rate[:, None], 0.0)
    mask = target.mask

    def block(rng: np.random.Generator, k: int):
        s = np.full(k, start, dtype=np.int64)
        t = np.zeros(k)
        hit = np.zeros(k)
        cens = np.zeros(k, dtype=bool)
        active = np.flatnonzero(~mask[s])
        while active.size:
            r = rate[s[active]]
            with np.errstate(divide="ignore"):
                tau = rng.standard_exponential(active.size) / r
            tn = t[active] + tau
            over = tn > horizon
            stopped = active[over]
            hit[stopped] = horizon
            cens[stopped] = True
            movers = active[~over]
            if movers.size:
                u = rng.random(movers.size)
                y = _categorical_rows(prob[s[movers]], u)
                t[movers] = tn[~over]
                s[movers] = y
                landed = mask[y]
                hit[movers[landed]] = t[movers[landed]]
                movers = movers[~landed]
            active = movers
        return hit, cens

    return _run_blocks(block, n_paths, seed, threads)


def batch_piecewise(model: Model, schedule, start: int, horizon: float,
                    n_paths: int, seed, threads: int = 1):
    """Hit times under a breakpoint schedule of member matrices."""
    ends, rows = _compile_schedule(model, schedule)
    ends = np.append(ends, np.inf)
    mask = model.target.mask
    rates_k = [r.sum(axis=1) for r in rows]
    probs_k = []
    for off, r in zip(rows, rates_k):
        with np.errstate(divide="ignore", invalid="ignore"):
            probs_k.append(np.where(r[:, None] > 0, off / r[:, None], 0.0))

    def block(rng: np.random.Generator, k: int):
        s = np.full(k, start, dtype=np.int64)
        t = np.zeros(k)
        hit = np.zeros(k)
        cens = np.zeros(k, dtype=bool)
        active = np.flatnonzero(~mask[s])
        for piece, (rate, prob) in enumerate(zip(rates_k, probs_k)):
            clamp = min(float(ends[piece]), horizon)
            last = clamp >= horizon
            while active.size:
                inside = t[active] < clamp
                cur = active[inside]
                if cur.size == 0:
                    break
                r = rate[s[cur]]
                with np.errstate(divide="ignore", invalid="ignore"):
                    tau = rng.standard_exponential(cur.size) / r
                tn = t[cur] + tau
                over = ~(tn <= clamp)  # catches NaN/inf from rate-0 rows
                ended = cur[over]
                if last:
                    hit[ended] = horizon
                    cens[ended] = True
                    active = np.setdiff1d(active, ended, assume_unique=True)
                else:
                    t[ended] = clamp  # wait for the next piece
                movers = cur[~over]
                if movers.size:
                    u = rng.random(movers.size)
                    y = _categorical_rows(prob[s[movers]], u)
                    t[movers] = tn[~over]
                    s[movers] = y
                    landed = mask[y]
                    hit[movers[landed]] = t[movers[landed]]
                    active = np.setdiff1d(active, movers[landed],
                                          assume_unique=True)
            if not active.size:
                break
        if active.size:
            # paths parked exactly on the horizon by a final-piece jump
            hit[active] = horizon
            cens[active] = True
        return hit, cens

    return _run_blocks(block, n_paths, seed, threads)


def batch_random_member_per_jump(model: Model, start: int, horizon: float,
                                 n_paths: int, seed, threads: int = 1):
    """Hit times when every jump draws a fresh uniform member of the bounds.

    A vectorizable instance of history-dependent dynamics: at each jump of
    each path the off-diagonal rates of the current state are re-drawn
    uniformly from their intervals.
    """
    lo = model.rates.lower
    up = model.rates.upper
    mask = model.target.mask

    def block(rng: np.random.Generator, k: int):
        s = np.full(k, start, dtype=np.int64)
        t = np.zeros(k)
        hit = np.zeros(k)
        cens = np.zeros(k, dtype=bool)
        active = np.flatnonzero(~mask[s])
        while active.size:
            lo_rows = lo[s[active]]
            up_rows = up[s[active]]
            rows = lo_rows + rng.random(lo_rows.shape) * (up_rows - lo_rows)
            r = rows.sum(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                tau = rng.standard_exponential(active.size) / r
                prob = np.where(r[:, None] > 0, rows / r[:, None], 0.0)
            tn = t[active] + tau
            over = ~(tn <= horizon)
            stopped = active[over]
            hit[stopped] = horizon
            cens[stopped] = True
            movers = active[~over]
            if movers.size:
                u = rng.random(movers.size)
                y = _categorical_rows(prob[~over], u)
                t[movers] = tn[~over]
                s[movers] = y
                landed = mask[y]
                hit[movers[landed]] = t[movers[landed]]
                movers = movers[~landed]
            active = movers
        return hit, cens

    return _run_blocks(block, n_paths, seed, threads)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

def estimate_from_arrays(hit_times, censored) -> EmpiricalEstimate:
    """Mean and 95% CI from raw hit-time / censoring arrays."""
    hit_times = np.asarray(hit_times, dtype=np.float64)
    censored = np.asarray(censored, dtype=bool)
    n = hit_times.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    if censored.all():
        raise EstimationError("every path was censored; increase the horizon")
    mean = float(hit_times.mean())
    sd = float(hit_times.std(ddof=1))
    return EmpiricalEstimate(
        mean=mean,
        ci_halfwidth=_Z95 * sd / np.sqrt(n),
        n_paths=int(n),
        censored_fraction=float(censored.mean()),
    )


def estimate_hitting(samples) -> EmpiricalEstimate:
    """Empirical mean hitting time with a normal-approximation 95% CI.

    All samples must share a start state.  Censored paths enter at the
    horizon value, so with a generous horizon the bias is negligible next to
    the CI; the censored fraction is reported alongside.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    starts = {s.start for s in samples}
    if len(starts) != 1:
        raise ValueError(f"samples mix start states: {sorted(starts)}")
    times = np.array([s.hit_time for s in samples])
    cens = np.array([s.censored for s in samples])
    return estimate_from_arrays(times, cens)


def default_horizon(model: Model, start: int, upper_bounds=None) -> float:
    """Censoring horizon that makes the censored mass negligible.

    20x the upper hitting-time bound at the start state when bounds are
    supplied; otherwise a coarse fallback from the smallest positive lower
    rate.
    """
    if upper_bounds is not None:
        ub = as_value_function(upper_bounds, model.size)
        if ub[start] > 0:
            return 20.0 * float(ub[start])
    positive = model.rates.lower[model.rates.lower > 0]
    if positive.size:
        return 1e3 / float(positive.min())
    return 1e3

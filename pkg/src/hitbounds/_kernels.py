"""Compiled inner loops for operator application and fixed-point sweeps.

Everything here works on plain float64 arrays: ``lo``/``up`` are the
off-diagonal bound matrices (diagonals zero), value functions are full-length
vectors, and target states are marked by a boolean mask.  The rate operator is
evaluated in the diagonal-free form ``sum_y q(y) * (f(y) - f(x))`` so that it
vanishes exactly on constant vectors, and the bound selection uses the fixed
tie rule (lower bound when ``f(y) == f(x)``) shared with the vectorized numpy
implementation in :mod:`hitbounds.lowerops`.

The ``upper`` flag swaps the bound roles, which is arithmetically identical
(bit for bit) to conjugating through ``-op(-f)``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "rate_apply",
    "euler_product",
    "euler_snapshots",
    "euler_snapshots_masked",
    "value_iteration",
    "discretized_fixed_point",
    "warmup",
]


@njit(cache=True, nogil=True)
def rate_apply(lo, up, f, out, upper):
    """out = (lower or upper rate operator) applied to f."""
    n = f.shape[0]
    for x in range(n):
        fx = f[x]
        s = 0.0
        for y in range(n):
            d = f[y] - fx
            if d > 0.0:
                q = up[x, y] if upper else lo[x, y]
            elif d < 0.0:
                q = lo[x, y] if upper else up[x, y]
            else:
                continue  # zero coefficient: any feasible rate gives 0
            s += q * d
        out[x] = s


@njit(cache=True, nogil=True)
def euler_product(lo, up, f0, delta, nsteps, upper):
    """Apply (I + delta*Q)^nsteps to f0 with the extremal rate selection."""
    f = f0.copy()
    g = np.empty_like(f)
    n = f.shape[0]
    for _ in range(nsteps):
        rate_apply(lo, up, f, g, upper)
        for i in range(n):
            f[i] += delta * g[i]
    return f


@njit(cache=True, nogil=True)
def euler_snapshots(lo, up, f0, delta, snap_steps, upper):
    """Euler product with intermediate results.

    ``snap_steps`` is a non-decreasing int64 array of step counts; row k of
    the output holds the iterate after ``snap_steps[k]`` steps.  Sharing one
    pass keeps every snapshot inside the same discrete semigroup (identical
    step size), which the diagnostics rely on.
    """
    n = f0.shape[0]
    m = snap_steps.shape[0]
    out = np.empty((m, n))
    f = f0.copy()
    g = np.empty_like(f)
    step = 0
    for k in range(m):
        while step < snap_steps[k]:
            rate_apply(lo, up, f, g, upper)
            for i in range(n):
                f[i] += delta * g[i]
            step += 1
        for i in range(n):
            out[k, i] = f[i]
    return out


@njit(cache=True, nogil=True)
def euler_snapshots_masked(lo, up, target, f0, delta, snap_steps, upper):
    """Euler product of the *sub*-semigroup: target entries pinned to zero.

    Zeroing masked entries after every factor makes each step the restricted
    operator R (I + delta*Q) E (zero-extension in, restriction out), i.e. the
    Euler factor of the subgenerator family rather than of the full-space
    semigroup — without it, mass would leak back out of the target set.
    Snapshot conventions as in :func:`euler_snapshots`.
    """
    n = f0.shape[0]
    m = snap_steps.shape[0]
    out = np.empty((m, n))
    f = f0.copy()
    g = np.empty_like(f)
    for i in range(n):
        if target[i]:
            f[i] = 0.0
    step = 0
    for k in range(m):
        while step < snap_steps[k]:
            rate_apply(lo, up, f, g, upper)
            for i in range(n):
                if target[i]:
                    f[i] = 0.0
                else:
                    f[i] += delta * g[i]
            step += 1
        for i in range(n):
            out[k, i] = f[i]
    return out


@njit(cache=True, nogil=True)
def value_iteration(lo, up, target, h, delta, stop_change, max_sweeps, upper):
    """Sweep h <- delta*1_{A^c} + 1_{A^c}(I + delta*Q)h until change is small.

    Updates ``h`` in place (Jacobi order: the rate operator is evaluated on
    the previous iterate before any entry changes).  Returns
    ``(sweeps, converged, worst_drop)`` where ``worst_drop`` is the most
    negative per-entry increment observed — the iteration is monotone
    non-decreasing in exact arithmetic, so this should only ever be rounding
    noise.
    """
    n = h.shape[0]
    g = np.empty(n)
    sweeps = 0
    converged = False
    worst_drop = 0.0
    while sweeps < max_sweeps:
        rate_apply(lo, up, h, g, upper)
        change = 0.0
        for x in range(n):
            if target[x]:
                hn = 0.0
            else:
                hn = delta + h[x] + delta * g[x]
            dx = hn - h[x]
            if dx < worst_drop:
                worst_drop = dx
            if dx < 0.0:
                dx = -dx
            if dx > change:
                change = dx
            h[x] = hn
        sweeps += 1
        if change <= stop_change:
            converged = True
            break
    return sweeps, converged, worst_drop


@njit(cache=True, nogil=True)
def discretized_fixed_point(lo, up, target, h, delta, inner_steps,
                            stop_change, max_sweeps, upper):
    """Sweep h <- delta*1_{A^c} + 1_{A^c} * T(h) with T an Euler-product
    approximation of the time-``delta`` lower/upper transition operator
    (``inner_steps`` factors of ``I + (delta/inner_steps) Q``).

    Same in-place/return conventions as :func:`value_iteration`.
    """
    n = h.shape[0]
    u = np.empty(n)
    g = np.empty(n)
    dt = delta / inner_steps
    sweeps = 0
    converged = False
    worst_drop = 0.0
    while sweeps < max_sweeps:
        for i in range(n):
            u[i] = h[i]
        for _ in range(inner_steps):
            rate_apply(lo, up, u, g, upper)
            for i in range(n):
                u[i] += dt * g[i]
        change = 0.0
        for x in range(n):
            if target[x]:
                hn = 0.0
            else:
                hn = delta + u[x]
            dx = hn - h[x]
            if dx < worst_drop:
                worst_drop = dx
            if dx < 0.0:
                dx = -dx
            if dx > change:
                change = dx
            h[x] = hn
        sweeps += 1
        if change <= stop_change:
            converged = True
            break
    return sweeps, converged, worst_drop


def warmup() -> None:
    """Force ahead-of-use compilation of every kernel (tiny inputs)."""
    lo = np.array([[0.0, 0.5], [0.0, 0.0]])
    up = np.array([[0.0, 1.0], [0.0, 0.0]])
    f = np.array([1.0, 0.0])
    out = np.empty(2)
    target = np.array([False, True])
    rate_apply(lo, up, f, out, False)
    euler_product(lo, up, f, 0.1, 3, True)
    euler_snapshots(lo, up, f, 0.1, np.array([0, 2], dtype=np.int64), False)
    euler_snapshots_masked(lo, up, target, f, 0.1,
                           np.array([0, 2], dtype=np.int64), True)
    value_iteration(lo, up, target, np.zeros(2), 0.1, 1e-6, 1000, False)
    discretized_fixed_point(lo, up, target, np.zeros(2), 0.1, 4, 1e-6, 1000, True)

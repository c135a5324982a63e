"""Structural checks on interval rate models.

Expected hitting times of a target set A are finite for *every* member of the
interval set exactly when, in the digraph whose edges are the pairs with a
strictly positive lower rate bound, every state outside A can reach A.  (With
a positive lower bound the rate is positive for every member, so the edge is
always usable; conversely any edge whose lower bound is zero can be switched
off by some member.)  This module certifies that condition, and the related
sanity check that A itself admits no forced escape.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import Model


def check_absorbing(model: Model) -> tuple[bool, list[tuple[int, int]]]:
    """Is the target absorbing for *every* member of the rate set?

    Returns ``(ok, leaks)`` where ``leaks`` lists pairs ``(x, y)`` with
    ``x`` in the target and a strictly positive upper bound on the rate to
    ``y`` — i.e. some member lets the chain leave ``x`` again.  Equivalent
    to requiring a zero diagonal entry at every target state for all
    members, since the diagonal is the negative off-diagonal row sum.
    """
    A = model.target.mask
    upper = model.rates.upper
    leaks = [(int(x), int(y))
             for x, y in np.argwhere(upper > 0.0)
             if A[x]]
    return (not leaks, leaks)


@dataclass(frozen=True)
class ReachabilityCertificate:
    """Who can certainly reach the target, with path witnesses.

    ``reachable`` maps every non-target state index to a bool; for reachable
    states ``witness_paths`` holds a state-index path into the target whose
    consecutive pairs all have strictly positive lower rate bounds (so every
    member moves along it with positive rate — the guarantee is structural,
    not a function of the margin, hence ``epsilon = 0.0``).
    """

    reachable: dict[int, bool]
    witness_paths: dict[int, tuple[int, ...]]
    epsilon: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.reachable.values())

    @property
    def unreachable(self) -> tuple[int, ...]:
        return tuple(x for x, ok in sorted(self.reachable.items()) if not ok)


def check_lower_reachability(model: Model) -> ReachabilityCertificate:
    """Certify that every non-target state reaches the target through edges
    with positive lower rate bounds.

    Runs a backward breadth-first search from the target, then reads each
    witness path off the BFS parent pointers; paths therefore have at most
    ``n`` states.
    """
    n = model.rates.size
    A = model.target.mask
    positive = model.rates.lower > 0.0

    # parent[x] = successor of x on its shortest certain path into A
    parent = np.full(n, -1, dtype=np.int64)
    seen = A.copy()
    queue = deque(int(a) for a in np.flatnonzero(A))
    while queue:
        y = queue.popleft()
        for x in np.flatnonzero(positive[:, y]):
            if not seen[x]:
                seen[x] = True
                parent[x] = y
                queue.append(int(x))

    reachable: dict[int, bool] = {}
    witness: dict[int, tuple[int, ...]] = {}
    for x in np.flatnonzero(~A):
        x = int(x)
        reachable[x] = bool(seen[x])
        if seen[x]:
            path = [x]
            while not A[path[-1]]:
                path.append(int(parent[path[-1]]))
            witness[x] = tuple(path)
    return ReachabilityCertificate(reachable=reachable, witness_paths=witness)

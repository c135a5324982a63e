"""Shared fixtures: the running example, a random-model generator, and
a terminal summary that prints one line per acceptance criterion."""

import numpy as np
import pytest

from hitbounds import IntervalRateSet, Model, StateSpace, TargetSet, _kernels

# Filled by tests/test_acceptance.py as its tests run; the terminal-summary
# hook below turns it into one PASS/FAIL line per criterion.
ACCEPTANCE_LINES: dict[int, str] = {
    1: "singleton-set oracle recovery (50 models, vi+pi vs direct solve)",
    2: "running-example bounds vs extreme-selection enumeration",
    3: "fixed-point residual <= 1e-8 after solving at tol 1e-9 (50 models)",
    4: "value iteration vs policy iteration agreement (50 models)",
    5: "Monte Carlo sandwich across all three sampling regimes",
    6: "first-order discretization fit for 10 precise members",
    7: "imprecise discretization error monotone, < 1e-3 at finest step",
    8: "rate-operator axioms, conjugacy, argmin, semigroup, domination",
    9: "contractivity constants, star norm, quasicontractivity (20 models)",
    10: "reachability vs exhaustive path enumeration (all 4-state patterns)",
}


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Compile the jit kernels up front so timed tests measure arithmetic,
    # not compilation.
    _kernels.warmup()


def make_running_model() -> Model:
    """The 3-state example used throughout: s2 absorbing, interval rates
    q(s0,s1) in [1,2], q(s0,s2) in [0.5,1], q(s1,s0) in [0,1], q(s1,s2) in [1,3].
    """
    lower = np.array([[0.0, 1.0, 0.5],
                      [0.0, 0.0, 1.0],
                      [0.0, 0.0, 0.0]])
    upper = np.array([[0.0, 2.0, 1.0],
                      [1.0, 0.0, 3.0],
                      [0.0, 0.0, 0.0]])
    return Model(StateSpace(["s0", "s1", "s2"]),
                 TargetSet([2], 3),
                 IntervalRateSet(lower, upper))


# Hand-solved bounds for the running model (from enumerating the 16
# extreme selections; re-derived independently in tests/oracles.py).
RUNNING_LOWER = np.array([5.0 / 9.0, 1.0 / 3.0, 0.0])
RUNNING_UPPER = np.array([1.5, 1.25, 0.0])


@pytest.fixture()
def running_model() -> Model:
    return make_running_model()


def random_model(rng: np.random.Generator, n_states: int | None = None,
                 max_rate: float = 3.0) -> Model:
    """Random validated model: absorbing target plus a planted chain of
    positive lower rates so reachability holds by construction."""
    n = int(n_states) if n_states is not None else int(rng.integers(3, 7))
    n_target = int(rng.integers(1, n - 1))
    perm = rng.permutation(n)
    target = np.sort(perm[:n_target])
    others = perm[n_target:]
    in_target = np.zeros(n, dtype=bool)
    in_target[target] = True

    lower = np.zeros((n, n))
    upper = np.zeros((n, n))
    # plant a witness edge per non-target state, pointing at the target or at
    # an earlier non-target state (so every chain bottoms out in the target)
    for i, x in enumerate(others):
        pool = np.concatenate([target, others[:i]])
        y = int(rng.choice(pool))
        lower[x, y] = 0.2 + rng.random() * (max_rate - 0.2)

    extra = rng.random((n, n)) < 0.5
    lower = np.where(extra & (lower == 0), rng.random((n, n)) * max_rate * rng.random((n, n)), lower)
    upper = lower + rng.random((n, n)) * max_rate * (rng.random((n, n)) < 0.8)
    lower[in_target, :] = 0.0
    upper[in_target, :] = 0.0
    np.fill_diagonal(lower, 0.0)
    np.fill_diagonal(upper, 0.0)

    labels = [f"s{i}" for i in range(n)]
    return Model(StateSpace(labels), TargetSet(target.tolist(), n),
                 IntervalRateSet(lower, upper))


def two_state_model(rate_lo: float, rate_hi: float) -> Model:
    lower = np.array([[0.0, rate_lo], [0.0, 0.0]])
    upper = np.array([[0.0, rate_hi], [0.0, 0.0]])
    return Model(StateSpace(["a", "b"]), TargetSet([1], 2),
                 IntervalRateSet(lower, upper))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = []
    for outcome in ("passed", "failed", "error"):
        reports.extend(terminalreporter.stats.get(outcome, []))
    by_criterion = {}
    for rep in reports:
        if getattr(rep, "when", "call") != "call":
            continue
        name = rep.nodeid.rsplit("::", 1)[-1]
        if "test_acceptance" in rep.nodeid and name.startswith("test_criterion_"):
            num = int(name.split("_")[2])
            by_criterion[num] = rep.outcome
    if not by_criterion:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_LINES):
        outcome = by_criterion.get(num)
        if outcome is None:
            status = "NOT RUN"
        else:
            status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(
            f"criterion {num:2d}: {status:7s} {ACCEPTANCE_LINES[num]}")

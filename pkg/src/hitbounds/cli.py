"""Command-line interface: model ingestion, solving, simulation, diagnostics.

Model files are JSON documents::

    {
      "states": ["s0", "s1", "s2"],
      "target": ["s2"],
      "bounds": [
        {"from": "s0", "to": "s1", "lower": 1.0, "upper": 2.0},
        {"from": "s0", "to": "s2", "lower": 0.5, "upper": 1.0}
      ]
    }

Pairs not listed in ``bounds`` default to the degenerate interval [0, 0].
Rates are in units of 1/time; no implicit scaling is applied.

Every command can emit a machine-readable run report (``--json``).  The
``results`` subtree of a report is bit-for-bit reproducible for identical
inputs and seed; ``timings`` are informational and excluded from that
guarantee.  Exit codes: 0 success, 1 usage error, 2 model/validation error,
3 numerical failure.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
import time

import click
import numpy as np

from . import __version__, diagnostics, hitting, mc, structure
from .core import (IntervalRateSet, Model, StateSpace, TargetSet,
                   member_matrix, validate_model)
from .errors import (AssumptionViolationError, EstimationError,
                     InfeasibilityError, ModelFormatError,
                     NonConvergenceError, StepSizeError, ValidationError)

_USAGE, _INVALID, _NUMERICAL = 1, 2, 3


def _fmt(x: float) -> str:
    """All numeric CLI output uses 12 significant digits."""
    return f"{float(x) + 0.0:.12g}"  # +0.0 folds -0.0 into 0


# ---------------------------------------------------------------------------
# model ingestion
# ---------------------------------------------------------------------------

_BOUND_KEYS = {"from", "to", "lower", "upper"}


def load_model(path: str) -> tuple[Model, str]:
    """Parse a model file; returns the model and its canonical sha256 hash.

    The hash covers the parsed, normalized content (state order, target
    membership, nonzero bound intervals), so formatting and record order in
    the file do not affect it.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    for key in ("states", "target", "bounds"):
        if key not in doc:
            raise ModelFormatError(f"{path}: missing required field '{key}'")
    extra = set(doc) - {"states", "target", "bounds"}
    if extra:
        raise ModelFormatError(f"{path}: unknown field(s) {sorted(extra)}")

    states = doc["states"]
    if (not isinstance(states, list) or len(states) < 2
            or not all(isinstance(s, str) for s in states)):
        raise ModelFormatError(
            f"{path}: 'states' must be a list of at least 2 state names")
    space = StateSpace(states)

    target = doc["target"]
    if not isinstance(target, list) or not target:
        raise ModelFormatError(f"{path}: 'target' must be a non-empty list")
    idx = {}
    for s in target:
        if s not in space.labels:
            raise ModelFormatError(f"{path}: target state '{s}' not in 'states'")
        if s in idx:
            raise ModelFormatError(f"{path}: duplicate target state '{s}'")
        idx[s] = space.index(s)

    n = space.size
    lower = np.zeros((n, n))
    upper = np.zeros((n, n))
    seen_pairs = set()
    bounds = doc["bounds"]
    if not isinstance(bounds, list):
        raise ModelFormatError(f"{path}: 'bounds' must be a list")
    for k, rec in enumerate(bounds):
        where = f"{path}: bounds[{k}]"
        if not isinstance(rec, dict):
            raise ModelFormatError(f"{where}: must be an object")
        missing = _BOUND_KEYS - set(rec)
        if missing:
            raise ModelFormatError(f"{where}: missing field '{sorted(missing)[0]}'")
        unknown = set(rec) - _BOUND_KEYS
        if unknown:
            raise ModelFormatError(f"{where}: unknown field '{sorted(unknown)[0]}'")
        for who in ("from", "to"):
            if rec[who] not in space.labels:
                raise ModelFormatError(
                    f"{where}: state '{rec[who]}' not in 'states'")
        x, y = space.index(rec["from"]), space.index(rec["to"])
        if x == y:
            raise ModelFormatError(
                f"{where}: 'from' and 'to' must differ (diagonal rates are implied)")
        if (x, y) in seen_pairs:
            raise ModelFormatError(
                f"{where}: duplicate pair {rec['from']} -> {rec['to']}")
        seen_pairs.add((x, y))
        for who in ("lower", "upper"):
            v = rec[who]
            if not isinstance(v, (int, float)) or isinstance(v, bool) \
                    or not math.isfinite(v):
                raise ModelFormatError(f"{where}: '{who}' must be a finite number")
        lower[x, y] = float(rec["lower"])
        upper[x, y] = float(rec["upper"])

    rates = IntervalRateSet(lower, upper)  # may raise ValidationError
    model = Model(space=space,
                  target=TargetSet(sorted(idx.values()), n),
                  rates=rates)
    canon = {
        "states": list(space.labels),
        "target": [space.labels[i] for i in sorted(idx.values())],
        "bounds": [
            {"from": space.labels[x], "to": space.labels[y],
             "lower": lower[x, y], "upper": upper[x, y]}
            for x in range(n) for y in range(n)
            if x != y and (lower[x, y] != 0.0 or upper[x, y] != 0.0)
        ],
    }
    digest = hashlib.sha256(
        json.dumps(canon, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    return model, f"sha256:{digest}"


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    # bool before int: Python bools are ints and would serialize as 0/1
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _emit_report(json_out, command: str, model_hash: str, seed,
                 results: dict, timings: dict) -> None:
    if not json_out:
        return
    report = {
        "command": command,
        "model_hash": model_hash,
        "tool_version": __version__,
        "seed": seed,
        "results": _jsonable(results),
        "timings": _jsonable(timings),
    }
    with open(json_out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(__version__, prog_name="hitbounds")
def cli():
    """Tight lower/upper expected hitting times for interval-rate models."""


@cli.command("check")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "json_out", type=click.Path(dir_okay=False),
              help="Write a run report to this file.")
def cmd_check(model_path, json_out):
    """Validate a model: bound order, absorbing target, certain reachability."""
    t0 = time.perf_counter()
    model, model_hash = load_model(model_path)
    report = validate_model(model)
    absorbing_ok, leaks = structure.check_absorbing(model)
    cert = structure.check_lower_reachability(model)
    labels = model.space.labels

    click.echo(f"model: {model_path}  ({model_hash})")
    click.echo(f"states: {len(labels)}   target: {{{', '.join(model.target_labels())}}}")
    click.echo("absorbing target: " + ("yes" if absorbing_ok else
               "no — positive lower rates leave the target: "
               + ", ".join(f"{labels[x]}->{labels[y]}" for x, y in leaks)))
    if cert.passed:
        click.echo("reachability: every state certainly reaches the target")
        for x in sorted(cert.witness_paths):
            path = " -> ".join(labels[i] for i in cert.witness_paths[x])
            click.echo(f"  witness {labels[x]}: {path}")
    else:
        bad = ", ".join(labels[x] for x in cert.unreachable)
        click.echo(f"reachability: FAILED — unreachable state(s): {bad}")
    click.echo("verdict: " + ("valid" if report.ok else "INVALID"))
    for v in report.violations:
        click.echo(f"  violation [{v.code}] {v.message}")

    results = {
        "valid": report.ok,
        "violations": [{"code": v.code, "states": list(v.states),
                        "message": v.message} for v in report.violations],
        "absorbing_target": absorbing_ok,
        "leaks": [[labels[x], labels[y]] for x, y in leaks],
        "reachable": {labels[x]: ok for x, ok in sorted(cert.reachable.items())},
        "witness_paths": {labels[x]: [labels[i] for i in p]
                          for x, p in sorted(cert.witness_paths.items())},
    }
    _emit_report(json_out, "check", model_hash, None, results,
                 {"total_s": time.perf_counter() - t0})
    if not report.ok:
        sys.exit(_INVALID)


@cli.command("solve")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["vi", "pi", "both"]),
              default="both", show_default=True,
              help="Value iteration, policy iteration, or cross-checked both.")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--delta", type=float, default=None,
              help="Value-iteration step; default 0.9/||Q||.")
@click.option("--json", "json_out", type=click.Path(dir_okay=False))
def cmd_solve(model_path, method, tol, delta, json_out):
    """Solve for the tight lower and upper expected hitting times."""
    t0 = time.perf_counter()
    model, model_hash = load_model(model_path)
    labels = model.space.labels
    results: dict = {"method": method, "tol": tol}

    vi = pi = None
    if method in ("vi", "both"):
        vi = hitting.solve_value_iteration(model, "both", delta=delta, tol=tol)
    if method in ("pi", "both"):
        pi = hitting.solve_policy_iteration(model, "both")
    primary = pi if method == "pi" else vi

    click.echo(f"model: {model_path}  ({model_hash})")
    for side in ("lower", "upper"):
        h = primary.bound(side)
        res = primary.residual_lower if side == "lower" else primary.residual_upper
        vec = ", ".join(f"{labels[i]}={_fmt(h[i])}" for i in range(model.size))
        click.echo(f"{side}: {vec}")
        click.echo(f"  residual: {_fmt(res)}   iterations: "
                   f"{primary.iterations[side]}   method: {primary.method}")
        results[side] = h
        results[f"residual_{side}"] = res
    results["iterations"] = primary.iterations
    results["delta_used"] = primary.delta_used

    if pi is not None:
        for side in ("lower", "upper"):
            cert = pi.certificate_lower if side == "lower" else pi.certificate_upper
            results[f"certificate_{side}"] = cert
            click.echo(f"certificate ({side}):")
            for i in range(model.size):
                row = " ".join(_fmt(v) for v in cert[i])
                click.echo(f"  {labels[i]}: {row}")

    if method == "both":
        combined = 100.0 * tol + 1e-12
        worst = 0.0
        for side in ("lower", "upper"):
            a, b = vi.bound(side), pi.bound(side)
            scale = max(np.abs(b).max(), 1.0)
            worst = max(worst, float(np.abs(a - b).max() / scale))
        results["agreement_rel_diff"] = worst
        results["agreement_tol"] = combined
        click.echo(f"agreement: vi vs pi max relative difference {_fmt(worst)} "
                   f"(tolerance {_fmt(combined)})")
        if worst > combined:
            click.echo("solver disagreement exceeds combined tolerance",
                       err=True)
            _emit_report(json_out, "solve", model_hash, None, results,
                         {"total_s": time.perf_counter() - t0})
            sys.exit(_NUMERICAL)

    _emit_report(json_out, "solve", model_hash, None, results,
                 {"total_s": time.perf_counter() - t0})


@cli.command("converge")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--deltas", default="0.2,0.1,0.05,0.025", show_default=True,
              help="Comma-separated strictly decreasing step grid.")
@click.option("--member", "member_kind",
              type=click.Choice(["all-lower", "all-upper", "imprecise"]),
              default="imprecise", show_default=True,
              help="Study one extreme member chain, or the interval system.")
@click.option("--orientation", type=click.Choice(["lower", "upper"]),
              default="lower", show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--csv", "csv_out", type=click.Path(dir_okay=False),
              help="Write delta,error,ratio rows to this file.")
@click.option("--json", "json_out", type=click.Path(dir_okay=False))
def cmd_converge(model_path, deltas, member_kind, orientation, threads,
                 csv_out, json_out):
    """Measure the discretization error of the step-delta hitting systems."""
    t0 = time.perf_counter()
    model, model_hash = load_model(model_path)
    try:
        grid = [float(d) for d in deltas.split(",") if d.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"--deltas: {exc}") from exc
    if not grid or any(d <= 0 for d in grid) or \
            any(b >= a for a, b in zip(grid, grid[1:])):
        raise click.BadParameter(
            "--deltas must be positive and strictly decreasing")
    if member_kind == "imprecise":
        member = None
    elif member_kind == "all-lower":
        member = model.rates.all_lower()
    else:
        member = model.rates.all_upper()
    study = hitting.convergence_study(model, orientation, grid,
                                      member=member, threads=threads)

    click.echo(f"model: {model_path}  ({model_hash})")
    click.echo(f"mode: {member_kind} ({orientation})")
    rows = [("delta", "error", "ratio")]
    for i, (d, e) in enumerate(zip(study.deltas, study.errors)):
        ratio = "" if i == 0 else _fmt(study.errors[i - 1] / e) if e > 0 else "inf"
        rows.append((_fmt(d), _fmt(e), ratio))
        click.echo(f"  delta={_fmt(d)}  error={_fmt(e)}"
                   + (f"  ratio={ratio}" if ratio else ""))
    if study.fitted_order is None:
        click.echo("order fit skipped (single delta)")
    else:
        click.echo(f"fitted order: {_fmt(study.fitted_order)}   "
                   f"fitted L: {_fmt(study.fitted_L)}")
    if csv_out:
        with open(csv_out, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(",".join(row) + "\n")

    results = {
        "mode": member_kind, "orientation": orientation,
        "deltas": study.deltas, "errors": study.errors,
        "fitted_order": study.fitted_order, "fitted_L": study.fitted_L,
    }
    _emit_report(json_out, "converge", model_hash, None, results,
                 {"total_s": time.perf_counter() - t0})


@cli.command("simulate")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--regime", type=click.Choice(["hm", "m", "i"]), required=True,
              help="hm: one sampled member; m: breakpoint schedule; "
                   "i: per-jump member selection.")
@click.option("--paths", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--start", "start_label", default=None,
              help="Start state label; default: first non-target state.")
@click.option("--horizon", type=float, default=None,
              help="Censoring horizon; default 20x the upper bound at start.")
@click.option("--policy", type=click.Choice(["random", "adversarial-lower",
                                             "adversarial-upper"]),
              default="random", show_default=True,
              help="Per-jump policy for the i regime.")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--json", "json_out", type=click.Path(dir_okay=False))
def cmd_simulate(model_path, regime, paths, seed, start_label, horizon,
                 policy, threads, json_out):
    """Estimate a hitting time empirically and test it against the bounds."""
    t0 = time.perf_counter()
    model, model_hash = load_model(model_path)
    labels = model.space.labels
    if start_label is None:
        comp = model.target.complement
        start = int(comp[0])
    else:
        start = model.space.index(start_label)

    bounds = hitting.solve_value_iteration(model, "both", tol=1e-8)
    lo, up = bounds.lower[start], bounds.upper[start]
    if horizon is None:
        horizon = mc.default_horizon(model, start, upper_bounds=bounds.upper)

    ss = np.random.SeedSequence(seed)
    member_ss, path_ss = ss.spawn(2)
    detail = regime
    if regime == "hm":
        rng = np.random.default_rng(member_ss)
        sel = model.rates.lower + rng.random(model.rates.lower.shape) * \
            (model.rates.upper - model.rates.lower)
        Q = member_matrix(model.rates, sel)
        times, cens = mc.batch_homogeneous(Q, model.target, start, horizon,
                                           paths, path_ss, threads)
    elif regime == "m":
        piece = 0.1
        pieces = max(1, int(np.ceil(horizon / piece)))
        schedule = [((k + 1) * piece,
                     model.rates.lower if k % 2 == 0 else model.rates.upper)
                    for k in range(pieces)]
        times, cens = mc.batch_piecewise(model, schedule, start, horizon,
                                         paths, path_ss, threads)
        detail = f"m (alternating extremes every {piece})"
    elif policy == "random":
        times, cens = mc.batch_random_member_per_jump(
            model, start, horizon, paths, path_ss, threads)
        detail = "i (uniform random member per jump)"
    else:
        side = policy.split("-")[1]
        pi = hitting.solve_policy_iteration(model, side)
        cert = pi.certificate_lower if side == "lower" else pi.certificate_upper
        times, cens = mc.batch_homogeneous(cert, model.target, start, horizon,
                                           paths, path_ss, threads)
        detail = f"i ({policy} certificate per jump)"

    estimate = mc.estimate_from_arrays(times, cens)

    band_lo = lo - 3.0 * estimate.ci_halfwidth
    band_up = up + 3.0 * estimate.ci_halfwidth
    inside = band_lo <= estimate.mean <= band_up
    click.echo(f"model: {model_path}  ({model_hash})")
    click.echo(f"regime: {detail}   start: {labels[start]}   paths: {paths}   "
               f"seed: {seed}")
    click.echo(f"estimate: {_fmt(estimate.mean)}   ci95: ±"
               f"{_fmt(estimate.ci_halfwidth)}   censored: "
               f"{_fmt(estimate.censored_fraction)}")
    click.echo(f"bounds at start: lower {_fmt(lo)}   upper {_fmt(up)}")
    verdict = "inside band" if inside else "OUTSIDE BAND"
    if policy.startswith("adversarial") and regime == "i":
        ref = lo if policy.endswith("lower") else up
        hit = abs(estimate.mean - ref) <= 3.0 * estimate.ci_halfwidth
        verdict += "; " + ("tracks" if hit else "MISSES") + \
            f" the {policy.split('-')[1]} bound within 3*CI"
    click.echo(f"verdict: {verdict}")

    results = {
        "regime": regime, "policy": policy if regime == "i" else None,
        "start": labels[start], "paths": paths, "horizon": horizon,
        "mean": estimate.mean, "ci_halfwidth": estimate.ci_halfwidth,
        "censored_fraction": estimate.censored_fraction,
        "lower_at_start": lo, "upper_at_start": up,
        "inside_band": inside,
    }
    _emit_report(json_out, "simulate", model_hash, seed, results,
                 {"total_s": time.perf_counter() - t0})
    if not inside:
        sys.exit(_NUMERICAL)


@cli.command("diagnose")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--quasi-members", type=int, default=0, show_default=True,
              help="Also run the quasicontractivity check with this many "
                   "sampled member matrices.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--json", "json_out", type=click.Path(dir_okay=False))
def cmd_diagnose(model_path, quasi_members, seed, json_out):
    """Estimate contraction constants q, xi, M and verify their envelope."""
    t0 = time.perf_counter()
    model, model_hash = load_model(model_path)
    report = diagnostics.stability_constants(model)
    click.echo(f"model: {model_path}  ({model_hash})")
    click.echo(f"q  = {_fmt(report.q)}   (norm of the upper sub-semigroup at t=1)")
    click.echo(f"xi = {_fmt(report.xi)}   M = {_fmt(report.M)}")
    click.echo(f"euler step: {_fmt(report.delta)}")
    click.echo("envelope ||e^(Gt)|| <= M e^(-xi t): "
               + ("holds on the grid" if report.envelope_ok else "VIOLATED"))
    for t, nrm, eb in zip(report.grid, report.norms, report.error_bounds):
        click.echo(f"  t={_fmt(t)}  norm={_fmt(nrm)}  euler_error<={_fmt(eb)}")

    results = {
        "q": report.q, "xi": report.xi, "M": report.M,
        "grid": report.grid, "norms": report.norms,
        "delta": report.delta, "error_bounds": report.error_bounds,
        "envelope_ok": report.envelope_ok,
    }
    if quasi_members > 0:
        rng = np.random.default_rng(seed)
        members = []
        for _ in range(quasi_members):
            sel = model.rates.lower + rng.random(model.rates.lower.shape) * \
                (model.rates.upper - model.rates.lower)
            members.append(member_matrix(model.rates, sel))
        quasi = diagnostics.quasicontractivity_check(model, members,
                                                     seed=seed, report=report)
        click.echo(f"quasicontractivity: worst ratio {_fmt(quasi.worst_ratio)} "
                   f"over lags {[_fmt(t) for t in quasi.times]} — "
                   + ("passed" if quasi.passed else "FAILED"))
        results["quasicontractivity"] = {
            "times": quasi.times, "n_functions": quasi.n_functions,
            "n_members": quasi.n_members, "slack": quasi.slack,
            "worst_ratio": quasi.worst_ratio, "passed": quasi.passed,
        }
    _emit_report(json_out, "diagnose", model_hash,
                 seed if quasi_members else None, results,
                 {"total_s": time.perf_counter() - t0})


def main(argv=None) -> None:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(_USAGE)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        sys.exit(_USAGE)
    except (ModelFormatError, ValidationError, AssumptionViolationError) as exc:
        click.echo(f"error: {exc}", err=True)
        if isinstance(exc, ValidationError):
            for line in exc.violations:
                click.echo(f"  {line}", err=True)
        sys.exit(_INVALID)
    except (NonConvergenceError, StepSizeError, InfeasibilityError,
            EstimationError, ArithmeticError) as exc:
        click.echo(f"error: {exc}", err=True)
        if isinstance(exc, EstimationError):
            click.echo("  hint: raise --horizon so that paths can reach the "
                       "target before censoring", err=True)
        sys.exit(_NUMERICAL)


if __name__ == "__main__":
    main()

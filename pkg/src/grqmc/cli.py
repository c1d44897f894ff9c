"""Command-line entry point.

    grqmc <subcommand> [--config FILE] [--seed N] [--out DIR] [--threads N]
                       [--strict] [-v] [subcommand overrides]

Exit codes: 0 success, 2 bad arguments or config, 3 infeasible experiment,
4 numeric-degeneracy flag raised under ``--strict``.  Failures print one
JSON line ``{"error": ..., "message": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .classical_mc import estimate_mean, rmse_study
from .distributions import (
    DEFAULT_TAIL_TOL,
    FAMILIES,
    DegenerateHalfError,
    UnboundedParameterError,
    discretize,
    exact_mean,
    half_gap_k,
    left_mass,
    truncate,
)
from .experiments import (
    ARMS,
    InfeasibleBudget,
    InsufficientSpanError,
    SweepConfig,
    balanced_c_q,
    budget_allocator,
    decomposition_check,
    run_arm,
)
from .grover_rudolph import (
    angles_exact,
    build_state,
    mc_first_angle,
    perturb_first_iteration,
    perturb_schedule,
)
from .quantum_mc import AllocationInfeasible, MlaeSchedule, mlae_trace, mean_to_amplitude, qmc_mean
from .rng import DEFAULT_SEED, derive_seed

log = logging.getLogger("grqmc")

SUBCOMMANDS = ("discretize", "prepare", "estimate-classical", "estimate-quantum", "decompose", "sweep", "allocate")
_PARAM_KEYS = {"mean", "std", "rate", "loc", "scale", "low", "high"}


class StrictFailure(RuntimeError):
    pass


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common")
    g.add_argument("--config", type=Path, help="INI file with [distribution], [quantum_mc], [experiments] ... sections")
    g.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
    g.add_argument("--out", type=Path, default=Path("grqmc-out"), help="output directory (default ./grqmc-out)")
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads (results do not depend on it)")
    g.add_argument("--strict", action="store_true", help="fail on numeric-degeneracy flags instead of warning")
    g.add_argument("-v", "--verbose", action="count", default=0)
    d = p.add_argument_group("distribution")
    d.add_argument("--family", choices=FAMILIES)
    d.add_argument("--n", type=int, help="qubits; the pmf has 2**n points")
    d.add_argument("--tail-tol", type=float)
    d.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                   help="family parameter, e.g. std=2 (repeatable)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="grqmc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("discretize", parents=[common], help="write the 2**n-point pmf as CSV")

    p = sub.add_parser("prepare", parents=[common], help="Grover-Rudolph angles and state")
    p.add_argument("--prep-samples", type=int, help="estimate the first angle from this many samples")

    p = sub.add_parser("estimate-classical", parents=[common], help="classical sample-mean estimates")
    p.add_argument("--samples", type=int)
    p.add_argument("--reps", type=int)

    p = sub.add_parser("estimate-quantum", parents=[common], help="MLAE mean estimates")
    p.add_argument("--shots", type=int)
    p.add_argument("--depth", type=int, help="exponential schedule 0,1,2,...,2**(depth-1)")
    p.add_argument("--reps", type=int)
    p.add_argument("--prep-samples", type=int, help="run on the state with a sampled first angle")

    p = sub.add_parser("decompose", parents=[common], help="pipeline MSE split (defaults: uniform, n=4)")
    p.add_argument("--prep-samples", type=int)
    p.add_argument("--budget", type=int, help="query budget for the MLAE schedule")
    p.add_argument("--shots", type=int)
    p.add_argument("--reps", type=int)

    p = sub.add_parser("sweep", parents=[common], help="RMSE-vs-cost scaling sweeps")
    p.add_argument("--arm", action="append", choices=ARMS, help="arm to run (repeatable; default all)")
    p.add_argument("--targets", help="comma-separated, strictly decreasing accuracy targets")
    p.add_argument("--reps", type=int)
    p.add_argument("--c-s", type=float)
    p.add_argument("--c-q", type=_c_q_value, help="query constant, or 'balanced' to match the prep error")
    p.add_argument("--shots", type=int)

    p = sub.add_parser("allocate", parents=[common], help="optimal prep/query split of a total budget")
    p.add_argument("--budget", type=float, action="append", help="total cost (repeatable)")
    p.add_argument("--shots", type=int)
    p.add_argument("--sample-ops", type=int)
    return parser


def _section(cfg: dict, name: str) -> dict:
    return cfg.get(name, {})


def _c_q_value(text: str):
    if text == "balanced":
        return text
    return float(text)


def _pick(cli_value, cfg: dict, key: str, cast, default):
    if cli_value is not None:
        return cli_value
    if key in cfg:
        try:
            return cast(cfg[key])
        except ValueError as exc:
            raise io.ConfigError(f"bad value for {key}: {cfg[key]!r}") from exc
    return default


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise io.ConfigError(f"bad number list {text!r}") from exc


def _distribution(args, cfg, default_family="normal", default_n=10):
    sec = _section(cfg, "distribution")
    family = _pick(args.family, sec, "family", str, default_family)
    n = _pick(args.n, sec, "n", int, default_n)
    tail_tol = _pick(args.tail_tol, sec, "tail_tol", float, DEFAULT_TAIL_TOL)
    params = {}
    for key in _PARAM_KEYS & set(sec):
        params[key] = _pick(None, sec, key, float, None)
    for item in args.param:
        name, sep, value = item.partition("=")
        if not sep:
            raise io.ConfigError(f"--param expects NAME=VALUE, got {item!r}")
        try:
            params[name.strip()] = float(value)
        except ValueError as exc:
            raise io.ConfigError(f"bad value in --param {item!r}") from exc
    return family, params, tail_tol, n


def _check_flags(flags, strict: bool):
    for flag in flags:
        if strict:
            raise StrictFailure(flag)
        log.warning("numeric flag: %s", flag)


def cmd_discretize(args, cfg, seed, out):
    family, params, tol, n = _distribution(args, cfg)
    disc = discretize(truncate(family, params, tol), n)
    return [io.write_pmf_csv(out / "pmf.csv", disc)]


def cmd_prepare(args, cfg, seed, out):
    family, params, tol, n = _distribution(args, cfg)
    disc = discretize(truncate(family, params, tol), n)
    schedule = angles_exact(truncate(family, params, tol), n)
    _check_flags(schedule.diagnostics, args.strict)
    n_prep = _pick(args.prep_samples, _section(cfg, "grover_rudolph"), "prep_samples", int, None)
    meta = {"family": family, "n": n, "left_mass": left_mass(disc), "exact_mean": exact_mean(disc)}
    if n_prep:
        err = mc_first_angle(disc, n_prep, derive_seed(seed, 0))
        state = perturb_first_iteration(disc, err)
        schedule = perturb_schedule(schedule, left_mass(disc) + err.epsilon_l)
        _check_flags(state.flags, args.strict)
        meta.update(prep_samples=n_prep, epsilon_l=err.epsilon_l, k=half_gap_k(disc), state_mean=state.mean())
    else:
        state = build_state(schedule)
    return [
        io.write_angles_csv(out / "angles.csv", schedule),
        io.write_state_csv(out / "state.csv", state),
        io.write_json(out / "prepare.json", meta),
    ]


def cmd_estimate_classical(args, cfg, seed, out):
    family, params, tol, n = _distribution(args, cfg)
    disc = discretize(truncate(family, params, tol), n)
    sec = _section(cfg, "classical_mc")
    samples = _pick(args.samples, sec, "samples", int, 10_000)
    reps = _pick(args.reps, sec, "repetitions", int, 100)
    mu = exact_mean(disc)
    study = rmse_study(lambda s: estimate_mean(disc, samples, s, true_value=mu), mu, reps, seed,
                       threads=args.threads)
    return [
        io.write_records_csv(out / "records.csv", study.records),
        io.write_json(out / "summary.json", {"estimator": "ClassicalMean", "samples": samples,
                                             "repetitions": reps, "rmse": study.rmse, "stderr": study.stderr}),
    ]


def cmd_estimate_quantum(args, cfg, seed, out):
    family, params, tol, n = _distribution(args, cfg)
    disc = discretize(truncate(family, params, tol), n)
    sec = _section(cfg, "quantum_mc")
    shots = _pick(args.shots, _section(cfg, "quantum_mc"), "shots", int, 100)
    depth = _pick(args.depth, sec, "depth", int, 5)
    reps = _pick(args.reps, sec, "repetitions", int, 100)
    n_prep = _pick(args.prep_samples, _section(cfg, "grover_rudolph"), "prep_samples", int, None)
    sched = MlaeSchedule.exponential(depth, shots)
    mu = exact_mean(disc)

    exact = build_state(angles_exact(truncate(family, params, tol), n))

    def state_for(s):
        if not n_prep:
            return exact
        return perturb_first_iteration(disc, mc_first_angle(disc, n_prep, derive_seed(s, 0)))

    study = rmse_study(lambda s: qmc_mean(state_for(s), sched, derive_seed(s, 1), true_value=mu),
                       mu, reps, seed, threads=args.threads)
    _check_flags(sorted({f for r in study.records for f in r.flags}), args.strict)
    # shot counts of the first repetition
    first = derive_seed(seed, 0, 0)
    trace = mlae_trace(mean_to_amplitude(state_for(first)), sched, derive_seed(first, 1))
    return [
        io.write_records_csv(out / "records.csv", study.records),
        io.write_trace_csv(out / "trace.csv", trace),
        io.write_json(out / "summary.json", {"estimator": "QuantumMLAE", "n_queries": sched.n_queries,
                                             "depths": list(sched.depths), "shots": shots, "repetitions": reps,
                                             "prep_samples": n_prep or 0, "rmse": study.rmse,
                                             "stderr": study.stderr}),
    ]


def cmd_decompose(args, cfg, seed, out):
    family, params, tol, n = _distribution(args, cfg, default_family="uniform", default_n=4)
    disc = discretize(truncate(family, params, tol), n)
    sec = _section(cfg, "experiments")
    n_prep = _pick(args.prep_samples, _section(cfg, "grover_rudolph"), "prep_samples", int, 10_000)
    budget = _pick(args.budget, sec, "budget", int, 1000)
    shots = _pick(args.shots, _section(cfg, "quantum_mc"), "shots", int, 100)
    reps = _pick(args.reps, sec, "repetitions", int, 10_000)
    sched = MlaeSchedule.for_budget(budget, shots)
    d = decomposition_check(disc, n_prep, sched, reps, seed, threads=args.threads)
    payload = {
        "family": family, "n": n, "prep_samples": n_prep, "n_queries": sched.n_queries, "repetitions": reps,
        "lhs": d.lhs, "rhs": d.rhs, "cross": d.cross, "lhs_se": d.lhs_se, "rhs_se": d.rhs_se,
        "cross_se": d.cross_se, "k": d.k, "mean_sq_eps": d.mean_sq_eps,
        "lhs_rhs_within_3se": abs(d.lhs - d.rhs) <= 3 * d.combined_se,
        "cross_within_3se": abs(d.cross) <= 3 * d.cross_se,
    }
    return [io.write_json(out / "decompose.json", payload)]


def sweep_config(args, cfg, seed) -> SweepConfig:
    family, params, tol, n = _distribution(args, cfg)
    sec = _section(cfg, "experiments")
    targets = _float_list(args.targets) if args.targets else \
        (_float_list(sec["targets"]) if "targets" in sec else SweepConfig.targets)
    c_s = _pick(args.c_s, sec, "c_s", float, 1.0)
    shots = _pick(args.shots, _section(cfg, "quantum_mc"), "shots", int, 100)
    c_q = _pick(args.c_q, sec, "c_q", _c_q_value, 1.0)
    try:
        if c_q == "balanced":
            c_q = balanced_c_q(discretize(truncate(family, params, tol), n), c_s, shots)
        return SweepConfig(
            family=family, params=tuple(params.items()), tail_tol=tol, n=n, targets=targets,
            repetitions=_pick(args.reps, sec, "repetitions", int, 400),
            c_s=c_s, c_q=c_q, shots=shots, seed=seed,
        )
    except ValueError as exc:
        raise io.ConfigError(str(exc)) from exc


def cmd_sweep(args, cfg, seed, out):
    config = sweep_config(args, cfg, seed)
    arms = args.arm or list(ARMS)
    written, summaries = [], {}
    for arm in dict.fromkeys(arms):
        report = run_arm(config, arm, threads=args.threads)
        _check_flags(report.flags, args.strict)
        written.append(io.write_report_csv(out / f"sweep_{arm}.csv", report))
        written.append(io.write_report_json(out / f"sweep_{arm}.json", report))
        summaries[arm] = report
    if "exact" in summaries and "pipeline" in summaries:
        lo_e, hi_e = summaries["exact"].ci95
        lo_p, hi_p = summaries["pipeline"].ci95
        disjoint = hi_e < lo_p or hi_p < lo_e
        log.info("exact vs pipeline slope CIs disjoint: %s", disjoint)
    return written


def cmd_allocate(args, cfg, seed, out):
    family, params, tol, n = _distribution(args, cfg)
    disc = discretize(truncate(family, params, tol), n)
    sec = _section(cfg, "experiments")
    budgets = args.budget or (_float_list(sec["budgets"]) if "budgets" in sec else (1e4, 1e5, 1e6, 1e7))
    shots = _pick(args.shots, _section(cfg, "quantum_mc"), "shots", int, 100)
    ops = _pick(args.sample_ops, sec, "sample_ops", int, None)
    rows = []
    for c in budgets:
        a = budget_allocator(c, disc, shots=shots, sample_ops=ops)
        rows.append({"budget": c, "n_prep": a.n_prep, "n_queries": a.n_queries, "fraction": a.fraction,
                     "predicted_mse": a.predicted_mse, "predicted_rmse": math.sqrt(a.predicted_mse),
                     "prep_term": a.prep_term, "qmc_term": a.qmc_term})
    return [io.write_json(out / "allocate.json", {"family": family, "n": n, "allocations": rows})]


COMMANDS = {
    "discretize": cmd_discretize,
    "prepare": cmd_prepare,
    "estimate-classical": cmd_estimate_classical,
    "estimate-quantum": cmd_estimate_quantum,
    "decompose": cmd_decompose,
    "sweep": cmd_sweep,
    "allocate": cmd_allocate,
}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = io.load_config(args.config) if args.config else {}
        seed = _pick(args.seed, _section(cfg, "run"), "seed", int, DEFAULT_SEED)
        with np.errstate(all="ignore"):
            written = COMMANDS[args.command](args, cfg, seed, args.out)
    except (io.ConfigError, UnboundedParameterError, DegenerateHalfError) as exc:
        return _fail("config", str(exc), 2)
    except (AllocationInfeasible, InfeasibleBudget, InsufficientSpanError) as exc:
        return _fail("infeasible", str(exc), 3)
    except StrictFailure as exc:
        return _fail("degenerate", str(exc), 4)
    except ValueError as exc:
        return _fail("config", str(exc), 2)
    for path in written:
        print(path)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

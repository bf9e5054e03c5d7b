"""Command-line entry point: solve, simulate, heuristics, replay, sweep.

Exit codes: 0 success, 2 invalid input or parameters, 3 value iteration did not
converge (unless ``--allow-nonconverged``).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from wsnroute.errors import ParameterError, TraceError, UnstableUnderPolicy, WsnRouteError
from wsnroute.heuristics import (
    HeuristicKind,
    cost_always_db,
    cost_always_db_limit,
    cost_always_wsn,
    heuristic_policy,
)
from wsnroute.ingest import estimate_rate, read_trace
from wsnroute.model import DEFAULT_I_MAX, DEFAULT_J_MAX, Model, ModelParams, make_model
from wsnroute.simulator import SimConfig, TraceArrivals, evaluate_policies, write_results_csv
from wsnroute.solver import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERS,
    SolveResult,
    decision_agreement,
    render_grid,
    value_iteration,
    write_bounds_csv,
    write_policy_csv,
)

log = logging.getLogger("wsnroute")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 2, 3

REFERENCE_RATES = {"lambda1": 0.8, "lambda2": 0.5, "mu": 1.8}
POLICY_CHOICES = ["opt", "db", "wsn", "threshold"]
HEURISTIC_BY_FLAG = {
    "db": HeuristicKind.AlwaysDB,
    "wsn": HeuristicKind.AlwaysWSN,
    "threshold": HeuristicKind.ThresholdT,
}

# sweep presets: axis name and values, everything else at the reference rates with T=1
PRESETS = {
    "fig3": ("T", [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0]),
    "fig4": ("lambda1", [0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2]),
    "fig5": ("mu", [1.4, 1.6, 1.8, 2.0, 2.5, 3.0, 4.0]),
}
FIG2_SLICES = [0, 3, 6, 9, 12, 15]

# replay defaults keep the load ratios of the (0.8, 0.5, 1.8) operating point
LOAD_LAMBDA2 = 0.5 / 0.8
LOAD_MU = 1.8 / 0.8

SWEEP_HEADER = [
    "axis", "value", "T", "lambda1", "lambda2", "mu", "B", "T_ph",
    "g_time", "L_lo", "L_hi", "iterations", "converged", "boundary_occupancy",
    "C_db", "C_wsn",
    "cost_opt", "cost_opt_ci", "db_util_opt", "db_util_opt_ci",
    "cost_db", "cost_db_ci", "db_util_db", "db_util_db_ci",
    "cost_wsn", "cost_wsn_ci", "db_util_wsn", "db_util_wsn_ci",
    "cost_threshold", "cost_threshold_ci", "db_util_threshold", "db_util_threshold_ci",
    "error",
]


class NonConverged(WsnRouteError):
    pass


def _add_model_flags(p: argparse.ArgumentParser, multi_T: bool = False,
                     multi_b: bool = False) -> None:
    p.add_argument("--lambda1", type=float, default=REFERENCE_RATES["lambda1"])
    p.add_argument("--lambda2", type=float, default=REFERENCE_RATES["lambda2"])
    p.add_argument("--mu", type=float, default=REFERENCE_RATES["mu"])
    if multi_T:
        p.add_argument("--T", type=float, nargs="+", default=[1.0])
    else:
        p.add_argument("--T", type=float, default=1.0)
    if multi_b:
        p.add_argument("--B-mult", dest="b_mult", type=float, nargs="+", default=[1.0],
                       help="one or more multipliers of lambda1 + lambda2 + mu")
    else:
        p.add_argument("--B-mult", dest="b_mult", type=float, default=1.0)
    p.add_argument("--imax", type=int, default=DEFAULT_I_MAX)
    p.add_argument("--jmax", type=int, default=DEFAULT_J_MAX)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--eps", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--allow-nonconverged", action="store_true")


def _add_sim_flags(p: argparse.ArgumentParser, warmup: float = 1e3) -> None:
    p.add_argument("--horizon", type=float, default=1e5)
    p.add_argument("--warmup", type=float, default=warmup)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", nargs="+", choices=POLICY_CHOICES, default=POLICY_CHOICES)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsnroute",
        description="Optimal routing of queries between a sensor network and a database.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute the optimal policy by value iteration")
    _add_model_flags(p, multi_b=True)
    p.add_argument("--compare", action="store_true",
                   help="report decision agreement of each multiplier with the first")
    p.add_argument("--render", type=int, nargs="*", default=None, metavar="N",
                   help="print the (i, j) decision grid at these age phases")
    p.add_argument("--preset", choices=["fig2"])
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = sub.add_parser("simulate", help="simulate policies under Poisson arrivals")
    _add_model_flags(p)
    _add_sim_flags(p)
    p.add_argument("--out", type=Path, default=None, help="results CSV (default: stdout)")

    p = sub.add_parser("heuristics", help="closed-form costs of the static heuristics")
    _add_model_flags(p)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("replay", help="replay a query-timestamp trace through all policies")
    _add_model_flags(p, multi_T=True)
    p.set_defaults(lambda2=None, mu=None)
    _add_sim_flags(p, warmup=0.0)
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("sweep", help="solve and simulate along one parameter axis")
    _add_model_flags(p)
    _add_sim_flags(p)
    p.add_argument("--axis", choices=["T", "lambda1", "mu", "Bmult"], default=None)
    p.add_argument("--values", type=float, nargs="+", default=None)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--out", type=Path, default=None)
    return parser


def _params(args, **override) -> ModelParams:
    vals = {
        "lambda1": args.lambda1, "lambda2": args.lambda2, "mu": args.mu,
        "T": args.T, "b_mult": args.b_mult, "n_max": args.nmax,
    }
    vals.update(override)
    return ModelParams.from_rates(
        vals["lambda1"], vals["lambda2"], vals["mu"], vals["T"],
        b_mult=vals["b_mult"], i_max=args.imax, j_max=args.jmax, n_max=vals["n_max"],
    )


def _solve(model: Model, args) -> SolveResult:
    result = value_iteration(model, args.eps, args.max_iters)
    if not result.converged and not args.allow_nonconverged:
        raise NonConverged(
            f"no convergence after {result.iterations} iterations; bounds "
            f"[{result.lower_time:.6g}, {result.upper_time:.6g}] per unit time"
        )
    return result


def _policies(flags, model: Model, solved: SolveResult | None):
    out = []
    for flag in flags:
        if flag == "opt":
            out.append(solved.policy)
        else:
            out.append(heuristic_policy(HEURISTIC_BY_FLAG[flag], model))
    return out


def _print_reports(reports, stream=sys.stdout) -> None:
    for r in reports:
        print(
            f"{r.policy:>10s}  cost {r.avg_cost_per_time:.5f} ± {r.avg_cost_ci:.5f}  "
            f"db_util {r.db_utilization:.4f} ± {r.db_util_ci:.4f}  "
            f"sojourn {r.mean_query_sojourn:.4f}",
            file=stream,
        )


def cmd_solve(args) -> int:
    if args.preset == "fig2":
        args.lambda1, args.lambda2, args.mu = (REFERENCE_RATES[k] for k in ("lambda1", "lambda2", "mu"))
        args.T = 1.0
        if args.render is None:
            args.render = FIG2_SLICES
    mults = args.b_mult
    base_params = _params(args, b_mult=mults[0])
    args.out.mkdir(parents=True, exist_ok=True)
    base_policy = None
    for k in mults:
        nmax = args.nmax
        if len(mults) > 1 and nmax is None:
            nmax = round(base_params.n_max * k / mults[0])
        model = make_model(_params(args, b_mult=k, n_max=nmax))
        result = _solve(model, args)
        suffix = "" if len(mults) == 1 else f"_B{k:g}"
        write_policy_csv(result.policy, args.out / f"policy{suffix}.csv")
        write_bounds_csv(result.bounds, args.out / f"bounds{suffix}.csv")
        print(
            f"B={model.B:.6g} g_time={result.g_time:.8f} "
            f"bounds=[{result.lower_time:.8f}, {result.upper_time:.8f}] "
            f"iterations={result.iterations} converged={result.converged} "
            f"boundary_occupancy={result.boundary_occupancy:.3e} "
            f"T_ph={model.T_ph} T_ph_error={model.T_ph_error:.3g}"
        )
        if args.render is not None:
            for N in args.render:
                print(render_grid(result.policy, N))
        if base_policy is None:
            base_policy = result.policy
        elif args.compare:
            ratio = k / mults[0]
            if abs(ratio - round(ratio)) > 1e-9:
                print(f"B-mult {k:g}: not an integer multiple of {mults[0]:g}, skipped")
                continue
            agree = decision_agreement(base_policy, result.policy, round(ratio))
            print(f"agreement B-mult {mults[0]:g} vs {k:g}: {agree:.4%}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = make_model(_params(args))
    solved = _solve(model, args) if "opt" in args.policy else None
    config = SimConfig(model.params, args.horizon, args.warmup, args.seed, args.reps)
    reports = evaluate_policies(config, _policies(args.policy, model, solved))
    _emit_results(args.out, [(model.params, r) for r in reports])
    if args.out is not None:
        _print_reports(reports)
    return EXIT_OK


def _emit_results(out: Path | None, entries) -> None:
    write_results_csv(sys.stdout if out is None else out, entries)


def cmd_heuristics(args) -> int:
    model = make_model(_params(args))
    p = model.params
    try:
        c_wsn = cost_always_wsn(model)
    except UnstableUnderPolicy as exc:
        c_wsn = math.inf
        print(f"always-WSN: {exc}", file=sys.stderr)
    c_db = cost_always_db(model)
    limit = cost_always_db_limit(p.lambda1, p.lambda2, p.T)
    print(f"C_db={c_db:.8f} (T_ph={model.T_ph}, B={model.B:.6g}) C_wsn={c_wsn:.8f} "
          f"C_db_continuous={limit:.8f}")
    if args.out is not None:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "lambda1", "lambda2", "mu", "B", "T_ph", "C_db", "C_wsn", "C_db_continuous"])
            w.writerow([repr(float(x)) for x in (p.T, p.lambda1, p.lambda2, p.mu, p.B)]
                       + [model.T_ph, repr(c_db), repr(c_wsn), repr(limit)])
    return EXIT_OK


def cmd_replay(args) -> int:
    trace = read_trace(args.trace)
    lambda1 = estimate_rate(trace)
    lambda2 = args.lambda2 if args.lambda2 is not None else lambda1 * LOAD_LAMBDA2
    mu = args.mu if args.mu is not None else lambda1 * LOAD_MU
    print(f"trace: {trace.count} queries over {trace.span:.6g} s, "
          f"lambda1={lambda1:.6g}, lambda2={lambda2:.6g}, mu={mu:.6g}", file=sys.stderr)
    arrivals = TraceArrivals(trace.timestamps)
    entries = []
    for T in args.T:
        model = make_model(_params(args, lambda1=lambda1, lambda2=lambda2, mu=mu, T=T))
        solved = _solve(model, args) if "opt" in args.policy else None
        config = SimConfig(model.params, trace.span, args.warmup, args.seed, args.reps)
        reports = evaluate_policies(config, _policies(args.policy, model, solved), arrivals)
        entries.extend((model.params, r) for r in reports)
        print(f"T={T:g}", file=sys.stderr)
        _print_reports(reports, sys.stderr)
    _emit_results(args.out, entries)
    return EXIT_OK


def _sweep_point(args, axis: str, value: float) -> list:
    override = {"Bmult": "b_mult"}.get(axis, axis)
    row = {"axis": axis, "value": value}
    try:
        model = make_model(_params(args, **{override: value}))
    except ParameterError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    p = model.params
    row.update(T=p.T, lambda1=p.lambda1, lambda2=p.lambda2, mu=p.mu, B=p.B, T_ph=model.T_ph)
    errors = []
    result = value_iteration(model, args.eps, args.max_iters)
    row.update(g_time=result.g_time, L_lo=result.lower_time, L_hi=result.upper_time,
               iterations=result.iterations, converged=int(result.converged),
               boundary_occupancy=result.boundary_occupancy)
    if not result.converged:
        errors.append("NonConverged")
    row["C_db"] = cost_always_db(model)
    try:
        row["C_wsn"] = cost_always_wsn(model)
    except UnstableUnderPolicy:
        errors.append("always-WSN unstable")
    config = SimConfig(p, args.horizon, args.warmup, args.seed, args.reps)
    flags = ["opt", "db", "wsn", "threshold"]
    reports = evaluate_policies(config, _policies(flags, model, result))
    for flag, r in zip(flags, reports):
        row[f"cost_{flag}"] = r.avg_cost_per_time
        row[f"cost_{flag}_ci"] = r.avg_cost_ci
        row[f"db_util_{flag}"] = r.db_utilization
        row[f"db_util_{flag}_ci"] = r.db_util_ci
    row["error"] = "; ".join(errors)
    return row


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_sweep(args) -> int:
    if args.preset:
        axis, values = PRESETS[args.preset]
        args.lambda1, args.lambda2, args.mu = (REFERENCE_RATES[k] for k in ("lambda1", "lambda2", "mu"))
        args.T = 1.0
        values = args.values or values
    else:
        axis, values = args.axis, args.values
    if axis is None or not values:
        raise ParameterError("sweep needs --preset or both --axis and --values")
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for value in values:
            row = _sweep_point(args, axis, float(value))
            w.writerow([_cell(row.get(col)) for col in SWEEP_HEADER])
            out.flush()
            log.info("%s=%g done", axis, value)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "heuristics": cmd_heuristics,
    "replay": cmd_replay,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NonConverged as exc:
        print(f"error: NonConverged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ParameterError, TraceError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

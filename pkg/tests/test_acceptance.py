"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Tolerances are the stated ones; nothing is loosened to force a pass.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import brute_force_values
from wsnroute.cli import LOAD_LAMBDA2, LOAD_MU, main
from wsnroute.heuristics import HeuristicKind, cost_always_db, cost_always_wsn, heuristic_policy
from wsnroute.ingest import estimate_rate, synth_bursty_trace, write_trace
from wsnroute.model import Action, ModelParams, make_model
from wsnroute.simulator import SimConfig, TraceArrivals, evaluate_policies, simulate
from wsnroute.solver import ValueTable, bellman_backup, decision_agreement, value_iteration

pytestmark = pytest.mark.slow

RATES = (0.8, 0.5, 1.8)
T_GRID = [0.0, 1.0, 2.0, 4.0, 8.0]


def _record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _model(T, **kw):
    return make_model(ModelParams.from_rates(*RATES, T, **kw))


def test_criterion_1_always_wsn_matches_closed_form():
    m = _model(1.0)
    target = cost_always_wsn(m)
    start = time.perf_counter()
    cfg = SimConfig(m.params, horizon=1e6, warmup=1e3, seed=101, replications=20)
    r = simulate(cfg, heuristic_policy(HeuristicKind.AlwaysWSN, m))
    elapsed = time.perf_counter() - start
    err = abs(r.avg_cost_per_time - target) / target
    ok = err <= 0.03 and elapsed < 30
    _record(1, ok, f"sim {r.avg_cost_per_time:.4f} +/- {r.avg_cost_ci:.4f} vs {target:.4f} "
                   f"(rel err {err:.2%}, {elapsed:.1f}s)")


def test_criterion_2_always_db_matches_phase_closed_form():
    start = time.perf_counter()
    parts, ok = [], True
    for T in [0.0, 1.0, 2.0, 4.0]:
        m = _model(T)
        assert m.B == pytest.approx(3.1) and m.T_ph == round(T * 3.1)
        target = cost_always_db(m)
        cfg = SimConfig(m.params, horizon=1e6, warmup=1e3, seed=202, replications=20)
        r = simulate(cfg, heuristic_policy(HeuristicKind.AlwaysDB, m))
        err = abs(r.avg_cost_per_time - target) / target
        ok &= err <= 0.03
        parts.append(f"T={T:g}: {r.avg_cost_per_time:.4f} vs {target:.4f} ({err:.1%})")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    _record(2, ok, "; ".join(parts) + f" ({elapsed:.1f}s)")


@pytest.fixture(scope="module")
def t_grid_runs():
    runs = []
    for T in T_GRID:
        m = _model(T)
        res = value_iteration(m)
        pols = [res.policy] + [heuristic_policy(k, m) for k in HeuristicKind]
        cfg = SimConfig(m.params, horizon=2e5, warmup=1e3, seed=303, replications=20)
        runs.append((T, res, evaluate_policies(cfg, pols)))
    return runs


def test_criterion_3_optimal_below_every_heuristic(t_grid_runs):
    ok, worst = True, np.inf
    gaps, gap_ci = [], []
    for T, res, (opt, db, wsn, thr) in t_grid_runs:
        ok &= res.converged
        for r in (db, wsn, thr):
            margin = (r.avg_cost_per_time - r.avg_cost_ci) - res.g_time
            worst = min(worst, margin)
            ok &= margin >= 0
        gaps.append(db.avg_cost_per_time - opt.avg_cost_per_time)
        gap_ci.append(db.avg_cost_ci + opt.avg_cost_ci)
    trend = all(gaps[k + 1] <= gaps[k] + gap_ci[k] + gap_ci[k + 1] for k in range(len(gaps) - 1))
    ok &= trend and gaps[-1] < gaps[0]
    _record(3, ok, f"min(heuristic - CI - g_time) = {worst:.4f}; "
                   f"db-opt gap over T {T_GRID}: " + ", ".join(f"{g:.4f}" for g in gaps))


def test_criterion_4_db_utilization_rises_with_tolerance(t_grid_runs):
    util = [(opt.db_utilization, opt.db_util_ci) for _, _, (opt, *_) in t_grid_runs]
    ok = all(util[k + 1][0] + util[k + 1][1] >= util[k][0] - util[k][1] for k in range(len(util) - 1))
    ok &= util[-1][0] >= 0.99
    _record(4, ok, "db_util over T grid: " + ", ".join(f"{u:.4f}" for u, _ in util))


def test_criterion_5_solver_matches_brute_force():
    m = make_model(ModelParams.from_rates(*RATES, 0.5, i_max=2, j_max=2, n_max=3))
    assert m.shape == (3, 3, 4)
    start = time.perf_counter()
    V = ValueTable.zeros(m)
    worst = 0.0
    for n in range(1, 5):
        V, _ = bellman_backup(m, V)
        oracle = brute_force_values(m, n)
        worst = max(worst, max(abs(V.values[s] - v) for s, v in oracle.items()))
    elapsed = time.perf_counter() - start
    _record(5, worst <= 1e-10 and elapsed < 1.0, f"max |V_n - brute force| = {worst:.2e} ({elapsed:.2f}s)")


def test_criterion_6_bounds_bracket_and_terminate():
    ok, details = True, []
    for T in T_GRID:
        m = _model(T)
        res = value_iteration(m, epsilon=1e-4, max_iters=100_000, occupancy=False)
        lo, hi = res.bounds.lower, res.bounds.upper
        ok &= bool(np.all(np.diff(lo) >= 0) and np.all(np.diff(hi) <= 0) and np.all(lo <= hi))
        ok &= res.converged and hi[-1] - lo[-1] <= 1e-4 / m.B and res.iterations <= 100_000
        details.append(f"T={T:g}:{res.iterations}it")
    _record(6, ok, "monotone bracketing bounds, converged: " + " ".join(details))


def test_criterion_7_policy_invariant_under_finer_phases():
    start = time.perf_counter()
    base = value_iteration(_model(1.0)).policy
    agree = {}
    for k in (2, 5, 10):
        res = value_iteration(_model(1.0, b_mult=k, n_max=62 * k))
        agree[k] = decision_agreement(base, res.policy, k)
    elapsed = time.perf_counter() - start
    ok = min(agree.values()) >= 0.99 and elapsed < 300
    _record(7, ok, ", ".join(f"x{k}: {a:.4%}" for k, a in agree.items()) + f" ({elapsed:.0f}s)")


def test_criterion_8_wsn_only_when_reports_outnumber_queries():
    pol = value_iteration(_model(1.0)).policy
    i, j, N = np.nonzero(pol.actions == Action.WSN)
    bad = j <= i
    examples = ", ".join(f"({a},{b},{c})" for a, b, c in list(zip(i[bad], j[bad], N[bad]))[:3])
    _record(8, not bad.any(),
            f"{int(bad.sum())} of {len(i)} WSN cells have j <= i" + (f", e.g. {examples}" if bad.any() else ""))


def test_criterion_9_trace_replay_optimal_not_worse():
    trace = synth_bursty_trace(25 / 60, 5 / 60, 1 / 1800, 4 * 3600.0, seed=7)
    lam1 = estimate_rate(trace)
    arrivals = TraceArrivals(trace.timestamps)
    ok, parts = True, []
    for T in (0.0, 1.0, 2.0):
        m = make_model(ModelParams.from_rates(lam1, lam1 * LOAD_LAMBDA2, lam1 * LOAD_MU, T))
        res = value_iteration(m)
        pols = [res.policy] + [heuristic_policy(k, m) for k in HeuristicKind]
        cfg = SimConfig(m.params, horizon=trace.span, warmup=0.0, seed=909, replications=20)
        opt, *heur = evaluate_policies(cfg, pols, arrivals)
        for r in heur:
            ok &= opt.avg_cost_per_time <= r.avg_cost_per_time + r.avg_cost_ci + opt.avg_cost_ci
        parts.append(f"T={T:g}: opt {opt.avg_cost_per_time:.4f} vs best heuristic "
                     f"{min(r.avg_cost_per_time for r in heur):.4f}")
    _record(9, ok, f"{trace.count} queries, lambda1={lam1:.4f}; " + "; ".join(parts))


def test_criterion_10_reruns_are_byte_identical(tmp_path):
    trace = tmp_path / "trace.txt"
    write_trace(synth_bursty_trace(25 / 60, 5 / 60, 1 / 1800, 3600.0, seed=3), trace)
    small = ["--imax", "12", "--jmax", "12", "--nmax", "30"]
    sim = ["--horizon", "5000", "--warmup", "100", "--reps", "4", "--seed", "9"]
    commands = {
        "solve": ["solve", *small, "--out", "{d}"],
        "simulate": ["simulate", *small, *sim, "--out", "{d}/results.csv"],
        "heuristics": ["heuristics", "--T", "2", "--out", "{d}/heuristics.csv"],
        "replay": ["replay", *small, "--trace", str(trace), "--T", "0", "1", "--reps", "4",
                   "--seed", "9", "--out", "{d}/replay.csv"],
        "sweep": ["sweep", *small, *sim, "--axis", "lambda1", "--values", "0.4", "0.8",
                  "--out", "{d}/sweep.csv"],
    }
    ok, checked = True, 0
    for name, argv in commands.items():
        outputs = []
        for run in ("a", "b"):
            d = tmp_path / name / run
            d.mkdir(parents=True)
            assert main([x.replace("{d}", str(d)) for x in argv]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))})
        ok &= outputs[0] == outputs[1] and len(outputs[0]) > 0
        checked += len(outputs[0])
    _record(10, ok, f"{checked} CSV files from {len(commands)} commands identical across reruns")

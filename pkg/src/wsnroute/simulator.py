"""Continuous-time discrete-event simulation of the routing system.

Queries arrive from an arrival source (Poisson or a replayed trace), reports
arrive as a Poisson stream, and the sensor network serves all jobs present under
processor sharing with total rate ``mu``. The data age is real-valued and resets
at every report completion. A query sent to the database pays ``(age - T)^+``
immediately; queries in the network accrue holding cost ``i`` per unit time.

Random streams are derived from ``numpy.random.SeedSequence`` spawn keys:
``(rep, 0)`` for Poisson query arrivals (shared across policies, so comparisons
use common random numbers), and ``(rep, 1, k)`` / ``(rep, 2, k)`` for the report
and service streams of the k-th policy.
"""

from __future__ import annotations

import contextlib
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Protocol, Sequence

import numba
import numpy as np
from scipy import stats

from wsnroute.errors import EmptyTrace, NonMonotoneTrace, NonPositiveRate, ParameterError
from wsnroute.model import ModelParams
from wsnroute.solver import Policy

QUERY_STREAM, REPORT_STREAM, SERVICE_STREAM = 0, 1, 2

RESULTS_HEADER = [
    "policy", "T", "lambda1", "lambda2", "mu",
    "avg_cost", "avg_cost_ci", "db_util", "db_util_ci", "mean_sojourn",
]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _poisson_times(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    expected = rate * horizon
    chunk = int(expected + 6 * math.sqrt(expected) + 16)
    parts = []
    last = 0.0
    while last <= horizon:
        gaps = rng.exponential(1.0 / rate, size=chunk)
        times = last + np.cumsum(gaps)
        parts.append(times)
        last = times[-1]
    times = np.concatenate(parts)
    return times[times <= horizon]


class ArrivalSource(Protocol):
    def times(self, horizon: float, replication: int = 0) -> np.ndarray: ...


@dataclass(frozen=True)
class PoissonArrivals:
    rate: float
    seed: int

    def times(self, horizon: float, replication: int = 0) -> np.ndarray:
        return _poisson_times(_rng(self.seed, replication, QUERY_STREAM), self.rate, horizon)

    def interarrivals(self, n: int, replication: int = 0) -> np.ndarray:
        return _rng(self.seed, replication, QUERY_STREAM).exponential(1.0 / self.rate, size=n)


@dataclass(frozen=True)
class TraceArrivals:
    """Replays fixed timestamps, shifted so the first arrival is at time zero."""

    timestamps: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if ts.size == 0:
            raise EmptyTrace("trace has no timestamps")
        if np.any(np.diff(ts) < 0):
            raise NonMonotoneTrace("trace timestamps decrease")
        object.__setattr__(self, "timestamps", ts)

    @property
    def span(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])

    def times(self, horizon: float, replication: int = 0) -> np.ndarray:
        rel = self.timestamps - self.timestamps[0]
        return rel[rel <= horizon]


class _NoArrivals:
    def times(self, horizon: float, replication: int = 0) -> np.ndarray:
        return np.empty(0)


def poisson_arrivals(rate: float, seed: int) -> PoissonArrivals:
    if not rate > 0:
        raise NonPositiveRate(f"arrival rate must be positive, got {rate}")
    return PoissonArrivals(float(rate), int(seed))


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    horizon: float = 1e5
    warmup: float = 1e3
    seed: int = 0
    replications: int = 20

    def __post_init__(self):
        if not (self.horizon > self.warmup >= 0):
            raise ParameterError(
                f"need horizon > warmup >= 0, got horizon={self.horizon}, warmup={self.warmup}"
            )
        if self.replications < 1:
            raise ParameterError(f"replications must be >= 1, got {self.replications}")


@dataclass
class SimReport:
    policy: str
    avg_cost_per_time: float
    avg_cost_ci: float
    db_utilization: float
    db_util_ci: float
    mean_query_sojourn: float
    sojourn_ci: float
    mean_queries: float
    mean_queries_ci: float
    per_replication: dict[str, np.ndarray] = field(repr=False)


@numba.njit(cache=True)
def _run(qt, rt, sexp, su, actions, B, T, warmup, horizon):
    I, J, NN = actions.shape
    nq = qt.shape[0]
    nr = rt.shape[0]
    present = np.empty(nq + 1)  # arrival times of queries inside the network
    t = 0.0
    last_done = 0.0
    i = 0
    j = 0
    iq = 0
    ir = 0
    ks = 0
    ku = 0
    c = np.inf
    hold = 0.0
    pen = 0.0
    n_arr = 0
    n_db = 0
    soj = 0.0
    n_soj = 0
    while True:
        tq = qt[iq] if iq < nq else np.inf
        tr = rt[ir] if ir < nr else np.inf
        tn = min(tq, min(tr, c))
        stop = tn > horizon
        if stop:
            tn = horizon
        a = t if t > warmup else warmup
        if tn > a:
            hold += i * (tn - a)
        t = tn
        if stop:
            break
        counted = t >= warmup
        if tq <= tr and tq <= c:
            iq += 1
            age = t - last_done
            ph = int(math.floor(age * B))
            li = i if i < I else I - 1
            lj = j if j < J else J - 1
            ln = ph if ph < NN else NN - 1
            if actions[li, lj, ln] == 0:
                if counted:
                    if age > T:
                        pen += age - T
                    n_db += 1
            else:
                present[i] = t
                i += 1
                if i + j == 1:
                    c = t + sexp[ks]
                    ks += 1
            if counted:
                n_arr += 1
        elif tr <= c:
            ir += 1
            j += 1
            if i + j == 1:
                c = t + sexp[ks]
                ks += 1
        else:
            tot = i + j
            k = int(su[ku] * tot)
            ku += 1
            if k >= tot:
                k = tot - 1
            if k < i:
                # processor sharing: the finishing job is uniform among those present
                s = t - present[k]
                present[k] = present[i - 1]
                i -= 1
                if counted:
                    soj += s
                    n_soj += 1
            else:
                j -= 1
                last_done = t
            if i + j > 0:
                c = t + sexp[ks]
                ks += 1
            else:
                c = np.inf
    return hold, pen, n_arr, n_db, soj, n_soj


def _half_width(x: np.ndarray) -> float:
    x = x[~np.isnan(x)]
    n = len(x)
    if n < 2:
        return math.inf
    return float(stats.t.ppf(0.975, n - 1) * x.std(ddof=1) / math.sqrt(n))


def _mean(x: np.ndarray) -> float:
    x = x[~np.isnan(x)]
    return float(x.mean()) if len(x) else math.nan


def _default_source(config: SimConfig) -> ArrivalSource:
    if config.params.lambda1 == 0:
        return _NoArrivals()
    return poisson_arrivals(config.params.lambda1, config.seed)


def _replicate(config: SimConfig, policy: Policy, arrivals: ArrivalSource,
               rep: int, stream: int) -> tuple[float, float, float, float]:
    p = config.params
    qt = np.ascontiguousarray(arrivals.times(config.horizon, rep), dtype=np.float64)
    if qt.size > 1 and np.any(np.diff(qt) < 0):
        raise NonMonotoneTrace("arrival source produced decreasing times")
    rt = _poisson_times(_rng(config.seed, rep, REPORT_STREAM, stream), p.lambda2, config.horizon)
    srv = _rng(config.seed, rep, SERVICE_STREAM, stream)
    size = qt.size + rt.size + 1
    sexp = srv.exponential(1.0 / p.mu, size=size)
    su = srv.random(size)
    hold, pen, n_arr, n_db, soj, n_soj = _run(
        qt, rt, sexp, su, policy.actions, float(policy.B), float(p.T),
        float(config.warmup), float(config.horizon),
    )
    window = config.horizon - config.warmup
    util = n_db / n_arr if n_arr else math.nan
    sojourn = soj / n_soj if n_soj else math.nan
    return (hold + pen) / window, util, sojourn, hold / window


def _simulate(config: SimConfig, policy: Policy, arrivals: ArrivalSource, stream: int) -> SimReport:
    runs = np.array([
        _replicate(config, policy, arrivals, rep, stream)
        for rep in range(config.replications)
    ])
    cost, util, sojourn, queries = runs.T
    return SimReport(
        policy=policy.name,
        avg_cost_per_time=_mean(cost),
        avg_cost_ci=_half_width(cost),
        db_utilization=_mean(util),
        db_util_ci=_half_width(util),
        mean_query_sojourn=_mean(sojourn),
        sojourn_ci=_half_width(sojourn),
        mean_queries=_mean(queries),
        mean_queries_ci=_half_width(queries),
        per_replication={"cost": cost, "db_util": util, "sojourn": sojourn, "queries": queries},
    )


def simulate(config: SimConfig, policy: Policy, arrivals: ArrivalSource | None = None) -> SimReport:
    """Run ``config.replications`` independent replications of one policy.

    Statistics cover ``[warmup, horizon]``; the confidence half-widths are
    Student-t 95% intervals over the replication means.
    """
    if arrivals is None:
        arrivals = _default_source(config)
    return _simulate(config, policy, arrivals, 0)


def evaluate_policies(
    config: SimConfig, policies: Sequence[Policy], arrivals: ArrivalSource | None = None
) -> list[SimReport]:
    if not policies:
        raise ValueError("need at least one policy")
    if arrivals is None:
        arrivals = _default_source(config)
    return [_simulate(config, pol, arrivals, k) for k, pol in enumerate(policies)]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_results_csv(
    path: str | Path | IO[str], entries: Iterable[tuple[ModelParams, SimReport]]
) -> None:
    """Write one row per ``(params, report)`` pair to a path or open text stream."""
    with contextlib.ExitStack() as stack:
        fh = path if hasattr(path, "write") else stack.enter_context(open(path, "w", newline=""))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for params, r in entries:
            w.writerow([
                r.policy, _fmt(params.T), _fmt(params.lambda1), _fmt(params.lambda2),
                _fmt(params.mu), _fmt(r.avg_cost_per_time), _fmt(r.avg_cost_ci),
                _fmt(r.db_utilization), _fmt(r.db_util_ci), _fmt(r.mean_query_sojourn),
            ])


def read_results_csv(path: str | Path) -> list[dict[str, float | str]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k == "policy" else float(v)) for k, v in row.items()} for row in rows]

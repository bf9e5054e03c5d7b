"""Average-cost value iteration on the truncated routing MDP.

The recursion starts from ``V_0 = 0``. Each step takes the minimum over the two
ways an arriving query can be handled. The spread of ``V_{n+1} - V_n`` brackets
the optimal average cost per step, and iteration stops once the spread is at most
``epsilon / B``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from wsnroute.errors import DimensionMismatch
from wsnroute.model import Action, Model, State

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
DEFAULT_MAX_ITERS = 100_000


@dataclass
class ValueTable:
    values: np.ndarray
    n: int = 0

    @classmethod
    def zeros(cls, model: Model) -> "ValueTable":
        return cls(np.zeros(model.shape), 0)


@dataclass
class Policy:
    """Dense action table over ``(i, j, N)``; lookups outside the table are clamped.

    ``B`` converts a real-valued age into phases when the table drives the
    simulator.
    """

    actions: np.ndarray
    B: float
    name: str = "policy"
    model: Model | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.actions = np.ascontiguousarray(self.actions, dtype=np.int8)
        if self.actions.ndim != 3:
            raise DimensionMismatch(f"policy table must be 3-D, got {self.actions.shape}")

    def __call__(self, state: State) -> Action:
        return policy_lookup(self, *state)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.actions.shape

    def wsn_cells(self) -> np.ndarray:
        return np.argwhere(self.actions == Action.WSN)


@dataclass
class BoundsTrace:
    lower: np.ndarray
    upper: np.ndarray

    def __len__(self) -> int:
        return len(self.lower)


@dataclass
class SolveResult:
    policy: Policy
    g_step: float
    g_time: float
    iterations: int
    bounds: BoundsTrace
    converged: bool
    values: ValueTable
    boundary_occupancy: float = math.nan

    @property
    def lower_time(self) -> float:
        return float(self.bounds.lower[-1]) * self.policy.B

    @property
    def upper_time(self) -> float:
        return float(self.bounds.upper[-1]) * self.policy.B


@numba.njit(cache=True)
def _backup(V, out, act, l1, l2, m, B, T):
    I, J, NN = V.shape
    imax, jmax, nmax = I - 1, J - 1, NN - 1
    lo = np.inf
    hi = -np.inf
    for i in range(I):
        for j in range(J):
            tot = i + j
            stay = 1.0 - (l1 + l2 + (m if tot > 0 else 0.0))
            if stay < 0.0:
                stay = 0.0
            for N in range(NN):
                nn = N + 1 if N < nmax else nmax
                pen = N / B - T
                if pen < 0.0:
                    pen = 0.0
                wsn = V[i + 1 if i < imax else imax, j, nn]
                db = pen + V[i, j, nn]
                if wsn < db:
                    best = wsn
                    act[i, j, N] = 1
                else:
                    best = db
                    act[i, j, N] = 0
                val = i / B + l1 * best
                val += l2 * V[i, j + 1 if j < jmax else jmax, nn]
                if i > 0:
                    val += m * (i / tot) * V[i - 1, j, nn]
                if j > 0:
                    val += m * (j / tot) * V[i, j - 1, 0]
                val += stay * V[i, j, nn]
                out[i, j, N] = val
                d = val - V[i, j, N]
                if d < lo:
                    lo = d
                if d > hi:
                    hi = d
    return lo, hi


@numba.njit(cache=True)
def _push(p, out, act, l1, l2, m):
    """One forward step of the state distribution under a fixed action table."""
    I, J, NN = p.shape
    imax, jmax, nmax = I - 1, J - 1, NN - 1
    out[:] = 0.0
    for i in range(I):
        for j in range(J):
            tot = i + j
            stay = 1.0 - (l1 + l2 + (m if tot > 0 else 0.0))
            if stay < 0.0:
                stay = 0.0
            for N in range(NN):
                w = p[i, j, N]
                if w == 0.0:
                    continue
                nn = N + 1 if N < nmax else nmax
                if act[i, j, N] == 1:
                    out[i + 1 if i < imax else imax, j, nn] += w * l1
                else:
                    out[i, j, nn] += w * l1
                out[i, j + 1 if j < jmax else jmax, nn] += w * l2
                if i > 0:
                    out[i - 1, j, nn] += w * m * (i / tot)
                if j > 0:
                    out[i, j - 1, 0] += w * m * (j / tot)
                out[i, j, nn] += w * stay


def _check_shape(model: Model, arr: np.ndarray, what: str) -> None:
    if arr.shape != model.shape:
        raise DimensionMismatch(f"{what} has shape {arr.shape}, model grid is {model.shape}")


def _make_policy(model: Model, actions: np.ndarray, name: str = "optimal") -> Policy:
    return Policy(actions, model.B, name, model)


def bellman_backup(model: Model, V: ValueTable) -> tuple[ValueTable, Policy]:
    _check_shape(model, V.values, "value table")
    out = np.empty(model.shape)
    act = np.empty(model.shape, dtype=np.int8)
    _backup(
        np.ascontiguousarray(V.values, dtype=np.float64), out, act,
        model.lambda1p, model.lambda2p, model.mup, model.B, model.params.T,
    )
    return ValueTable(out, V.n + 1), _make_policy(model, act)


def odoni_bounds(V_n: ValueTable, V_next: ValueTable) -> tuple[float, float]:
    if V_n.values.shape != V_next.values.shape:
        raise DimensionMismatch(
            f"value tables differ in shape: {V_n.values.shape} vs {V_next.values.shape}"
        )
    diff = V_next.values - V_n.values
    return float(diff.min()), float(diff.max())


def value_iteration(
    model: Model,
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_MAX_ITERS,
    occupancy: bool = True,
) -> SolveResult:
    """Iterate the Bellman operator until the Odoni spread is at most ``epsilon / B``.

    A run that exhausts ``max_iters`` is returned with ``converged=False``; its
    final bounds still bracket the optimal average cost.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    tol = epsilon / model.B
    V = np.zeros(model.shape)
    out = np.empty_like(V)
    act = np.empty(model.shape, dtype=np.int8)
    lower, upper = [], []
    converged = False
    for _ in range(max_iters):
        lo, hi = _backup(
            V, out, act, model.lambda1p, model.lambda2p, model.mup, model.B, model.params.T
        )
        lower.append(lo)
        upper.append(hi)
        V, out = out, V
        if hi - lo <= tol:
            converged = True
            break
    n = len(lower)
    if not converged:
        log.warning("value iteration stopped after %d iterations with spread %.3g > %.3g",
                    n, upper[-1] - lower[-1], tol)
    g_step = 0.5 * (lower[-1] + upper[-1])
    result = SolveResult(
        policy=_make_policy(model, act.copy()),
        g_step=g_step,
        g_time=g_step * model.B,
        iterations=n,
        bounds=BoundsTrace(np.array(lower), np.array(upper)),
        converged=converged,
        values=ValueTable(V, n),
    )
    if occupancy:
        result.boundary_occupancy = boundary_occupancy(model, result.policy)
    return result


def policy_lookup(policy: Policy, i: int, j: int, age_phases: int) -> Action:
    I, J, NN = policy.actions.shape
    i = min(max(int(i), 0), I - 1)
    j = min(max(int(j), 0), J - 1)
    N = min(max(int(age_phases), 0), NN - 1)
    return Action(int(policy.actions[i, j, N]))


def stationary_distribution(
    model: Model, policy: Policy, tol: float = 1e-13, max_steps: int = 200_000
) -> np.ndarray:
    """Long-run state distribution of the truncated chain under ``policy``.

    Power iteration from the empty state. The dummy self-loop at the empty state
    makes the chain aperiodic.
    """
    _check_shape(model, policy.actions, "policy table")
    p = np.zeros(model.shape)
    p[0, 0, 0] = 1.0
    out = np.empty_like(p)
    for _ in range(max_steps):
        _push(p, out, policy.actions, model.lambda1p, model.lambda2p, model.mup)
        delta = np.abs(out - p).sum()
        p, out = out, p
        if delta < tol:
            break
    return p


def boundary_occupancy(model: Model, policy: Policy) -> float:
    """Stationary mass on the truncation faces; should be negligible."""
    p = stationary_distribution(model, policy)
    mask = np.zeros(model.shape, dtype=bool)
    mask[-1, :, :] = True
    mask[:, -1, :] = True
    mask[:, :, -1] = True
    return float(p[mask].sum())


def average_cost(model: Model, policy: Policy) -> float:
    """Exact long-run cost per unit time of a fixed policy on the truncated chain."""
    p = stationary_distribution(model, policy)
    i = np.arange(model.shape[0])[:, None, None]
    N = np.arange(model.shape[2])[None, None, :]
    pen = np.maximum(N / model.B - model.params.T, 0.0)
    step_cost = i / model.B + model.lambda1p * pen * (policy.actions == Action.DB)
    return float((p * step_cost).sum() * model.B)


def write_policy_csv(policy: Policy, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "N", "action"])
        for (i, j, N), a in np.ndenumerate(policy.actions):
            w.writerow([i, j, N, Action(int(a)).name])


def read_policy_csv(path: str | Path, B: float, name: str = "policy") -> Policy:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no policy rows")
    idx = np.array([(int(r["i"]), int(r["j"]), int(r["N"])) for r in rows])
    actions = np.zeros(tuple(idx.max(axis=0) + 1), dtype=np.int8)
    for (i, j, N), r in zip(idx, rows):
        actions[i, j, N] = Action[r["action"]]
    return Policy(actions, B, name)


def write_bounds_csv(bounds: BoundsTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "L_lo", "L_hi"])
        for n, (lo, hi) in enumerate(zip(bounds.lower, bounds.upper), start=1):
            w.writerow([n, repr(float(lo)), repr(float(hi))])


def read_bounds_csv(path: str | Path) -> BoundsTrace:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return BoundsTrace(
        np.array([float(r["L_lo"]) for r in rows]),
        np.array([float(r["L_hi"]) for r in rows]),
    )


def decision_agreement(base: Policy, scaled: Policy, k: int) -> float:
    """Fraction of base cells ``(i, j, N)`` whose action matches ``scaled`` at ``(i, j, k*N)``."""
    I, J, NN = base.shape
    if scaled.shape[0] < I or scaled.shape[1] < J:
        raise DimensionMismatch("scaled policy grid is smaller than the base grid")
    Ns = np.minimum(k * np.arange(NN), scaled.shape[2] - 1)
    other = scaled.actions[:I, :J, :][:, :, Ns]
    return float((other == base.actions).mean())


def render_grid(policy: Policy, N: int, i_max: int = 10, j_max: int = 10) -> str:
    """Text picture of the decision over ``(i, j)`` at age phase ``N`` (W = WSN)."""
    i_max = min(i_max, policy.shape[0] - 1)
    j_max = min(j_max, policy.shape[1] - 1)
    lines = [f"N={N}  rows i=0..{i_max}, cols j=0..{j_max}"]
    for i in range(i_max + 1):
        cells = "".join(
            "W" if policy_lookup(policy, i, j, N) == Action.WSN else "."
            for j in range(j_max + 1)
        )
        lines.append(f"{i:3d} {cells}")
    return "\n".join(lines)

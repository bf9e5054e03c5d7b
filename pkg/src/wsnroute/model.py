"""Discrete-time routing MDP obtained by uniformizing the continuous model.

State ``(i, j, N)``: ``i`` queries and ``j`` reports in the sensor network,
``N`` uniformization steps since the last report completion. The state space is
truncated at ``(i_max, j_max, n_max)``; transitions that would leave the grid are
clamped onto its boundary so every row of the kernel stays stochastic.

All per-step quantities use the uniformized probabilities
``lambda1 / B``, ``lambda2 / B`` and ``mu / B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

from wsnroute.errors import (
    InvalidTruncation,
    OutOfRangeState,
    ParameterError,
    StabilityViolation,
    UniformizationViolation,
)

DEFAULT_I_MAX = 40
DEFAULT_J_MAX = 40


class Action(IntEnum):
    DB = 0
    WSN = 1


class State(NamedTuple):
    i: int
    j: int
    N: int


@dataclass(frozen=True)
class ModelParams:
    lambda1: float
    lambda2: float
    mu: float
    T: float
    B: float
    i_max: int = DEFAULT_I_MAX
    j_max: int = DEFAULT_J_MAX
    n_max: int = 62

    @classmethod
    def from_rates(
        cls,
        lambda1: float,
        lambda2: float,
        mu: float,
        T: float,
        b_mult: float = 1.0,
        i_max: int = DEFAULT_I_MAX,
        j_max: int = DEFAULT_J_MAX,
        n_max: int | None = None,
    ) -> "ModelParams":
        """Build parameters with ``B = b_mult * (lambda1 + lambda2 + mu)``.

        When ``n_max`` is omitted the age axis covers ten times the larger of
        ``T`` and the mean report inter-arrival time.
        """
        B = b_mult * (lambda1 + lambda2 + mu)
        if n_max is None:
            n_max = default_n_max(T, lambda2, B)
        return cls(lambda1, lambda2, mu, T, B, i_max, j_max, n_max)


def default_n_max(T: float, lambda2: float, B: float) -> int:
    horizon = 10.0 * max(T, 1.0 / lambda2)
    # small slack so that e.g. 10 * 2 * 3.1 does not round up to 63
    return max(1, math.ceil(horizon * B - 1e-9))


@dataclass(frozen=True)
class Model:
    params: ModelParams
    lambda1p: float
    lambda2p: float
    mup: float
    T_ph: int
    T_ph_error: float

    @property
    def B(self) -> float:
        return self.params.B

    @property
    def shape(self) -> tuple[int, int, int]:
        p = self.params
        return (p.i_max + 1, p.j_max + 1, p.n_max + 1)

    @property
    def state_count(self) -> int:
        a, b, c = self.shape
        return a * b * c

    def contains(self, s: State) -> bool:
        p = self.params
        return 0 <= s.i <= p.i_max and 0 <= s.j <= p.j_max and 0 <= s.N <= p.n_max


def make_model(params: ModelParams) -> Model:
    p = params
    if not (p.lambda1 >= 0 and p.lambda2 > 0 and p.mu > 0):
        raise ParameterError(
            f"rates must satisfy lambda1 >= 0, lambda2 > 0, mu > 0; got "
            f"lambda1={p.lambda1}, lambda2={p.lambda2}, mu={p.mu}"
        )
    if p.T < 0:
        raise ParameterError(f"tolerance T must be >= 0, got {p.T}")
    if p.lambda2 >= p.mu:
        raise StabilityViolation(
            f"report load is unstable: lambda2={p.lambda2} >= mu={p.mu}"
        )
    total = p.lambda1 + p.lambda2 + p.mu
    # relative slack: B = k * total may not reproduce total exactly in floats
    if p.B < total * (1 - 1e-12):
        raise UniformizationViolation(
            f"B={p.B} is below lambda1 + lambda2 + mu = {total}"
        )
    if min(p.i_max, p.j_max, p.n_max) < 1:
        raise InvalidTruncation(
            f"truncation caps must be >= 1, got "
            f"({p.i_max}, {p.j_max}, {p.n_max})"
        )
    scaled = p.T * p.B
    T_ph = math.floor(scaled + 0.5)
    lambda1p, lambda2p, mup = p.lambda1 / p.B, p.lambda2 / p.B, p.mu / p.B
    # B may equal the total rate up to rounding; keep the probabilities a partition
    overshoot = lambda1p + lambda2p + mup - 1.0
    if overshoot > 0:
        mup -= overshoot
    return Model(p, lambda1p, lambda2p, mup, T_ph, abs(scaled - T_ph))


@dataclass(frozen=True)
class TransitionDist:
    entries: tuple[tuple[State, float], ...]

    def as_dict(self) -> dict[State, float]:
        return dict(self.entries)

    def total(self) -> float:
        return math.fsum(prob for _, prob in self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def _check_state(model: Model, s: State) -> State:
    s = State(*s)
    if not model.contains(s):
        raise OutOfRangeState(f"{s} outside grid {model.shape}")
    return s


def transition_distribution(model: Model, s: State, d: Action) -> TransitionDist:
    s = _check_state(model, s)
    p = model.params
    i, j, N = s
    nxt = min(N + 1, p.n_max)
    busy = i + j > 0
    l1, l2, m = model.lambda1p, model.lambda2p, model.mup

    out: dict[State, float] = {}

    def add(state: State, prob: float) -> None:
        out[state] = out.get(state, 0.0) + prob

    if d == Action.WSN:
        add(State(min(i + 1, p.i_max), j, nxt), l1)
    else:
        add(State(i, j, nxt), l1)
    add(State(i, min(j + 1, p.j_max), nxt), l2)
    if i > 0:
        add(State(i - 1, j, nxt), m * i / (i + j))
    if j > 0:
        add(State(i, j - 1, 0), m * j / (i + j))
    add(State(i, j, nxt), max(1.0 - (l1 + l2 + (m if busy else 0.0)), 0.0))
    return TransitionDist(tuple(out.items()))


def penalty(model: Model, N: int) -> float:
    """Age penalty in time units for answering from the database at phase ``N``."""
    return max(N / model.B - model.params.T, 0.0)


def stage_cost(model: Model, s: State, d: Action) -> float:
    """Expected cost of one uniformization step (multiply by B for cost per time)."""
    s = _check_state(model, s)
    cost = s.i / model.B
    if d == Action.DB:
        cost += model.lambda1p * penalty(model, s.N)
    return cost

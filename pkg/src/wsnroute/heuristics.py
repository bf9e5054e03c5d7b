"""Fixed routing heuristics and the closed-form costs of the two static ones."""

from __future__ import annotations

from enum import Enum

import numpy as np

from wsnroute.errors import UnstableUnderPolicy
from wsnroute.model import Action, Model
from wsnroute.solver import Policy


class HeuristicKind(Enum):
    AlwaysDB = "db"
    AlwaysWSN = "wsn"
    ThresholdT = "threshold"


def heuristic_policy(kind: HeuristicKind, model: Model) -> Policy:
    """Action table for a fixed heuristic.

    The threshold rule answers from the database while ``N <= T_ph``. Its table
    extends at least one phase past ``T_ph`` so clamped lookups of larger ages
    still route to the network.
    """
    I, J, NN = model.shape
    NN = max(NN, model.T_ph + 2)
    actions = np.zeros((I, J, NN), dtype=np.int8)
    if kind is HeuristicKind.AlwaysWSN:
        actions[:] = Action.WSN
    elif kind is HeuristicKind.ThresholdT:
        actions[:, :, model.T_ph + 1:] = Action.WSN
    return Policy(actions, model.B, kind.value, model)


def cost_always_wsn(model: Model) -> float:
    """Mean number of queries in the M/M/1-PS network when every query is sent there.

    B cancels, so the value is already a cost per unit time.
    """
    p = model.params
    if p.lambda1 + p.lambda2 >= p.mu:
        raise UnstableUnderPolicy(
            f"always-WSN needs lambda1 + lambda2 < mu; got "
            f"{p.lambda1} + {p.lambda2} >= {p.mu}"
        )
    return model.lambda1p / (model.mup - (model.lambda1p + model.lambda2p))


def cost_always_db(model: Model) -> float:
    # Per step the penalty is in phases/B and there are B steps per time unit,
    # so the phase-domain formula reads directly as cost per unit time.
    q = 1.0 - model.lambda2p
    return model.lambda1p / model.lambda2p * q ** (model.T_ph + 1)


def cost_always_db_limit(lambda1: float, lambda2: float, T: float) -> float:
    """Continuous-age limit of the always-DB cost as B grows without bound.

    Report completions form a Poisson(lambda2) stream, so the age seen by an
    arriving query is exponential with rate lambda2.
    """
    return lambda1 / lambda2 * float(np.exp(-lambda2 * T))

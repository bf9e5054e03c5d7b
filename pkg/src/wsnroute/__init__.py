"""Query routing between a processor-sharing sensor network and a database.

Average-cost value iteration for the uniformized routing MDP, closed-form costs
of the fixed heuristics, and a continuous-time discrete-event simulator.
"""

from wsnroute.errors import (
    DimensionMismatch,
    EmptyTrace,
    InvalidTruncation,
    NonMonotoneTrace,
    NonPositiveRate,
    OutOfRangeState,
    ParseError,
    StabilityViolation,
    UniformizationViolation,
    UnstableUnderPolicy,
)
from wsnroute.heuristics import (
    HeuristicKind,
    cost_always_db,
    cost_always_wsn,
    heuristic_policy,
)
from wsnroute.ingest import (
    Trace,
    counts_per_minute,
    estimate_rate,
    parse_trace,
    synth_bursty_trace,
)
from wsnroute.model import (
    Action,
    Model,
    ModelParams,
    State,
    make_model,
    stage_cost,
    transition_distribution,
)
from wsnroute.simulator import (
    SimConfig,
    SimReport,
    evaluate_policies,
    poisson_arrivals,
    simulate,
)
from wsnroute.solver import (
    Policy,
    SolveResult,
    ValueTable,
    bellman_backup,
    odoni_bounds,
    policy_lookup,
    value_iteration,
)

__version__ = "0.1.0"

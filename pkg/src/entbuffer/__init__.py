"""Performance analysis of purification-based entanglement buffers.

A two-node buffer keeps one long-lived ("good") memory stocked with an
entangled link while n short-lived ("bad") memories generate fresh links
each time step.  Fresh links may purify the stored one; consumption and
failed purification empty the memory.  This package provides:

- exact closed-form availability and average consumed fidelity for
  arbitrary purification policies (:mod:`entbuffer.analytics`),
- the standard policy families and an admissibility checker
  (:mod:`entbuffer.policies`),
- Bell-diagonal state algebra (:mod:`entbuffer.states`),
- a discrete-time Monte-Carlo simulator with two independent estimators
  (:mod:`entbuffer.simulator`),
- an exhaustive single-cycle enumeration oracle that brackets the exact
  metrics without reusing the closed-form derivation
  (:mod:`entbuffer.oracle`),
- a CLI for evaluation, sweeps, trade-off frontiers and analytic-vs-
  simulation validation (:mod:`entbuffer.cli`).
"""

from .analytics import (
    Metrics,
    PolicyAggregates,
    SystemParams,
    availability,
    availability_bounds,
    avg_consumed_fidelity,
    effective_generation_probability,
    evaluate,
    expected_generation_time,
    expected_occupied_time,
    fidelity_bounds,
    policy_aggregates,
    sweep,
)
from .errors import (
    AdmissibilityError,
    BudgetExceededError,
    ConfigurationError,
    DegenerateProtocolError,
    DivergentExpectationError,
    DomainError,
    EntBufferError,
    EvaluationError,
    MissingDataError,
    NoGenerationError,
    TabulationError,
    UndefinedJumpError,
)
from .oracle import OracleResult, cycle_oracle
from .policies import (
    PurificationPolicy,
    PurificationProtocol,
    build_policy,
    compose_with_prestage,
    concatenated_dejmps_policy,
    dejmps_policy,
    dejmps_protocol,
    dejmps_replacement_policy,
    ec513_policy,
    flagged_dejmps_replacement_policy,
    identity_policy,
    nested_dejmps_policy,
    optimal_bc_policy,
    random_admissible_policy,
    random_admissible_protocol,
    replacement_policy,
    validate_protocol,
)
from .simulator import SimConfig, SimResult, SimState, simulate, simulate_trajectory, step
from .states import (
    BellDiagonalState,
    decohere_fidelity,
    dejmps_combine,
    twirl_to_werner,
    werner_from_fidelity,
)

__version__ = "0.1.0"

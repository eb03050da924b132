"""Discrete-time Monte-Carlo simulation of the buffering process.

Each tick follows a fixed event order:

1. A consumption request arrives with probability p_con.  If a link is
   stored it is consumed — the recorded fidelity is the stored value after
   one further step of decoherence — and the tick ends.  An unserved request
   is discarded and the tick continues.
2. All n bad memories attempt generation; k ~ Binomial(n, p_gen) succeed.
3. k >= 1 with the good memory empty: one fresh link is stored at F_new
   (it starts decohering next tick).
4. k >= 1 with the good memory occupied: with probability q a purification
   is attempted on the once-decohered stored fidelity; success applies the
   policy's jump for this k, failure empties the memory.  Without an
   attempt (or with k = 0) the stored link just decoheres one step.

Two estimators are produced for each metric: the consumer-viewpoint ratios
(served requests / requests, mean consumed fidelity) and the time averages
(occupied fraction, occupancy-weighted once-decohered fidelity).  For this
process the two agree asymptotically because request arrivals are Bernoulli.

Reproducibility contract: replication i is driven by
``numpy.random.SeedSequence(seed).spawn(replications)[i]``, and every tick
consumes exactly one value from each of four pre-generated draw streams
(consumption uniform, generation count, attempt uniform, success uniform).
Results are bit-identical for a fixed (seed, config, params, policy) whether
replications run serially or in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError
from .analytics import SystemParams
from .policies import PurificationPolicy

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap if not (args and callable(args[0])) else args[0]


@dataclass(frozen=True)
class SimConfig:
    """Run-length, replication and seeding controls for one simulation."""

    max_steps: int = 1_000_000
    replications: int = 10
    seed: int = 0
    warmup_steps: int = 0
    min_consumption_events: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ConfigurationError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.replications < 1:
            raise ConfigurationError(
                f"replications must be >= 1, got {self.replications}"
            )
        if self.warmup_steps < 0 or self.min_consumption_events < 0:
            raise ConfigurationError("warmup_steps and min_consumption_events must be >= 0")


@dataclass
class SimState:
    """Mutable per-trajectory state; fidelity 0.0 encodes an empty memory."""

    t: int = 0
    fidelity: float = 0.0
    requests: int = 0
    served: int = 0
    consumed_fidelity_sum: float = 0.0
    occupied_steps: int = 0
    time_avg_fidelity_sum: float = 0.0
    counted_steps: int = 0
    purify_attempts: int = 0
    purify_successes: int = 0


@dataclass(frozen=True)
class TickDraws:
    """The four random numbers one tick may consume, drawn up front."""

    u_consume: float
    k: int
    u_attempt: float
    u_success: float


def draws_from_rng(rng: np.random.Generator, params: SystemParams) -> TickDraws:
    """Draw all four per-tick values in a fixed order (whether used or not)."""
    return TickDraws(
        u_consume=float(rng.random()),
        k=int(rng.binomial(params.n, params.p_gen)),
        u_attempt=float(rng.random()),
        u_success=float(rng.random()),
    )


def step(
    state: SimState,
    params: SystemParams,
    policy: PurificationPolicy,
    rng: np.random.Generator | None = None,
    draws: TickDraws | None = None,
    count_stats: bool = True,
) -> str:
    """Advance the trajectory by one tick in place; returns the event label.

    Events: none, gen_store, purify_ok, purify_fail, consume, request_unserved.
    """
    if draws is None:
        if rng is None:
            raise ConfigurationError("step() needs either an rng or explicit draws")
        draws = draws_from_rng(rng, params)
    decay = math.exp(-params.gamma)
    f = state.fidelity
    occupied = f > 0.0
    if count_stats:
        state.counted_steps += 1
        if occupied:
            state.occupied_steps += 1
            state.time_avg_fidelity_sum += decay * (f - 0.25) + 0.25
    event = "none"
    if draws.u_consume < params.p_con:
        if count_stats:
            state.requests += 1
        if occupied:
            consumed = decay * (f - 0.25) + 0.25
            if count_stats:
                state.served += 1
                state.consumed_fidelity_sum += consumed
            state.fidelity = 0.0
            state.t += 1
            return "consume"  # consumption takes the whole tick
        event = "request_unserved"
    if draws.k >= 1:
        if not occupied:
            state.fidelity = params.f_new
            state.t += 1
            return "gen_store"
        if draws.u_attempt < params.q:
            state.purify_attempts += 1
            f_dec = decay * (f - 0.25) + 0.25
            proto = policy.protocol(draws.k)
            if draws.u_success < proto.success_prob(f_dec):
                state.purify_successes += 1
                state.fidelity = proto.jump(f_dec)
                state.t += 1
                return "purify_ok"
            state.fidelity = 0.0
            state.t += 1
            return "purify_fail"
    if occupied:
        state.fidelity = decay * (f - 0.25) + 0.25
    state.t += 1
    return event


# ---------------------------------------------------------------------------
# fast kernel (same semantics as step(), driven by pre-generated draw arrays)


@njit(cache=True)
def _run_block(
    f0,
    t0,
    warmup,
    p_con,
    q,
    f_new,
    decay,
    a,
    b,
    c,
    d,
    u_con,
    k_arr,
    u_att,
    u_suc,
):  # pragma: no cover - exercised via simulate(); njit hides coverage
    requests = 0
    served = 0
    cons_fid = 0.0
    occ_steps = 0
    tavg_fid = 0.0
    counted = 0
    attempts = 0
    successes = 0
    f = f0
    n_steps = u_con.shape[0]
    for i in range(n_steps):
        t = t0 + i
        occupied = f > 0.0
        count = t >= warmup
        if count:
            counted += 1
            if occupied:
                occ_steps += 1
                tavg_fid += decay * (f - 0.25) + 0.25
        if u_con[i] < p_con:
            if count:
                requests += 1
            if occupied:
                if count:
                    served += 1
                    cons_fid += decay * (f - 0.25) + 0.25
                f = 0.0
                continue
        k = k_arr[i]
        if k >= 1:
            if not occupied:
                f = f_new
                continue
            if u_att[i] < q:
                attempts += 1
                f_dec = decay * (f - 0.25) + 0.25
                h = f_dec - 0.25
                p_succ = c[k] * h + d[k]
                if u_suc[i] < p_succ:
                    successes += 1
                    f = 0.25 + (a[k] * h + b[k]) / (c[k] * h + d[k])
                else:
                    f = 0.0
                continue
        if occupied:
            f = decay * (f - 0.25) + 0.25
    return f, requests, served, cons_fid, occ_steps, tavg_fid, counted, attempts, successes


@dataclass(frozen=True)
class EstimatorPair:
    """One metric estimated from the consumer viewpoint and as a time average."""

    consumer: float
    time_average: float


@dataclass(frozen=True)
class ReplicationStats:
    steps: int
    requests: int
    served: int
    consumed_fidelity_sum: float
    occupied_steps: int
    time_avg_fidelity_sum: float
    purify_attempts: int
    purify_successes: int

    @property
    def availability(self) -> EstimatorPair:
        return EstimatorPair(
            consumer=self.served / self.requests if self.requests else float("nan"),
            time_average=self.occupied_steps / self.steps if self.steps else float("nan"),
        )

    @property
    def consumed_fidelity(self) -> EstimatorPair:
        return EstimatorPair(
            consumer=(
                self.consumed_fidelity_sum / self.served if self.served else float("nan")
            ),
            time_average=(
                self.time_avg_fidelity_sum / self.occupied_steps
                if self.occupied_steps
                else float("nan")
            ),
        )


def estimate_metrics(stats: ReplicationStats) -> tuple[EstimatorPair, EstimatorPair]:
    """(availability, consumed fidelity), each under both estimators."""
    return stats.availability, stats.consumed_fidelity


def _pooled_and_se(values: np.ndarray) -> tuple[float, float]:
    vals = values[np.isfinite(values)]
    if vals.size == 0:
        return float("nan"), float("nan")
    mean = float(np.mean(vals))
    if vals.size < 2:
        return mean, float("nan")
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size))
    return mean, se


@dataclass(frozen=True)
class SimResult:
    """Pooled estimates with replication-spread standard errors.

    ``a_hat``/``f_hat`` are the consumer-viewpoint ratios pooled over all
    replications (ratio of summed counters); per-replication values for both
    estimators are kept for inspection.  Standard errors are the sample
    standard deviation of the per-replication estimates over sqrt(R); with a
    single replication they are undefined (use R >= 10 for meaningful ones).
    """

    a_hat: float
    f_hat: float
    a_se: float
    f_se: float
    a_hat_time_avg: float
    f_hat_time_avg: float
    a_se_time_avg: float
    f_se_time_avg: float
    total_steps: int
    total_requests: int
    total_served: int
    f_hat_defined: bool
    replications: tuple[ReplicationStats, ...] = field(repr=False, default=())

    def per_replication(self, metric: str, estimator: str = "consumer") -> np.ndarray:
        pick = {
            ("availability", "consumer"): lambda r: r.availability.consumer,
            ("availability", "time_average"): lambda r: r.availability.time_average,
            ("fidelity", "consumer"): lambda r: r.consumed_fidelity.consumer,
            ("fidelity", "time_average"): lambda r: r.consumed_fidelity.time_average,
        }[(metric, estimator)]
        return np.array([pick(r) for r in self.replications])


def _run_replication(
    params: SystemParams,
    policy: PurificationPolicy,
    config: SimConfig,
    rng: np.random.Generator,
) -> ReplicationStats:
    a, b, c, d = policy.coefficient_arrays()
    decay = math.exp(-params.gamma)
    f = 0.0
    t0 = 0
    totals = np.zeros(8)
    block = int(config.max_steps)
    # Run at least max_steps, then extend block-wise until enough consumption
    # events were served (bounded to keep p_con ~ 0 configurations finite).
    max_blocks = 100
    for _ in range(max_blocks):
        u_con = rng.random(block)
        k_arr = rng.binomial(params.n, params.p_gen, block).astype(np.int64)
        u_att = rng.random(block)
        u_suc = rng.random(block)
        out = _run_block(
            f,
            t0,
            config.warmup_steps,
            params.p_con,
            params.q,
            params.f_new,
            decay,
            a,
            b,
            c,
            d,
            u_con,
            k_arr,
            u_att,
            u_suc,
        )
        f = out[0]
        requests, served, cons_fid, occ, tavg, counted, att, succ = out[1:]
        totals += np.array(
            [requests, served, cons_fid, occ, tavg, counted, att, succ], dtype=float
        )
        t0 += block
        if t0 >= config.max_steps and totals[1] >= config.min_consumption_events:
            break
    return ReplicationStats(
        steps=int(totals[5]),
        requests=int(totals[0]),
        served=int(totals[1]),
        consumed_fidelity_sum=float(totals[2]),
        occupied_steps=int(totals[3]),
        time_avg_fidelity_sum=float(totals[4]),
        purify_attempts=int(totals[6]),
        purify_successes=int(totals[7]),
    )


def simulate(
    params: SystemParams,
    policy: PurificationPolicy,
    config: SimConfig,
) -> SimResult:
    """Run independent replications and pool the estimates."""
    if policy.n != params.n:
        raise ConfigurationError(
            f"policy covers n={policy.n} but the system has n={params.n}"
        )
    seeds = np.random.SeedSequence(config.seed).spawn(config.replications)
    reps = [
        _run_replication(params, policy, config, np.random.default_rng(s))
        for s in seeds
    ]
    a1 = np.array([r.availability.consumer for r in reps])
    a2 = np.array([r.availability.time_average for r in reps])
    f1 = np.array([r.consumed_fidelity.consumer for r in reps])
    f2 = np.array([r.consumed_fidelity.time_average for r in reps])
    total_requests = sum(r.requests for r in reps)
    total_served = sum(r.served for r in reps)
    total_fid = sum(r.consumed_fidelity_sum for r in reps)
    total_steps = sum(r.steps for r in reps)
    total_occ = sum(r.occupied_steps for r in reps)
    total_tavg = sum(r.time_avg_fidelity_sum for r in reps)
    _, a_se = _pooled_and_se(a1)
    _, f_se = _pooled_and_se(f1)
    _, a2_se = _pooled_and_se(a2)
    _, f2_se = _pooled_and_se(f2)
    return SimResult(
        a_hat=total_served / total_requests if total_requests else float("nan"),
        f_hat=total_fid / total_served if total_served else float("nan"),
        a_se=a_se,
        f_se=f_se,
        a_hat_time_avg=total_occ / total_steps if total_steps else float("nan"),
        f_hat_time_avg=total_tavg / total_occ if total_occ else float("nan"),
        a_se_time_avg=a2_se,
        f_se_time_avg=f2_se,
        total_steps=total_steps,
        total_requests=total_requests,
        total_served=total_served,
        f_hat_defined=total_served > 0,
        replications=tuple(reps),
    )


@dataclass(frozen=True)
class TraceRow:
    t: int
    fidelity: float
    event: str


def simulate_trajectory(
    params: SystemParams,
    policy: PurificationPolicy,
    steps: int,
    seed: int = 0,
) -> list[TraceRow]:
    """Single readable trajectory for debugging and plotting.

    Each row records the tick index, the fidelity after the tick's events
    (0 = empty memory) and the event label.  Uses its own per-tick draw
    stream; not bit-comparable with simulate()'s block streams.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    state = SimState()
    rows: list[TraceRow] = []
    for _ in range(steps):
        event = step(state, params, policy, rng=rng)
        rows.append(TraceRow(t=state.t, fidelity=state.fidelity, event=event))
    return rows

"""Exact closed-form performance metrics of the buffering system.

The buffered fidelity is a regenerative process: cycles alternate between an
occupied phase (expected length E[T_occ]) and an empty, generating phase
(expected length E[T_gen] = 1 / p_gen_star).  The two performance metrics
follow from renewal-reward arguments:

    availability            A = E[T_occ] / (E[T_gen] + E[T_occ])
    avg consumed fidelity   F_bar = (w~ F_new + x~) / (y~ F_new + z~)

with all intermediate quantities given in closed form in terms of the
binomial-weighted policy coefficient sums (a~, b~, c~, d~).  Everything here
is a deterministic, stateless function of the inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Union

import numpy as np

from .errors import (
    DivergentExpectationError,
    DomainError,
    EntBufferError,
    EvaluationError,
    NoGenerationError,
)
from .policies import PurificationPolicy
from .states import BellDiagonalState, werner_from_fidelity

#: Below this magnitude the direct evaluation of the occupied-time denominator
#: (1-A~)(1-D~) - B~C~ is at risk of catastrophic cancellation and the
#: gamma-form rational expression in q is used instead.
_CANCELLATION_GUARD = 1e-8


@dataclass(frozen=True)
class SystemParams:
    """Hardware, application and policy-frequency parameters of one system.

    ``gamma`` is the per-step decoherence rate of the stored link; ``q`` the
    probability of attempting purification when fresh links appear while the
    memory is occupied.
    """

    n: int
    p_gen: float
    p_con: float
    gamma: float
    q: float
    new_link: BellDiagonalState

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        for name in ("p_gen", "p_con", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
        if self.gamma < 0.0:
            raise DomainError(f"gamma must be non-negative, got {self.gamma}")
        if self.new_link.fidelity <= 0.25:
            raise DomainError(
                f"fresh links must have fidelity > 1/4, got {self.new_link.fidelity}"
            )

    @property
    def f_new(self) -> float:
        return self.new_link.fidelity

    @property
    def h_new(self) -> float:
        return self.f_new - 0.25

    @property
    def p_gen_star(self) -> float:
        return effective_generation_probability(self.n, self.p_gen)

    def with_value(self, variable: str, value: float) -> "SystemParams":
        """Copy with one sweep variable replaced (f_new rebuilds a Werner link)."""
        if variable in ("p_gen", "p_con", "gamma", "q"):
            return replace(self, **{variable: float(value)})
        if variable == "f_new":
            return replace(self, new_link=werner_from_fidelity(float(value)))
        raise DomainError(f"unknown sweep variable {variable!r}")


@dataclass(frozen=True)
class PolicyAggregates:
    """Binomial-weighted coefficient sums a~..d~ and the effective generation
    probability p_gen_star = 1 - (1 - p_gen)^n."""

    a_tilde: float
    b_tilde: float
    c_tilde: float
    d_tilde: float
    p_gen_star: float


@dataclass(frozen=True)
class Metrics:
    availability: float
    avg_consumed_fidelity: float
    expected_occupied_time: float
    expected_generation_time: float


def effective_generation_probability(n: int, p_gen: float) -> float:
    """Probability that at least one of n parallel attempts succeeds."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not 0.0 <= p_gen <= 1.0:
        raise DomainError(f"p_gen must lie in [0, 1], got {p_gen}")
    if p_gen == 1.0:
        return 1.0
    return -math.expm1(n * math.log1p(-p_gen))


def binomial_weights(n: int, p_gen: float) -> np.ndarray:
    """P(k successes out of n), indexed k = 0..n."""
    k = np.arange(n + 1)
    comb = np.array([math.comb(n, int(i)) for i in k], dtype=float)
    return comb * p_gen**k * (1.0 - p_gen) ** (n - k)


def policy_aggregates(policy: PurificationPolicy, n: int, p_gen: float) -> PolicyAggregates:
    """Weight each protocol's coefficients by the probability of its k."""
    if policy.n != n:
        raise DomainError(
            f"policy defines protocols for n={policy.n} but the system has n={n}"
        )
    w = binomial_weights(n, p_gen)
    a, b, c, d = policy.coefficient_arrays()
    return PolicyAggregates(
        a_tilde=float(np.dot(w[1:], a[1:])),
        b_tilde=float(np.dot(w[1:], b[1:])),
        c_tilde=float(np.dot(w[1:], c[1:])),
        d_tilde=float(np.dot(w[1:], d[1:])),
        p_gen_star=effective_generation_probability(n, p_gen),
    )


@dataclass(frozen=True)
class OccupiedTimeTerms:
    """Intermediate quantities of the occupied-time expectation."""

    a_cal: float  # A~
    b_cal: float  # B~
    c_cal: float  # C~
    d_cal: float  # D~
    p_tilde: float


def _tilde_terms(params: SystemParams, agg: PolicyAggregates) -> OccupiedTimeTerms:
    q, p_con = params.q, params.p_con
    ps = agg.p_gen_star
    p_tilde = p_con + q * ps * (1.0 - p_con)
    # exp(gamma) - (1 - q*ps)(1 - p_con) = expm1(gamma) + p_tilde, computed in
    # the second form to stay exact for small gamma.
    decay_denom = math.expm1(params.gamma) + p_tilde
    if p_tilde <= 0.0:
        return OccupiedTimeTerms(0.0, 0.0, 0.0, 0.0, 0.0)
    qc = q * (1.0 - p_con)
    return OccupiedTimeTerms(
        a_cal=qc * agg.a_tilde / decay_denom,
        b_cal=qc * agg.b_tilde / p_tilde,
        c_cal=qc * agg.c_tilde / decay_denom,
        d_cal=qc * agg.d_tilde / p_tilde,
        p_tilde=p_tilde,
    )


def _gamma_form_occupied_time(params: SystemParams, agg: PolicyAggregates) -> float:
    """E[T_occ] as a rational function of q with manifestly non-negative
    coefficients for admissible policies; immune to the cancellation in the
    direct form."""
    g = math.expm1(params.gamma)
    p_con, q = params.p_con, params.q
    ps, h = agg.p_gen_star, params.h_new
    at, bt, ct, dt = agg.a_tilde, agg.b_tilde, agg.c_tilde, agg.d_tilde
    eps = g + p_con
    eps_p = (1.0 - p_con) * (ps - at + h * ct)
    delta = eps * p_con
    delta_p = (1.0 - p_con) * (g * ps + 2.0 * p_con * ps - p_con * at - (g + p_con) * dt)
    delta_pp = (1.0 - p_con) ** 2 * (ps**2 - ps * at - ps * dt + at * dt - bt * ct)
    denom = delta + delta_p * q + delta_pp * q**2
    if denom <= 0.0 or not math.isfinite(denom):
        raise DivergentExpectationError(
            "expected occupied time diverges for these parameters"
        )
    return (eps + eps_p * q) / denom


def expected_occupied_time(params: SystemParams, policy: PurificationPolicy) -> float:
    """Expected number of steps the memory stays occupied within one cycle.

    Equals 1/p_con when q = 0 (removal only through consumption) and exactly
    1 when p_con = 1.
    """
    agg = policy_aggregates(policy, params.n, params.p_gen)
    terms = _tilde_terms(params, agg)
    if terms.p_tilde <= 0.0:
        raise DivergentExpectationError(
            "occupied time diverges: no consumption and no purification attempts "
            "(p_con = 0 and q * p_gen_star = 0)"
        )
    denom = (1.0 - terms.a_cal) * (1.0 - terms.d_cal) - terms.b_cal * terms.c_cal
    if abs(denom) < _CANCELLATION_GUARD:
        return _gamma_form_occupied_time(params, agg)
    value = (1.0 - terms.a_cal + terms.c_cal * params.h_new) / (denom * terms.p_tilde)
    if value <= 0.0 or not math.isfinite(value):
        return _gamma_form_occupied_time(params, agg)
    return value


def expected_generation_time(params: SystemParams) -> float:
    ps = params.p_gen_star
    if ps <= 0.0:
        raise NoGenerationError(
            "entanglement is never generated (p_gen_star = 0); the memory "
            "stays empty and the availability is 0"
        )
    return 1.0 / ps


def availability(params: SystemParams, policy: PurificationPolicy) -> float:
    """Long-run probability that a consumption request finds a stored link."""
    t_occ = expected_occupied_time(params, policy)
    t_gen = expected_generation_time(params)
    return t_occ / (t_gen + t_occ)


def avg_consumed_fidelity(params: SystemParams, policy: PurificationPolicy) -> float:
    """Long-run mean fidelity at consumption, conditioned on a link being present."""
    agg = policy_aggregates(policy, params.n, params.p_gen)
    g = math.expm1(params.gamma)
    q, p_con, f = params.q, params.p_con, params.f_new
    ps = agg.p_gen_star
    at, bt, ct, dt = agg.a_tilde, agg.b_tilde, agg.c_tilde, agg.d_tilde
    qc = q * (1.0 - p_con)
    w = p_con + qc * (ps + ct / 4.0 - dt)
    x = 0.25 * (g + qc * (-at + 4.0 * bt - ct / 4.0 + dt))
    y = qc * ct
    z = g + p_con + qc * (ps - at - ct / 4.0)
    denom = y * f + z
    if abs(denom) < 1e-300 or not math.isfinite(denom):
        raise EvaluationError(
            "average consumed fidelity is degenerate for these parameters "
            "(no decoherence, no consumption and no effective purification)"
        )
    return (w * f + x) / denom


def evaluate(params: SystemParams, policy: PurificationPolicy) -> Metrics:
    return Metrics(
        availability=availability(params, policy),
        avg_consumed_fidelity=avg_consumed_fidelity(params, policy),
        expected_occupied_time=expected_occupied_time(params, policy),
        expected_generation_time=expected_generation_time(params),
    )


# ---------------------------------------------------------------------------
# policy-independent bounds


def availability_bounds(params: SystemParams) -> tuple[float, float]:
    """(lower, upper) bounds on the availability over all admissible policies.

    The upper bound p*/(p* + p_con) is tight and attained at q = 0 (and by
    any deterministic policy); the lower bound evaluates the q = 1 worst case
    over the admissible coefficient region.
    """
    ps = params.p_gen_star
    g = math.expm1(params.gamma)
    p_con = params.p_con
    if ps == 0.0:
        return 0.0, 0.0
    upper = ps / (ps + p_con)
    xi = g * p_con + p_con**2
    xi_p = 1.0 + 2.0 * g + (2.0 - g) * p_con - 2.0 * p_con**2
    xi_pp = 2.0 * (1.0 - p_con) ** 2
    denom = xi + xi_p * ps + xi_pp * ps**2
    lower = ps * (g + p_con) / denom if denom > 0.0 else 0.0
    return lower, upper


def fidelity_bounds(params: SystemParams) -> tuple[float, float]:
    """(lower, upper) bounds on the average consumed fidelity for policies
    whose protocols do not degrade fresh links (J_k(F_new) >= F_new).

    The lower bound is tight and attained at q = 0; the width of the gap is
    3 (1 - p_con) p* / (4 gamma_exp + 4 p_con) with gamma_exp = e^gamma - 1.
    """
    g = math.expm1(params.gamma)
    p_con = params.p_con
    f = params.f_new
    if g + p_con <= 0.0:
        raise DomainError(
            "fidelity bounds are undefined when gamma = 0 and p_con = 0"
        )
    lower = (g + 4.0 * f * p_con) / (4.0 * g + 4.0 * p_con)
    upper = lower + 3.0 * (1.0 - p_con) * params.p_gen_star / (4.0 * g + 4.0 * p_con)
    return lower, upper


# ---------------------------------------------------------------------------
# parameter sweeps

SWEEP_VARIABLES = ("q", "p_gen", "gamma", "p_con", "f_new")

PolicySource = Union[PurificationPolicy, Callable[[SystemParams], PurificationPolicy]]


@dataclass(frozen=True)
class SweepRow:
    variable: str
    value: float
    availability: float
    avg_consumed_fidelity: float
    a_lower: float
    a_upper: float
    f_lower: float
    f_upper: float
    policy_label: str
    error: str | None = None
    bounds_ok: bool = True


def _resolve_policy(source: PolicySource, params: SystemParams) -> PurificationPolicy:
    if callable(source) and not isinstance(source, PurificationPolicy):
        return source(params)
    return source


def sweep(
    params: SystemParams,
    policy: PolicySource,
    variable: str,
    grid: Iterable[float],
    bound_slack: float = 1e-9,
) -> list[SweepRow]:
    """Evaluate metrics and bounds at each grid value of one parameter.

    ``policy`` may be a fixed policy or a callable rebuilding the policy from
    the per-row parameters (required when sweeping f_new, whose coefficients
    depend on the fresh-link state).  Rows that raise a domain error are
    recorded with the error message and the sweep continues.
    """
    if variable not in SWEEP_VARIABLES:
        raise DomainError(
            f"sweep variable must be one of {SWEEP_VARIABLES}, got {variable!r}"
        )
    rows: list[SweepRow] = []
    for value in grid:
        try:
            p = params.with_value(variable, value)
            pol = _resolve_policy(policy, p)
            metrics = evaluate(p, pol)
            a_lo, a_hi = availability_bounds(p)
            f_lo, f_hi = fidelity_bounds(p)
            a_ok = a_lo - bound_slack <= metrics.availability <= a_hi + bound_slack
            f_ok = True
            if pol.improves_new_links(p.f_new):
                f_ok = f_lo - bound_slack <= metrics.avg_consumed_fidelity <= f_hi + bound_slack
            rows.append(
                SweepRow(
                    variable=variable,
                    value=float(value),
                    availability=metrics.availability,
                    avg_consumed_fidelity=metrics.avg_consumed_fidelity,
                    a_lower=a_lo,
                    a_upper=a_hi,
                    f_lower=f_lo,
                    f_upper=f_hi,
                    policy_label=pol.label,
                    bounds_ok=a_ok and f_ok,
                )
            )
        except EntBufferError as exc:
            rows.append(
                SweepRow(
                    variable=variable,
                    value=float(value),
                    availability=float("nan"),
                    avg_consumed_fidelity=float("nan"),
                    a_lower=float("nan"),
                    a_upper=float("nan"),
                    f_lower=float("nan"),
                    f_upper=float("nan"),
                    policy_label=getattr(policy, "label", "unresolved"),
                    error=f"{type(exc).__name__}: {exc}",
                    bounds_ok=True,
                )
            )
    return rows

"""Purification protocols and policies.

A (k+1)-to-1 purification protocol acting on a buffered Werner link of
fidelity F is fully described by four coefficients (a, b, c, d):

    success probability  p(F) = c*(F - 1/4) + d
    jump (output)        J(F) = 1/4 + (a*(F - 1/4) + b) / (c*(F - 1/4) + d)

Admissible coefficients are those for which p is a probability and J stays
inside [1/4, 1] over the whole fidelity range:

    0 <= d <= 1
    -(4/3) d <= c <= (4/3)(1 - d)
    0 <= b <= (3/4) d
    -(4/3) b <= a <= -(4/3) b + (3/4) c + d

A policy assigns one protocol to each possible count k = 1..n of freshly
generated links.  Builders below cover the standard families: identity,
replacement, DEJMPS, sequentially concatenated DEJMPS, nested DEJMPS,
fidelity-optimal bilocal Clifford prestages (tabulated regime), a 5-to-1
error-correcting-code prestage, and the deterministic replace-with-DEJMPS
variants with and without an internal failure flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    AdmissibilityError,
    DegenerateProtocolError,
    DomainError,
    MissingDataError,
    TabulationError,
    UndefinedJumpError,
)
from .states import BellDiagonalState, dejmps_combine, twirl_to_werner, werner_from_fidelity

ADMISSIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class PurificationProtocol:
    """Coefficient quadruple (a, b, c, d) of one purification protocol."""

    a: float
    b: float
    c: float
    d: float

    def success_prob(self, fidelity: float) -> float:
        """p(F) = c*(F - 1/4) + d."""
        _check_fidelity(fidelity)
        return self.c * (fidelity - 0.25) + self.d

    def jump(self, fidelity: float) -> float:
        """J(F) = 1/4 + (a*(F - 1/4) + b) / p(F); undefined where p(F) = 0."""
        _check_fidelity(fidelity)
        h = fidelity - 0.25
        denom = self.c * h + self.d
        if denom <= ADMISSIBILITY_TOL:
            raise UndefinedJumpError(
                f"jump undefined at F={fidelity}: success probability is {denom}"
            )
        return 0.25 + (self.a * h + self.b) / denom

    def coefficients(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


def _check_fidelity(fidelity: float) -> None:
    if not 0.25 - ADMISSIBILITY_TOL <= fidelity <= 1.0 + ADMISSIBILITY_TOL:
        raise DomainError(f"fidelity must lie in [1/4, 1], got {fidelity}")


@dataclass(frozen=True)
class AdmissibilityReport:
    """Per-constraint outcome of validating a protocol's coefficients."""

    d_in_unit_interval: bool
    c_within_limits: bool
    b_within_limits: bool
    a_within_limits: bool
    jump_improves_new_links: bool | None = None

    @property
    def admissible(self) -> bool:
        return (
            self.d_in_unit_interval
            and self.c_within_limits
            and self.b_within_limits
            and self.a_within_limits
        )


def validate_protocol(
    protocol: PurificationProtocol,
    f_new: float | None = None,
    tol: float = ADMISSIBILITY_TOL,
) -> AdmissibilityReport:
    """Check the four admissibility constraints, reporting each separately.

    When ``f_new`` is given, additionally reports whether J(f_new) >= f_new,
    the hypothesis under which average consumed fidelity is monotone in the
    purification probability q.
    """
    a, b, c, d = protocol.coefficients()
    d_ok = -tol <= d <= 1.0 + tol
    c_ok = -(4.0 / 3.0) * d - tol <= c <= (4.0 / 3.0) * (1.0 - d) + tol
    b_ok = -tol <= b <= 0.75 * d + tol
    a_ok = -(4.0 / 3.0) * b - tol <= a <= -(4.0 / 3.0) * b + 0.75 * c + d + tol
    improves: bool | None = None
    if f_new is not None:
        try:
            improves = protocol.jump(f_new) >= f_new - tol
        except UndefinedJumpError:
            improves = None
    return AdmissibilityReport(d_ok, c_ok, b_ok, a_ok, improves)


@dataclass(frozen=True)
class PurificationPolicy:
    """Assignment of one admissible protocol to each fresh-link count k = 1..n."""

    n: int
    protocols: tuple[PurificationProtocol, ...]
    label: str = "custom"

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"policy needs n >= 1 bad memories, got {self.n}")
        if len(self.protocols) != self.n:
            raise DomainError(
                f"policy must define exactly one protocol per k in 1..{self.n}, "
                f"got {len(self.protocols)}"
            )
        object.__setattr__(self, "protocols", tuple(self.protocols))
        for k, proto in enumerate(self.protocols, start=1):
            report = validate_protocol(proto)
            if not report.admissible:
                raise AdmissibilityError(
                    f"protocol for k={k} violates admissibility: "
                    f"coefficients {proto.coefficients()}, report {report}"
                )

    def protocol(self, k: int) -> PurificationProtocol:
        if not 1 <= k <= self.n:
            raise DomainError(f"k must lie in 1..{self.n}, got {k}")
        return self.protocols[k - 1]

    def coefficient_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Coefficients as arrays indexed k = 1..n (index 0 is unused padding)."""
        a = np.zeros(self.n + 1)
        b = np.zeros(self.n + 1)
        c = np.zeros(self.n + 1)
        d = np.zeros(self.n + 1)
        for k, proto in enumerate(self.protocols, start=1):
            a[k], b[k], c[k], d[k] = proto.coefficients()
        return a, b, c, d

    def improves_new_links(self, f_new: float) -> bool:
        """True when every protocol satisfies J_k(f_new) >= f_new."""
        for proto in self.protocols:
            report = validate_protocol(proto, f_new=f_new)
            if not report.jump_improves_new_links:
                return False
        return True


# ---------------------------------------------------------------------------
# elementary protocols


IDENTITY_PROTOCOL = PurificationProtocol(1.0, 0.0, 0.0, 1.0)


def replacement_protocol(f_new: float) -> PurificationProtocol:
    """Deterministically swap the buffered link for a fresh one: J(F) = f_new."""
    if not 0.25 < f_new <= 1.0 + ADMISSIBILITY_TOL:
        raise DomainError(f"fresh-link fidelity must lie in (1/4, 1], got {f_new}")
    return PurificationProtocol(0.0, f_new - 0.25, 0.0, 1.0)


def dejmps_protocol(rho_new: BellDiagonalState) -> PurificationProtocol:
    """Coefficients of 2-to-1 DEJMPS with ancilla ``rho_new`` on a Werner buffer.

    For a Werner ancilla of fidelity F these reduce to
    a = (16F-1)/18, b = (10F-1)/72, c = (8F-2)/9, d = 1/2.
    """
    r0, r1, r2, r3 = rho_new.diag
    return PurificationProtocol(
        a=(5.0 * r0 + r1 + r2 - 3.0 * r3) / 6.0,
        b=(3.0 * r0 - 3.0 * r1 - 3.0 * r2 + 5.0 * r3) / 24.0,
        c=2.0 * (r0 - r1 - r2 + r3) / 3.0,
        d=(r0 + r1 + r2 + r3) / 2.0,
    )


def compose_with_prestage(
    theta_pre: float,
    sigma_pre: BellDiagonalState,
    base: PurificationProtocol | None = None,
) -> PurificationProtocol:
    """Prefix a protocol with a prestage that succeeds with probability theta_pre.

    The prestage condenses several fresh links into the single ancilla
    ``sigma_pre``; if it fails, everything (buffered link included) is lost,
    so the composite succeeds with theta_pre * p_base(F) while the jump is
    unchanged wherever defined.  All four coefficients are therefore scaled
    by theta_pre, which preserves admissibility for theta_pre in (0, 1].

    ``base`` defaults to DEJMPS against the prestage output.
    """
    if theta_pre <= 0.0:
        raise DegenerateProtocolError(
            f"prestage success probability must be positive, got {theta_pre}"
        )
    if theta_pre > 1.0 + ADMISSIBILITY_TOL:
        raise DomainError(f"prestage success probability must be <= 1, got {theta_pre}")
    if base is None:
        base = dejmps_protocol(sigma_pre)
    t = min(theta_pre, 1.0)
    return PurificationProtocol(t * base.a, t * base.b, t * base.c, t * base.d)


# ---------------------------------------------------------------------------
# policy builders


def identity_policy(n: int) -> PurificationPolicy:
    """Never touch the buffered link: J(F) = F with certainty (equivalent to q=0)."""
    return PurificationPolicy(n, (IDENTITY_PROTOCOL,) * n, label="identity")


def replacement_policy(n: int, f_new: float) -> PurificationPolicy:
    return PurificationPolicy(n, (replacement_protocol(f_new),) * n, label="replacement")


def dejmps_policy(n: int, rho_new: BellDiagonalState) -> PurificationPolicy:
    """Apply DEJMPS with one fresh link; surplus fresh links are discarded."""
    proto = dejmps_protocol(rho_new)
    return PurificationPolicy(n, (proto,) * n, label="dejmps")


def _concatenate_fresh(rho_new: BellDiagonalState, m: int) -> tuple[BellDiagonalState, float]:
    """Sequentially fuse m fresh copies into one link; returns (state, success prob)."""
    state = rho_new
    theta = 1.0
    for _ in range(m - 1):
        state, p = dejmps_combine(state, rho_new)
        theta *= p
    return state, theta


def concatenated_dejmps_policy(
    n: int,
    rho_new: BellDiagonalState,
    max_rounds: int,
    twirl_before_final: bool = False,
) -> PurificationPolicy:
    """DEJMPS applied sequentially, at most ``max_rounds`` times per attempt.

    When k links are generated, m = min(k, max_rounds) of them are fused
    sequentially into a single ancilla (discarding the rest), which then
    purifies the buffered link with a final DEJMPS round.  With
    ``twirl_before_final`` the fused ancilla is twirled to Werner form first.
    """
    if max_rounds < 1:
        raise DomainError(f"max_rounds must be >= 1, got {max_rounds}")
    protocols = []
    for k in range(1, n + 1):
        m = min(k, max_rounds)
        if m == 1:
            protocols.append(dejmps_protocol(rho_new))
            continue
        sigma, theta = _concatenate_fresh(rho_new, m)
        if twirl_before_final:
            sigma = twirl_to_werner(sigma)
        protocols.append(compose_with_prestage(theta, sigma))
    label = f"concat_dejmps_x{max_rounds}" + ("_twirl" if twirl_before_final else "")
    return PurificationPolicy(n, tuple(protocols), label=label)


def _nested_fresh(rho_new: BellDiagonalState, m: int) -> tuple[BellDiagonalState, float]:
    """Balanced pairwise fusion of m = 2**j fresh copies."""
    if m == 1:
        return rho_new, 1.0
    half, theta_half = _nested_fresh(rho_new, m // 2)
    out, p = dejmps_combine(half, half)
    return out, theta_half * theta_half * p


def nested_dejmps_policy(n: int, rho_new: BellDiagonalState) -> PurificationPolicy:
    """Pairwise-tree fusion of the fresh links, then DEJMPS on the buffer.

    The balanced tree is only defined for powers of two, so for each k the
    largest power of two <= k fresh links are used and the rest discarded.
    """
    protocols = []
    for k in range(1, n + 1):
        m = 1 << (k.bit_length() - 1)
        if m == 1:
            protocols.append(dejmps_protocol(rho_new))
            continue
        sigma, theta = _nested_fresh(rho_new, m)
        protocols.append(compose_with_prestage(theta, sigma))
    return PurificationPolicy(n, tuple(protocols), label="nested_dejmps")


# Fidelity-optimal bilocal Clifford prestages for Werner inputs: success
# probabilities and output fidelities are polynomial in the input fidelity;
# the remaining diagonal entries are only available as tabulated data.
def optimal_bc_theta(k: int, f: float) -> float:
    if k == 2:
        return (8.0 / 9.0) * f**2 - (4.0 / 9.0) * f + 5.0 / 9.0
    if k == 3:
        return (32.0 / 27.0) * f**3 - (4.0 / 9.0) * f**2 + 7.0 / 27.0
    if k == 4:
        return (32.0 / 27.0) * f**4 - (4.0 / 9.0) * f**2 + (4.0 / 27.0) * f + 1.0 / 9.0
    raise TabulationError(f"optimal bilocal Clifford prestage tabulated for k <= 4, got k={k}")


def optimal_bc_output_fidelity(k: int, f: float) -> float:
    theta = optimal_bc_theta(k, f)
    if k == 2:
        return ((10.0 / 9.0) * f**2 - (2.0 / 9.0) * f + 1.0 / 9.0) / theta
    if k == 3:
        return ((28.0 / 27.0) * f**3 - (1.0 / 9.0) * f + 2.0 / 27.0) / theta
    if k == 4:
        return ((8.0 / 9.0) * f**4 + (8.0 / 27.0) * f**3 - (2.0 / 9.0) * f**2 + 1.0 / 27.0) / theta
    raise TabulationError(f"optimal bilocal Clifford prestage tabulated for k <= 4, got k={k}")


#: Non-target diagonal entries (sigma_k11, sigma_k22, sigma_k33) of the
#: optimal bilocal Clifford output, tabulated per input fidelity.
OPTIMAL_BC_RESIDUALS: dict[float, dict[int, tuple[float, float, float]]] = {
    0.7: {
        2: (0.20589, 0.02941, 0.02941),
        3: (0.14287, 0.03571, 0.03571),
        4: (0.04545, 0.04545, 0.04545),
    },
}


def optimal_bc_output_state(
    k: int,
    f_new: float,
    residuals: dict[int, tuple[float, float, float]] | None = None,
) -> BellDiagonalState:
    """Full Bell-diagonal output of the optimal k-to-1 prestage on Werner inputs.

    The target entry comes from the closed-form polynomials; the other three
    are tabulated to five decimals, so the vector is renormalised.
    """
    if residuals is None:
        residuals = OPTIMAL_BC_RESIDUALS.get(round(f_new, 12))
    if residuals is None or k not in residuals:
        raise MissingDataError(
            f"non-target diagonal entries of the optimal {k}-to-1 prestage are not "
            f"tabulated for input fidelity {f_new}; supply them via `residuals`"
        )
    s00 = optimal_bc_output_fidelity(k, f_new)
    s11, s22, s33 = residuals[k]
    total = s00 + s11 + s22 + s33
    return BellDiagonalState((s00 / total, s11 / total, s22 / total, s33 / total))


def optimal_bc_policy(
    n: int,
    f_new: float,
    residuals: dict[int, tuple[float, float, float]] | None = None,
) -> PurificationPolicy:
    """Optimal k-to-1 bilocal Clifford prestage on the fresh links, then DEJMPS.

    Only the tabulated regime n <= 4 is supported; k = 1 falls back to plain
    DEJMPS.
    """
    if n > 4:
        raise TabulationError(
            f"optimal bilocal Clifford policy is tabulated for n <= 4, got n={n}"
        )
    rho_new = werner_from_fidelity(f_new)
    protocols: list[PurificationProtocol] = [dejmps_protocol(rho_new)]
    for k in range(2, n + 1):
        sigma = optimal_bc_output_state(k, f_new, residuals)
        protocols.append(compose_with_prestage(optimal_bc_theta(k, f_new), sigma))
    return PurificationPolicy(n, tuple(protocols), label="optimal_bc")


#: Success probability and twirled output fidelity of the 5-to-1
#: error-correcting-code prestage, for the two bundled input fidelities.
#: These are externally measured values, never recomputed here.
EC513_PRESETS: dict[float, tuple[float, float]] = {
    0.86: (0.869, 0.864),
    0.95: (0.981, 0.978),
}


def ec513_policy(
    n: int,
    f_new: float,
    theta_513: float | None = None,
    sigma00_513: float | None = None,
) -> PurificationPolicy:
    """Twice-concatenated DEJMPS with a 5-to-1 code-based prestage at k = 5.

    When all five links arrive at once, a purification stage built on the
    [[5,1,3]] code condenses them (success probability ``theta_513``, output
    twirled to a Werner state of fidelity ``sigma00_513``) before the final
    DEJMPS round.  The (theta, sigma00) pair is external data; presets are
    bundled for the two fidelities in ``EC513_PRESETS``.
    """
    if n < 5:
        raise DomainError(f"the 5-to-1 branch needs n >= 5 bad memories, got n={n}")
    if theta_513 is None or sigma00_513 is None:
        preset = EC513_PRESETS.get(round(f_new, 12))
        if preset is None:
            raise MissingDataError(
                f"no bundled (theta, sigma00) pair for fresh fidelity {f_new}; "
                "supply theta_513 and sigma00_513 explicitly"
            )
        theta_513, sigma00_513 = preset
    if not 0.0 < theta_513 <= 1.0:
        raise DomainError(f"theta_513 must lie in (0, 1], got {theta_513}")
    if not 0.25 <= sigma00_513 <= 1.0:
        raise DomainError(f"sigma00_513 must lie in [1/4, 1], got {sigma00_513}")
    rho_new = werner_from_fidelity(f_new)
    base = concatenated_dejmps_policy(n, rho_new, max_rounds=2)
    protocols = list(base.protocols)
    sigma5 = werner_from_fidelity(sigma00_513)
    protocols[4] = compose_with_prestage(theta_513, sigma5)
    return PurificationPolicy(n, tuple(protocols), label="ec513")


def dejmps_replacement_policy(n: int, f_new: float) -> PurificationPolicy:
    """Replace the buffer with the DEJMPS output of two fresh links (k >= 2).

    The replacement itself is unconditional, so the composite inherits the
    DEJMPS success probability and output fidelity evaluated at the fresh
    fidelity; with a single fresh link plain replacement is applied.
    """
    if n < 2:
        raise DomainError(f"this policy needs n >= 2 bad memories, got n={n}")
    base = dejmps_protocol(werner_from_fidelity(f_new))
    h_new = f_new - 0.25
    fused = PurificationProtocol(
        a=0.0,
        b=base.a * h_new + base.b,
        c=0.0,
        d=base.c * h_new + base.d,
    )
    protocols = (replacement_protocol(f_new),) + (fused,) * (n - 1)
    return PurificationPolicy(n, protocols, label="dejmps_replacement")


def flagged_dejmps_replacement_policy(n: int, f_new: float) -> PurificationPolicy:
    """Flagged variant: a failed DEJMPS stage leaves the buffered link untouched.

    Raising the internal failure flag makes the composite deterministic
    (p = 1); the output is the success-probability-weighted average of the
    DEJMPS output and the unchanged buffered link:

        a' = 1 - c*(f_new - 1/4) - d,   b' = a*(f_new - 1/4) + b,

    with (a, b, c, d) the DEJMPS coefficients at the fresh fidelity.
    """
    if n < 2:
        raise DomainError(f"this policy needs n >= 2 bad memories, got n={n}")
    base = dejmps_protocol(werner_from_fidelity(f_new))
    h_new = f_new - 0.25
    flagged = PurificationProtocol(
        a=1.0 - base.c * h_new - base.d,
        b=base.a * h_new + base.b,
        c=0.0,
        d=1.0,
    )
    protocols = (replacement_protocol(f_new),) + (flagged,) * (n - 1)
    return PurificationPolicy(n, protocols, label="flagged_dejmps_replacement")


# ---------------------------------------------------------------------------
# random sampling of the admissible coefficient space


def random_admissible_protocol(rng: np.random.Generator) -> PurificationProtocol:
    """Draw coefficients uniformly inside the admissibility box, constraint by
    constraint (d, then b and c given d, then a given b, c, d)."""
    d = rng.uniform(0.0, 1.0)
    b = rng.uniform(0.0, 0.75 * d)
    c = rng.uniform(-(4.0 / 3.0) * d, (4.0 / 3.0) * (1.0 - d))
    a_lo = -(4.0 / 3.0) * b
    a_hi = a_lo + 0.75 * c + d
    a = rng.uniform(a_lo, a_hi)
    return PurificationProtocol(a, b, c, d)


def random_admissible_policy(
    n: int, rng: np.random.Generator, label: str = "random"
) -> PurificationPolicy:
    protos = tuple(random_admissible_protocol(rng) for _ in range(n))
    return PurificationPolicy(n, protos, label=label)


# ---------------------------------------------------------------------------
# policy specification schema (consumed by the CLI and config files)


def build_policy(
    spec: dict,
    n: int,
    rho_new: BellDiagonalState,
) -> PurificationPolicy:
    """Construct a policy from its JSON-style specification.

    ``spec`` is a mapping with a ``kind`` key and kind-specific parameters:

    - ``identity``, ``replacement``, ``dejmps``, ``nested_dejmps``,
      ``dejmps_replacement``, ``flagged_dejmps_replacement``: no parameters
    - ``concat_dejmps``: ``rounds`` (int >= 1), optional ``twirl`` (bool)
    - ``optimal_bc``: optional ``residuals`` {k: [s11, s22, s33]}
    - ``ec513``: optional ``theta`` and ``sigma00`` (else bundled presets)
    - ``custom``: ``protocols``: list of n [a, b, c, d] quadruples, validated
      on load; optional ``label``
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise DomainError("policy specification must be a mapping with a 'kind' key")
    kind = spec["kind"]
    f_new = rho_new.fidelity
    if kind == "identity":
        return identity_policy(n)
    if kind == "replacement":
        return replacement_policy(n, f_new)
    if kind == "dejmps":
        return dejmps_policy(n, rho_new)
    if kind == "concat_dejmps":
        rounds = spec.get("rounds", spec.get("N"))
        if rounds is None:
            raise DomainError("concat_dejmps policy requires a 'rounds' parameter")
        return concatenated_dejmps_policy(
            n, rho_new, int(rounds), twirl_before_final=bool(spec.get("twirl", False))
        )
    if kind == "nested_dejmps":
        return nested_dejmps_policy(n, rho_new)
    if kind == "optimal_bc":
        residuals = spec.get("residuals")
        if residuals is not None:
            residuals = {int(k): tuple(map(float, v)) for k, v in residuals.items()}
        if not rho_new.is_werner(tol=1e-9):
            raise DomainError("optimal_bc policy requires a Werner fresh-link state")
        return optimal_bc_policy(n, f_new, residuals)
    if kind == "ec513":
        if not rho_new.is_werner(tol=1e-9):
            raise DomainError("ec513 policy requires a Werner fresh-link state")
        return ec513_policy(n, f_new, spec.get("theta"), spec.get("sigma00"))
    if kind == "dejmps_replacement":
        return dejmps_replacement_policy(n, f_new)
    if kind == "flagged_dejmps_replacement":
        return flagged_dejmps_replacement_policy(n, f_new)
    if kind == "custom":
        quads = spec.get("protocols")
        if not isinstance(quads, list) or len(quads) != n:
            raise DomainError(
                f"custom policy must supply exactly n={n} coefficient quadruples"
            )
        protos = tuple(PurificationProtocol(*map(float, quad)) for quad in quads)
        return PurificationPolicy(n, protos, label=str(spec.get("label", "custom")))
    raise DomainError(f"unknown policy kind {kind!r}")


POLICY_KINDS = (
    "identity",
    "replacement",
    "dejmps",
    "concat_dejmps",
    "nested_dejmps",
    "optimal_bc",
    "ec513",
    "dejmps_replacement",
    "flagged_dejmps_replacement",
    "custom",
)

"""Bell-diagonal two-qubit state algebra.

States are represented by their four diagonal entries in the Bell basis,
ordered (phi+, phi-, psi+, psi-).  The fidelity of a state is its overlap
with phi+, i.e. the first entry.  Everything here is a pure function over
immutable values.

The fidelity value 0.0 is reserved by the buffering model as the "no link
present" sentinel; it is never a valid ``BellDiagonalState`` (a stored link
always has fidelity above the fully-depolarised fixed point 1/4 minus
decoherence, and an empty slot is not a state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateProtocolError, DomainError

#: Post-construction tolerance for the probability-vector invariants.
PROB_TOL = 1e-12

#: Inputs whose normalisation is off by more than this are rejected rather
#: than silently renormalised.
RENORM_TOL = 1e-9


@dataclass(frozen=True)
class BellDiagonalState:
    """Diagonal of a two-qubit state in the Bell basis (phi+, phi-, psi+, psi-).

    Entries are clamped/renormalised only within ``RENORM_TOL``; anything
    further from a probability vector raises :class:`DomainError`.
    """

    diag: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.diag) != 4:
            raise DomainError(f"expected 4 Bell-diagonal entries, got {len(self.diag)}")
        d = [float(x) for x in self.diag]
        if any(math.isnan(x) or x < -PROB_TOL for x in d):
            raise DomainError(f"Bell-diagonal entries must be non-negative, got {d}")
        d = [max(x, 0.0) for x in d]
        total = sum(d)
        if abs(total - 1.0) > RENORM_TOL:
            raise DomainError(f"Bell-diagonal entries must sum to 1, got sum={total!r}")
        if abs(total - 1.0) > PROB_TOL:
            d = [x / total for x in d]
        object.__setattr__(self, "diag", tuple(d))

    @property
    def fidelity(self) -> float:
        return self.diag[0]

    def is_werner(self, tol: float = PROB_TOL) -> bool:
        _, b, c, d = self.diag
        return abs(b - c) <= tol and abs(c - d) <= tol


def werner_from_fidelity(fidelity: float) -> BellDiagonalState:
    """Werner state with the given fidelity: (F, (1-F)/3, (1-F)/3, (1-F)/3)."""
    if not 0.25 - PROB_TOL <= fidelity <= 1.0 + PROB_TOL:
        raise DomainError(f"Werner fidelity must lie in [1/4, 1], got {fidelity}")
    f = min(max(fidelity, 0.25), 1.0)
    rest = (1.0 - f) / 3.0
    return BellDiagonalState((f, rest, rest, rest))


def decohere_fidelity(fidelity: float, t: float, gamma: float) -> float:
    """Fidelity after ``t`` time steps of depolarising noise at rate ``gamma``.

    F -> (F - 1/4) * exp(-gamma * t) + 1/4.  The empty-slot sentinel F = 0
    is a fixed point by convention (no link, nothing decoheres).
    """
    if gamma < 0:
        raise DomainError(f"decoherence rate must be non-negative, got {gamma}")
    if t < 0:
        raise DomainError(f"elapsed time must be non-negative, got {t}")
    if fidelity == 0.0:
        return 0.0
    return (fidelity - 0.25) * math.exp(-gamma * t) + 0.25


def twirl_to_werner(state: BellDiagonalState) -> BellDiagonalState:
    """Depolarise off-target weight evenly, preserving the fidelity exactly."""
    f = state.diag[0]
    rest = (1.0 - f) / 3.0
    return BellDiagonalState((f, rest, rest, rest))


def dejmps_combine(
    sigma: BellDiagonalState, sigma_prime: BellDiagonalState
) -> tuple[BellDiagonalState, float]:
    """2-to-1 DEJMPS recurrence on two Bell-diagonal inputs.

    Returns the normalised output state conditioned on success together with
    the success probability

        P = (s00 + s33)(s'00 + s'33) + (s11 + s22)(s'11 + s'22).

    The four output numerators pair (00,33) and (11,22) symmetrically; they
    sum to P, so the output is normalised by construction.
    """
    s = sigma.diag
    sp = sigma_prime.diag
    p_succ = (s[0] + s[3]) * (sp[0] + sp[3]) + (s[1] + s[2]) * (sp[1] + sp[2])
    if p_succ <= PROB_TOL:
        raise DegenerateProtocolError(
            "DEJMPS combination of these states can never succeed (P = 0)"
        )
    out = (
        (s[0] * sp[0] + s[3] * sp[3]) / p_succ,
        (s[0] * sp[3] + s[3] * sp[0]) / p_succ,
        (s[1] * sp[1] + s[2] * sp[2]) / p_succ,
        (s[1] * sp[2] + s[2] * sp[1]) / p_succ,
    )
    return BellDiagonalState(out), p_succ

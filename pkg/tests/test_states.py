"""Bell-diagonal state algebra: construction, decoherence, twirling, DEJMPS."""

import math

import numpy as np
import pytest

from entbuffer import (
    BellDiagonalState,
    DegenerateProtocolError,
    DomainError,
    decohere_fidelity,
    dejmps_combine,
    twirl_to_werner,
    werner_from_fidelity,
)


def random_state(rng):
    d = rng.dirichlet(np.ones(4))
    return BellDiagonalState(tuple(d))


class TestBellDiagonalState:
    def test_invariants_after_construction(self):
        s = BellDiagonalState((0.7, 0.1, 0.15, 0.05))
        assert all(x >= 0 for x in s.diag)
        assert abs(sum(s.diag) - 1.0) <= 1e-12
        assert s.fidelity == 0.7

    def test_small_deviation_renormalised(self):
        s = BellDiagonalState((0.7 + 3e-10, 0.1, 0.1, 0.1))
        assert abs(sum(s.diag) - 1.0) <= 1e-12

    def test_large_deviation_rejected(self):
        with pytest.raises(DomainError):
            BellDiagonalState((0.8, 0.1, 0.1, 0.1))

    def test_negative_entry_rejected(self):
        with pytest.raises(DomainError):
            BellDiagonalState((1.05, -0.05, 0.0, 0.0))


class TestWernerFromFidelity:
    def test_perfect_pair(self):
        assert werner_from_fidelity(1.0).diag == (1.0, 0.0, 0.0, 0.0)

    def test_maximally_mixed(self):
        assert werner_from_fidelity(0.25).diag == (0.25, 0.25, 0.25, 0.25)

    def test_generic(self):
        s = werner_from_fidelity(0.7)
        assert s.diag == pytest.approx((0.7, 0.1, 0.1, 0.1), abs=1e-15)

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            werner_from_fidelity(0.2)
        with pytest.raises(DomainError):
            werner_from_fidelity(1.1)


class TestDecohere:
    def test_zero_time(self):
        assert decohere_fidelity(0.9, 0, 0.02) == 0.9

    def test_fixed_point(self):
        assert decohere_fidelity(0.25, 17, 1.0) == pytest.approx(0.25, abs=1e-15)

    def test_generic_value(self):
        # 0.25 + 0.65 * exp(-0.02)
        assert decohere_fidelity(0.9, 1, 0.02) == pytest.approx(
            0.8871291376493909, abs=1e-15
        )

    def test_empty_sentinel(self):
        assert decohere_fidelity(0.0, 5, 0.1) == 0.0

    def test_negative_inputs_rejected(self):
        with pytest.raises(DomainError):
            decohere_fidelity(0.9, -1, 0.02)
        with pytest.raises(DomainError):
            decohere_fidelity(0.9, 1, -0.02)

    def test_semigroup_property(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            f = rng.uniform(0.25, 1.0)
            g = rng.uniform(0.0, 2.0)
            t1, t2 = rng.uniform(0, 20, size=2)
            twice = decohere_fidelity(decohere_fidelity(f, t1, g), t2, g)
            once = decohere_fidelity(f, t1 + t2, g)
            assert twice == pytest.approx(once, abs=1e-12)


class TestTwirl:
    def test_werner_fixed_point(self):
        s = BellDiagonalState((1.0, 0.0, 0.0, 0.0))
        assert twirl_to_werner(s).diag == s.diag

    def test_fidelity_preserved_rest_equalised(self):
        s = twirl_to_werner(BellDiagonalState((0.7, 0.2, 0.05, 0.05)))
        assert s.diag == pytest.approx((0.7, 0.1, 0.1, 0.1), abs=1e-15)

    def test_maximally_mixed_fixed_point(self):
        s = BellDiagonalState((0.25, 0.25, 0.25, 0.25))
        assert twirl_to_werner(s).diag == s.diag

    def test_idempotent_and_exact_on_first_entry(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            s = random_state(rng)
            t1 = twirl_to_werner(s)
            assert t1.diag[0] == s.diag[0]
            assert twirl_to_werner(t1).diag == pytest.approx(t1.diag, abs=1e-15)


class TestDejmpsCombine:
    def test_perfect_pairs(self):
        perfect = BellDiagonalState((1.0, 0.0, 0.0, 0.0))
        out, p = dejmps_combine(perfect, perfect)
        assert p == 1.0
        assert out.diag == (1.0, 0.0, 0.0, 0.0)

    def test_werner_07_success_probability(self):
        w = werner_from_fidelity(0.7)
        _, p = dejmps_combine(w, w)
        assert p == pytest.approx(0.68, abs=1e-12)

    def test_werner_07_output_state(self):
        w = werner_from_fidelity(0.7)
        out, _ = dejmps_combine(w, w)
        # exact: (25, 7, 1, 1) / 34
        assert out.diag == pytest.approx(
            (25 / 34, 7 / 34, 1 / 34, 1 / 34), abs=1e-14
        )

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            s1, s2 = random_state(rng), random_state(rng)
            try:
                out_a, p_a = dejmps_combine(s1, s2)
                out_b, p_b = dejmps_combine(s2, s1)
            except DegenerateProtocolError:
                continue
            assert p_a == pytest.approx(p_b, abs=1e-12)
            assert out_a.diag == pytest.approx(out_b.diag, abs=1e-12)

    def test_output_normalised(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            s1, s2 = random_state(rng), random_state(rng)
            try:
                out, p = dejmps_combine(s1, s2)
            except DegenerateProtocolError:
                continue
            assert 0.0 < p <= 1.0 + 1e-12
            assert all(x >= -1e-12 for x in out.diag)
            assert sum(out.diag) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_inputs(self):
        a = BellDiagonalState((0.5, 0.0, 0.0, 0.5))
        b = BellDiagonalState((0.0, 0.5, 0.5, 0.0))
        with pytest.raises(DegenerateProtocolError):
            dejmps_combine(a, b)

    def test_success_prob_matches_protocol_form(self):
        # P from the recurrence equals c*(F-1/4)+d of the coefficient form
        # when the first input is Werner.
        from entbuffer import dejmps_protocol

        rng = np.random.default_rng(17)
        for _ in range(200):
            f = rng.uniform(0.25, 1.0)
            rho = random_state(rng)
            proto = dejmps_protocol(rho)
            try:
                _, p = dejmps_combine(werner_from_fidelity(f), rho)
            except DegenerateProtocolError:
                continue
            assert p == pytest.approx(proto.success_prob(f), abs=1e-12)

    def test_jump_matches_combine_fidelity_without_psi_minus_weight(self):
        # The coefficient-form jump and the recurrence output fidelity agree
        # exactly when the ancilla carries no psi- weight.
        from entbuffer import dejmps_protocol

        rng = np.random.default_rng(19)
        for _ in range(200):
            f = rng.uniform(0.3, 1.0)
            d = rng.dirichlet(np.ones(3))
            rho = BellDiagonalState((d[0], d[1], d[2], 0.0))
            proto = dejmps_protocol(rho)
            try:
                out, p = dejmps_combine(werner_from_fidelity(f), rho)
            except DegenerateProtocolError:
                continue
            if p <= 1e-9:
                continue
            assert out.fidelity == pytest.approx(proto.jump(f), abs=1e-11)

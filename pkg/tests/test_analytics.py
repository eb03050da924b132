"""Closed-form metrics: aggregates, expectations, bounds, monotonicity, sweeps."""

import math

import numpy as np
import pytest

from conftest import make_params, random_valid_params
from entbuffer import (
    DivergentExpectationError,
    DomainError,
    NoGenerationError,
    availability,
    availability_bounds,
    avg_consumed_fidelity,
    concatenated_dejmps_policy,
    dejmps_policy,
    effective_generation_probability,
    evaluate,
    expected_occupied_time,
    fidelity_bounds,
    identity_policy,
    policy_aggregates,
    random_admissible_policy,
    replacement_policy,
    sweep,
    werner_from_fidelity,
)
from entbuffer.analytics import SystemParams, _gamma_form_occupied_time
from entbuffer.policies import PurificationPolicy, PurificationProtocol


class TestEffectiveGeneration:
    def test_single_memory(self):
        assert effective_generation_probability(1, 0.3) == pytest.approx(0.3, abs=1e-15)

    def test_two_memories(self):
        assert effective_generation_probability(2, 0.5) == pytest.approx(0.75, abs=1e-15)

    def test_ten_memories(self):
        assert effective_generation_probability(10, 0.5) == pytest.approx(
            0.9990234375, abs=1e-15
        )

    def test_saturating_cases(self):
        assert effective_generation_probability(3, 1.0) == 1.0
        assert effective_generation_probability(3, 0.0) == 0.0


class TestPolicyAggregates:
    def test_identity_policy_aggregates(self):
        for n, p_gen in ((1, 0.3), (4, 0.6), (7, 0.05)):
            agg = policy_aggregates(identity_policy(n), n, p_gen)
            ps = effective_generation_probability(n, p_gen)
            assert agg.a_tilde == pytest.approx(ps, abs=1e-14)
            assert agg.d_tilde == pytest.approx(ps, abs=1e-14)
            assert agg.b_tilde == 0.0
            assert agg.c_tilde == 0.0

    def test_constant_protocol_factors_out(self):
        pol = dejmps_policy(5, werner_from_fidelity(0.8))
        agg = policy_aggregates(pol, 5, 0.4)
        ps = effective_generation_probability(5, 0.4)
        a, b, c, d = pol.protocol(1).coefficients()
        assert agg.a_tilde == pytest.approx(a * ps, abs=1e-14)
        assert agg.b_tilde == pytest.approx(b * ps, abs=1e-14)
        assert agg.c_tilde == pytest.approx(c * ps, abs=1e-14)
        assert agg.d_tilde == pytest.approx(d * ps, abs=1e-14)

    def test_dejmps_n2_value(self):
        pol = dejmps_policy(2, werner_from_fidelity(0.7))
        agg = policy_aggregates(pol, 2, 0.5)
        assert agg.a_tilde == pytest.approx(0.75 * (16 * 0.7 - 1) / 18, abs=1e-14)
        assert agg.a_tilde == pytest.approx(0.425, abs=1e-12)

    def test_aggregate_invariants_random(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(1, 7))
            p_gen = float(rng.uniform(0, 1))
            pol = random_admissible_policy(n, rng)
            agg = policy_aggregates(pol, n, p_gen)
            ps = agg.p_gen_star
            assert agg.d_tilde <= ps + 1e-12
            assert agg.b_tilde >= -1e-12
            assert -ps - 1e-12 <= agg.a_tilde <= ps + 1e-12

    def test_mismatched_n_rejected(self):
        with pytest.raises(DomainError):
            policy_aggregates(identity_policy(3), 4, 0.5)


class TestExpectedOccupiedTime:
    def test_no_purification_geometric(self):
        params = make_params(q=0.0, p_con=0.25)
        pol = identity_policy(params.n)
        assert expected_occupied_time(params, pol) == pytest.approx(4.0, abs=1e-12)

    def test_replacement_never_empties_until_consumption(self):
        params = make_params(n=2, p_gen=1.0, q=1.0, p_con=0.25, f_new=0.7)
        pol = replacement_policy(2, 0.7)
        assert expected_occupied_time(params, pol) == pytest.approx(4.0, abs=1e-12)

    def test_certain_consumption(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            params = random_valid_params(rng)
            params = SystemParams(
                n=params.n, p_gen=params.p_gen, p_con=1.0, gamma=params.gamma,
                q=params.q, new_link=params.new_link,
            )
            pol = random_admissible_policy(params.n, rng)
            assert expected_occupied_time(params, pol) == pytest.approx(1.0, abs=1e-12)

    def test_divergent_without_consumption_or_purification(self):
        params = make_params(q=0.0, p_con=0.0)
        with pytest.raises(DivergentExpectationError):
            expected_occupied_time(params, identity_policy(params.n))

    def test_gamma_form_matches_direct_form(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            params = random_valid_params(rng)
            pol = random_admissible_policy(params.n, rng)
            direct = expected_occupied_time(params, pol)
            from entbuffer.analytics import policy_aggregates as agg_fn

            gamma_form = _gamma_form_occupied_time(
                params, agg_fn(pol, params.n, params.p_gen)
            )
            assert direct == pytest.approx(gamma_form, rel=1e-9)


class TestAvailability:
    def test_q0_equals_upper_bound_exactly(self):
        params = make_params(n=2, p_gen=0.5, p_con=0.25, q=0.0)
        pol = identity_policy(2)
        assert availability(params, pol) == pytest.approx(0.75, abs=1e-12)

    def test_saturated_system_half(self):
        for gamma in (0.0, 0.02, 1.0):
            for pol_builder in (
                lambda n: identity_policy(n),
                lambda n: dejmps_policy(n, werner_from_fidelity(0.8)),
            ):
                params = make_params(n=3, p_gen=1.0, p_con=1.0, gamma=gamma, q=1.0)
                assert availability(params, pol_builder(3)) == pytest.approx(
                    0.5, abs=1e-12
                )

    def test_replacement_hits_upper_bound_for_any_q(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            params = random_valid_params(rng)
            pol = replacement_policy(params.n, params.f_new)
            upper = availability_bounds(params)[1]
            assert availability(params, pol) == pytest.approx(upper, abs=1e-12)

    def test_no_generation_error(self):
        params = make_params(p_gen=0.0)
        with pytest.raises(NoGenerationError):
            availability(params, identity_policy(params.n))


class TestAvgConsumedFidelity:
    def test_q0_no_noise_is_fresh_fidelity(self):
        params = make_params(q=0.0, gamma=0.0, f_new=0.9)
        pol = identity_policy(params.n)
        assert avg_consumed_fidelity(params, pol) == pytest.approx(0.9, abs=1e-12)

    def test_q0_general_closed_form(self):
        rng = np.random.default_rng(19)
        for _ in range(100):
            params = random_valid_params(rng)
            params = SystemParams(
                n=params.n, p_gen=params.p_gen, p_con=params.p_con,
                gamma=params.gamma, q=0.0, new_link=params.new_link,
            )
            pol = random_admissible_policy(params.n, rng)
            g = math.expm1(params.gamma)
            expected = (g / 4 + params.f_new * params.p_con) / (g + params.p_con)
            assert avg_consumed_fidelity(params, pol) == pytest.approx(
                expected, abs=1e-12
            )

    def test_edge_case_saturated_formula(self):
        # p_gen = p_con = 1: the buffer alternates store/consume, so the
        # consumed link always decohered exactly one step.
        for gamma, f_new in ((0.0, 0.9), (0.3, 0.7), (1.0, 0.95)):
            params = make_params(n=2, p_gen=1.0, p_con=1.0, gamma=gamma, q=1.0, f_new=f_new)
            pol = dejmps_policy(2, params.new_link)
            expected = math.exp(-gamma) * (f_new - 0.25) + 0.25
            assert avg_consumed_fidelity(params, pol) == pytest.approx(
                expected, abs=1e-12
            )

    def test_edge_case_always_failing_purification(self):
        # Purification that always fails (all-zero coefficients) with q = 1
        # and deterministic generation alternates exactly like consumption-
        # saturated operation.
        always_fail = PurificationProtocol(0.0, 0.0, 0.0, 0.0)
        for p_con in (0.3, 0.7, 1.0):
            params = make_params(n=2, p_gen=1.0, p_con=p_con, gamma=0.1, q=1.0, f_new=0.8)
            pol = PurificationPolicy(2, (always_fail, always_fail), label="always_fail")
            expected = math.exp(-0.1) * (0.8 - 0.25) + 0.25
            assert avg_consumed_fidelity(params, pol) == pytest.approx(expected, abs=1e-12)
            assert availability(params, pol) == pytest.approx(0.5, abs=1e-12)


class TestBounds:
    def test_availability_bounds_coincide_at_no_noise_full_consumption(self):
        params = make_params(gamma=0.0, p_con=1.0)
        lo, hi = availability_bounds(params)
        ps = params.p_gen_star
        assert hi == pytest.approx(ps / (1 + ps), abs=1e-12)
        assert lo == pytest.approx(hi, abs=1e-12)

    def test_availability_bounds_small_p_limit(self):
        params = make_params(n=1, p_gen=1e-5, p_con=0.5)
        lo, hi = availability_bounds(params)
        ratio = params.p_gen_star / params.p_con
        assert hi == pytest.approx(ratio, rel=1e-4)
        assert lo == pytest.approx(ratio, rel=1e-3)

    def test_fidelity_bounds_zero_width_without_generation(self):
        params = make_params(p_gen=0.0)
        lo, hi = fidelity_bounds(params)
        assert lo == pytest.approx(hi, abs=1e-15)

    def test_fidelity_lower_bound_no_noise(self):
        for p_con in (0.1, 0.5, 1.0):
            params = make_params(gamma=0.0, p_con=p_con, f_new=0.85)
            lo, _ = fidelity_bounds(params)
            assert lo == pytest.approx(0.85, abs=1e-12)

    def test_fidelity_bounds_undefined_degenerate(self):
        params = make_params(gamma=0.0, p_con=0.0, q=1.0)
        with pytest.raises(DomainError):
            fidelity_bounds(params)

    def test_tightness_at_q0(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            base = random_valid_params(rng)
            params = SystemParams(
                n=base.n, p_gen=base.p_gen, p_con=base.p_con, gamma=base.gamma,
                q=0.0, new_link=base.new_link,
            )
            pol = random_admissible_policy(params.n, rng)
            assert availability(params, pol) == pytest.approx(
                availability_bounds(params)[1], abs=1e-12
            )
            assert avg_consumed_fidelity(params, pol) == pytest.approx(
                fidelity_bounds(params)[0], abs=1e-12
            )

    def test_containment_random_battery(self):
        rng = np.random.default_rng(29)
        for _ in range(300):
            params = random_valid_params(rng)
            pol = random_admissible_policy(params.n, rng)
            a = availability(params, pol)
            a_lo, a_hi = availability_bounds(params)
            assert a_lo - 1e-9 <= a <= a_hi + 1e-9
            if pol.improves_new_links(params.f_new):
                f = avg_consumed_fidelity(params, pol)
                f_lo, f_hi = fidelity_bounds(params)
                assert f_lo - 1e-9 <= f <= f_hi + 1e-9


class TestMonotonicity:
    q_grid = np.linspace(0.0, 1.0, 11)

    def _metrics_over_q(self, base, pol):
        a_vals, f_vals = [], []
        for q in self.q_grid:
            params = SystemParams(
                n=base.n, p_gen=base.p_gen, p_con=base.p_con, gamma=base.gamma,
                q=float(q), new_link=base.new_link,
            )
            a_vals.append(availability(params, pol))
            f_vals.append(avg_consumed_fidelity(params, pol))
        return np.array(a_vals), np.array(f_vals)

    def test_availability_non_increasing_in_q(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            base = random_valid_params(rng)
            pol = random_admissible_policy(base.n, rng)
            a_vals, _ = self._metrics_over_q(base, pol)
            assert np.all(np.diff(a_vals) <= 1e-10)

    def test_fidelity_non_decreasing_in_q_for_improving_policies(self):
        rng = np.random.default_rng(37)
        checked = 0
        for _ in range(300):
            base = random_valid_params(rng)
            pol = random_admissible_policy(base.n, rng)
            if not pol.improves_new_links(base.f_new):
                continue
            checked += 1
            _, f_vals = self._metrics_over_q(base, pol)
            assert np.all(np.diff(f_vals) >= -1e-10)
        assert checked >= 30  # the sampler must exercise the hypothesis

    def test_gamma_dependence_tracks_c_coefficients(self):
        # Availability reacts to the noise level exactly when some protocol
        # has a fidelity-dependent success probability (c_k != 0).
        pol_dep = dejmps_policy(2, werner_from_fidelity(0.8))
        pol_flat = replacement_policy(2, 0.8)
        a_dep = [
            availability(make_params(n=2, gamma=g, q=1.0, f_new=0.8), pol_dep)
            for g in (0.05, 0.4)
        ]
        a_flat = [
            availability(make_params(n=2, gamma=g, q=1.0, f_new=0.8), pol_flat)
            for g in (0.05, 0.4)
        ]
        assert abs(a_dep[0] - a_dep[1]) > 1e-6
        assert a_flat[0] == pytest.approx(a_flat[1], abs=1e-14)


class TestSweep:
    def test_identity_policy_q_invariant(self):
        params = make_params(q=0.5)
        rows = sweep(params, identity_policy(params.n), "q", [0.0, 0.5, 1.0])
        a_vals = {r.availability for r in rows}
        f_vals = {r.avg_consumed_fidelity for r in rows}
        assert max(a_vals) - min(a_vals) <= 1e-13
        assert max(f_vals) - min(f_vals) <= 1e-13

    def test_dejmps_q_sweep_monotone_and_tight_at_zero(self):
        params = make_params(n=10, p_gen=0.5, p_con=0.1, gamma=0.02, f_new=0.9)
        pol = dejmps_policy(10, params.new_link)
        rows = sweep(params, pol, "q", np.linspace(0, 1, 11))
        a = [r.availability for r in rows]
        f = [r.avg_consumed_fidelity for r in rows]
        assert all(x >= y - 1e-10 for x, y in zip(a, a[1:]))
        assert all(x <= y + 1e-10 for x, y in zip(f, f[1:]))
        assert a[0] == pytest.approx(rows[0].a_upper, abs=1e-12)
        assert f[0] == pytest.approx(rows[0].f_lower, abs=1e-12)
        assert all(r.bounds_ok for r in rows)

    def test_f_new_sweep_rebuilds_policy(self):
        params = make_params(n=3, q=1.0)
        factory = lambda p: dejmps_policy(p.n, p.new_link)
        rows = sweep(params, factory, "f_new", [0.6, 0.8, 0.99])
        assert all(r.error is None for r in rows)
        # higher fresh fidelity must help the consumed fidelity
        f = [r.avg_consumed_fidelity for r in rows]
        assert f[0] < f[1] < f[2]

    def test_row_level_errors_recorded(self):
        params = make_params(n=2, q=0.0, gamma=0.0)
        rows = sweep(params, identity_policy(2), "p_con", [0.5, 0.0])
        assert rows[0].error is None
        assert rows[1].error is not None  # q=0, p_con=0: occupied time diverges
        assert math.isnan(rows[1].availability)

    def test_unknown_variable_rejected(self):
        with pytest.raises(DomainError):
            sweep(make_params(), identity_policy(2), "volume", [0.1])


class TestEvaluate:
    def test_metrics_bundle_consistent(self):
        params = make_params(n=4, q=0.7)
        pol = concatenated_dejmps_policy(4, params.new_link, 2)
        m = evaluate(params, pol)
        assert m.availability == pytest.approx(
            m.expected_occupied_time
            / (m.expected_generation_time + m.expected_occupied_time),
            abs=1e-14,
        )
        assert 0.0 <= m.availability <= 1.0
        assert 0.25 <= m.avg_consumed_fidelity <= 1.0

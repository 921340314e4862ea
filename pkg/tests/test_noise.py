import math

import numpy as np
import pytest

from hpea.circuits import optimal_input_amplitudes, optimal_state_vector
from hpea.fock import (
    FockPolynomial,
    ModeRegistry,
    apply_network,
)
from hpea.metrics import fidelity
from hpea.noise import (
    ENTANGLED_PAIR,
    HERALDED,
    NoiseConfig,
    NoiseModelError,
    SpdcSpec,
    epsilon_from_counts,
    hom_bench_coincidence,
    hom_visibility,
    insert_loss,
    insert_mismatch,
    noisy_probe_state,
    polarization_rotation,
    schmidt_rotations,
    spdc_state,
)

OPTIMAL_RHO = None


def optimal_rho():
    global OPTIMAL_RHO
    if OPTIMAL_RHO is None:
        psi = optimal_state_vector()
        OPTIMAL_RHO = np.outer(psi, psi.conj())
    return OPTIMAL_RHO


class TestHom:
    def test_perfect_overlap(self):
        assert hom_visibility(1.0, 1.0) == pytest.approx((0.0, 1.0))

    def test_no_overlap_gives_classical_coincidences(self):
        p, nu = hom_visibility(0.0, 0.7)
        assert p == pytest.approx(0.5)
        assert nu == pytest.approx(0.0)

    def test_intermediate_point(self):
        p, nu = hom_visibility(0.9, 0.9)
        assert p == pytest.approx(0.095)
        assert nu == pytest.approx(0.81)

    def test_range_validation(self):
        with pytest.raises(NoiseModelError):
            hom_visibility(1.2, 0.5)

    def test_brute_force_matches_analytic(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            x1, x2 = rng.uniform(0.0, 1.0, size=2)
            expected, _ = hom_visibility(x1, x2)
            assert hom_bench_coincidence(x1, x2) \
                == pytest.approx(expected, abs=1e-10)


class TestLoss:
    def test_zeta_one_is_identity(self):
        reg = ModeRegistry(("a", "sink"))
        net = insert_loss(reg, "a", "sink", 1.0)
        state = FockPolynomial.from_occupations(reg, {"a": 2})
        out = apply_network(state, net)
        assert out.coefficient({"a": 2}) == pytest.approx(1.0)

    def test_transmitted_amplitude(self):
        reg = ModeRegistry(("a", "sink"))
        net = insert_loss(reg, "a", "sink", 0.13)
        state = FockPolynomial.from_occupations(reg, {"a": 1})
        out = apply_network(state, net)
        assert abs(out.coefficient({"a": 1})) ** 2 == pytest.approx(0.13)

    def test_success_probability_scales_cubed(self):
        _, p0 = noisy_probe_state(NoiseConfig(xi=1.0, zeta=1.0))
        _, p = noisy_probe_state(NoiseConfig(xi=1.0, zeta=0.13))
        assert p / p0 == pytest.approx(0.13 ** 3, rel=1e-9)

    def test_zero_efficiency_kills_success(self):
        _, p = noisy_probe_state(NoiseConfig(xi=1.0, zeta=0.0))
        assert p == 0.0

    def test_state_independent_of_zeta(self):
        rho1, _ = noisy_probe_state(NoiseConfig(xi=0.97, zeta=1.0))
        rho2, _ = noisy_probe_state(NoiseConfig(xi=0.97, zeta=0.13))
        assert np.allclose(rho1, rho2, atol=1e-12)

    def test_explicit_rail_loss_matches_factored_rate(self):
        rho1, p1 = noisy_probe_state(NoiseConfig(xi=0.96, zeta=0.13))
        rho2, p2 = noisy_probe_state(NoiseConfig(xi=0.96, zeta=0.13),
                                     explicit_rail_loss=True)
        assert np.allclose(rho1, rho2, atol=1e-12)
        assert p1 == pytest.approx(p2, rel=1e-9)


class TestMismatch:
    def test_perfect_overlap_reduces_to_ideal(self):
        rho, p = noisy_probe_state(NoiseConfig(xi=1.0, zeta=1.0))
        assert p == pytest.approx(1.0 / 18.0, abs=1e-9)
        assert fidelity(rho, optimal_rho()) == pytest.approx(1.0, abs=1e-9)

    def test_out_of_range_rejected(self):
        with pytest.raises(NoiseModelError):
            NoiseConfig(xi=1.0001)
        reg = ModeRegistry(("a.m", "a.s1"))
        with pytest.raises(NoiseModelError):
            insert_mismatch(reg, ("a",), "s1", -0.1)

    def test_fidelity_decreases_monotonically(self):
        fids = []
        for xi in np.arange(1.0, 0.895, -0.01):
            rho, _ = noisy_probe_state(NoiseConfig(xi=float(xi), zeta=1.0),
                                       mode="mismatch")
            fids.append(fidelity(rho, optimal_rho()))
        assert fids[0] == pytest.approx(1.0, abs=1e-9)
        assert all(a > b for a, b in zip(fids, fids[1:]))

    def test_per_site_override(self):
        rho_u, _ = noisy_probe_state(NoiseConfig(xi=0.95))
        rho_s, _ = noisy_probe_state(
            NoiseConfig(xi={"s1": 0.95, "s2": 0.95, "s3": 0.95, "s4": 0.95}))
        assert np.allclose(rho_u, rho_s, atol=1e-12)

    def test_unknown_site_rejected(self):
        with pytest.raises(NoiseModelError):
            NoiseConfig(xi={"s9": 0.5}).xi_by_site()

    def test_mode_guard(self):
        with pytest.raises(NoiseModelError):
            noisy_probe_state(NoiseConfig(xi=0.9, eps1=0.05, eps2=0.05),
                              mode="mismatch")
        with pytest.raises(NoiseModelError):
            noisy_probe_state(NoiseConfig(xi=0.9, eps1=0.05, eps2=0.05),
                              mode="spdc")


class TestSpdcSources:
    def registry(self):
        return ModeRegistry(("a_H", "b_H", "b_V", "c_V", "c_H", "trig"))

    def test_zero_efficiency_gives_vacuum(self):
        state = spdc_state(SpdcSpec(HERALDED, 0.0), self.registry())
        assert state.terms == {(0,) * 6: pytest.approx(1.0)}

    def test_heralded_second_order_coefficient(self):
        state = spdc_state(SpdcSpec(HERALDED, 0.1), self.registry())
        assert state.coefficient({"a_H": 2, "trig": 2}) \
            == pytest.approx(0.1 ** 2 / 2.0)
        assert state.coefficient({"a_H": 3, "trig": 3}) \
            == pytest.approx(0.1 ** 3 / 6.0)

    def test_pair_source_single_pair_coefficient(self):
        s = 1.0 / math.sqrt(2.0)
        state = spdc_state(SpdcSpec(ENTANGLED_PAIR, 0.1, beta=s, gamma=s),
                           self.registry())
        assert state.coefficient({"b_H": 1, "c_H": 1}) \
            == pytest.approx(0.1 * s)
        assert state.coefficient({"b_V": 1, "c_V": 1}) \
            == pytest.approx(0.1 * s)

    def test_pair_source_pump_normalisation(self):
        with pytest.raises(NoiseModelError):
            SpdcSpec(ENTANGLED_PAIR, 0.1, beta=0.9, gamma=0.9)


class TestSchmidtRotations:
    def test_product_state(self):
        beta, gamma, tb, tc = schmidt_rotations(np.array([1.0, 0, 0, 0]))
        assert abs(beta) == pytest.approx(0.0, abs=1e-12)
        assert abs(gamma) == pytest.approx(1.0)
        for t in (tb, tc):
            assert math.sin(2 * t) == pytest.approx(0.0, abs=1e-9)

    def test_bell_state_is_already_schmidt_form(self):
        s = 1.0 / math.sqrt(2.0)
        beta, gamma, tb, tc = schmidt_rotations(np.array([s, 0, 0, s]))
        assert (beta, gamma) == pytest.approx((s, s))
        assert (tb, tc) == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_round_trip_on_random_targets(self):
        rng = np.random.default_rng(23)
        reg = ModeRegistry(("b_H", "b_V", "c_H", "c_V"))
        for _ in range(50):
            alpha = rng.normal(size=4)
            alpha /= np.linalg.norm(alpha)
            beta, gamma, tb, tc = schmidt_rotations(alpha)
            pair = FockPolynomial(reg, {(1, 0, 1, 0): gamma,
                                        (0, 1, 0, 1): beta})
            pair = apply_network(pair, polarization_rotation(reg, "b_H", "b_V", tb))
            pair = apply_network(pair, polarization_rotation(reg, "c_H", "c_V", tc))
            got = np.array([pair.coefficient({b: 1, c: 1})
                            for b in ("b_H", "b_V") for c in ("c_H", "c_V")])
            assert np.allclose(got, alpha, atol=1e-10)

    def test_optimal_target_round_trip(self):
        alpha = optimal_input_amplitudes()
        beta, gamma, tb, tc = schmidt_rotations(alpha)
        assert beta ** 2 + gamma ** 2 == pytest.approx(1.0)


class TestEpsilonFromCounts:
    def test_reference_operating_point(self):
        eps = epsilon_from_counts(5200.0, 80e6, 0.13, 0.13)
        assert eps == pytest.approx(0.062, abs=5e-4)

    def test_zero_counts(self):
        assert epsilon_from_counts(0.0, 80e6, 0.13, 0.13) == 0.0

    def test_square_root_law(self):
        base = epsilon_from_counts(1000.0, 80e6, 0.13, 0.13)
        assert epsilon_from_counts(4000.0, 80e6, 0.13, 0.13) \
            == pytest.approx(2.0 * base)

    def test_invalid_denominator(self):
        with pytest.raises(NoiseModelError):
            epsilon_from_counts(100.0, 0.0, 0.13, 0.13)
        with pytest.raises(NoiseModelError):
            epsilon_from_counts(100.0, 80e6, 0.0, 0.13)


class TestSpdcPipeline:
    def test_vanishing_efficiency_limit(self):
        rho, _ = noisy_probe_state(
            NoiseConfig(zeta=0.13, eps1=1e-4, eps2=1e-4), mode="spdc")
        assert fidelity(rho, optimal_rho()) == pytest.approx(1.0, abs=1e-6)

    def test_kept_amplitude_sectors(self):
        # The source polynomial holds the four fourfold-capable sectors
        # only: trigger photons p and pair emissions q with
        # (p, q) in {(1,1), (2,1), (1,2), (3,0)}.
        from hpea.noise import _source_polynomial

        reg = ModeRegistry(tuple(f"{p}.m" for p in
                                 ("v_a", "a_V", "a_H", "b_H", "b_V",
                                  "c_V", "c_H", "v_c")) + ("trig",))
        cfg = NoiseConfig(zeta=0.13, eps1=0.07, eps2=0.06)
        state = _source_polynomial(cfg, reg, ("m",), 6, None)
        ti = reg.index("trig")
        bc = reg.indices(("b_H.m", "b_V.m", "c_H.m", "c_V.m"))
        seen = set()
        for occ in state.terms:
            seen.add((occ[ti], sum(occ[i] for i in bc) // 2))
        assert seen == {(1, 1), (2, 1), (1, 2), (3, 0)}

    def test_mixedness_grows_with_eps1(self):
        f_prev = 1.0
        for e1 in (0.05, 0.075, 0.10):
            rho, _ = noisy_probe_state(
                NoiseConfig(zeta=0.13, eps1=e1, eps2=0.05), mode="spdc")
            f = fidelity(rho, optimal_rho())
            assert f < f_prev
            f_prev = f

    def test_state_is_valid_density_matrix(self):
        rho, p = noisy_probe_state(
            NoiseConfig(zeta=0.13, eps1=0.08, eps2=0.08), mode="spdc")
        assert np.trace(rho).real == pytest.approx(1.0)
        assert np.linalg.eigvalsh(rho).min() > -1e-12
        assert 0.0 < p < 1.0

    def test_combined_mode_runs(self):
        rho, p = noisy_probe_state(
            NoiseConfig(xi={"s4": 0.97}, zeta=0.13, eps1=0.05, eps2=0.05))
        assert np.trace(rho).real == pytest.approx(1.0)
        assert np.linalg.eigvalsh(rho).min() > -1e-9
        f_combined = fidelity(rho, optimal_rho())
        rho_s, _ = noisy_probe_state(
            NoiseConfig(zeta=0.13, eps1=0.05, eps2=0.05), mode="spdc")
        assert f_combined < fidelity(rho_s, optimal_rho())

"""Preparations, phase-control detection, and the two-sided witness protocol."""

import numpy as np
import pytest

from wfpc.linalg import SpaceLayout, kron, max_norm
from wfpc.models import (
    as_state,
    block_report,
    build_h0_commuting,
    build_h0_noncommuting,
    build_witness_state,
    classical_correlated_state,
    coherent_product_state,
    diag_excited_state,
    gibbs_state,
    thermal_env_density,
)
from wfpc.dynamics import TimeGrid
from wfpc.pulses import gaussian_pulse, build_family, phase_family
from wfpc.witness import (
    ProtocolThresholds,
    ZeroProbabilityError,
    check_nogo_conditions,
    detect_wfpc,
    mpp_two_copy_oracle,
    prep_marginal_preserving,
    prep_projective,
    prep_rotate,
    prep_throw_replace,
    rotated_marginal_witness,
    run_witness_protocol,
    scaling_diagnostic,
)

LAYOUT = SpaceLayout(1, 1, (4,))


@pytest.fixture(scope="module")
def model():
    return build_h0_commuting(1.0, [0.8], 0.4, LAYOUT)


@pytest.fixture(scope="module")
def correlated():
    return build_witness_state(LAYOUT, True, True, seed=3)


def small_family(weak_scale=1e-4, counts=(3, 3, 2)):
    base = gaussian_pulse(1.0, 1.0, 41, 0.25, weak_scale=weak_scale, delay=14.0)
    return build_family(
        base,
        [
            {"kind": "constant", "count": counts[0]},
            {"kind": "linear", "count": counts[1], "tau_range": (-2.0, 2.0)},
            {"kind": "chirp", "count": counts[2], "c2_range": (-4.0, 4.0)},
        ],
    )


GRID = TimeGrid(0.0, 36.0, 500)


class TestThrowReplace:
    def test_product_fixed_point(self, correlated):
        rho0 = np.diag([0.7, 0.3]).astype(complex)
        tau = thermal_env_density(LAYOUT, [0.8], 1.0)
        product = as_state(kron(rho0, tau), LAYOUT)
        out = prep_throw_replace(product, rho0)
        assert max_norm(out.mat - product.mat) <= 1e-13

    def test_decorrelates_and_keeps_environment(self, correlated):
        rho0 = np.diag([0.7, 0.3]).astype(complex)
        out = prep_throw_replace(correlated, rho0)
        assert max_norm(out.chi) <= 1e-13
        np.testing.assert_allclose(out.tau, correlated.tau, atol=1e-13)
        np.testing.assert_allclose(out.rho, rho0, atol=1e-13)


class TestMarginalPreserving:
    def test_product_fixed_point(self):
        state = coherent_product_state(LAYOUT, 0.6)
        out = prep_marginal_preserving(state)
        assert max_norm(out.mat - state.mat) <= 1e-13

    def test_idempotent_and_marginal_preserving(self, correlated):
        once = prep_marginal_preserving(correlated)
        twice = prep_marginal_preserving(once)
        assert max_norm(once.mat - twice.mat) <= 1e-13
        np.testing.assert_allclose(once.rho, correlated.rho, atol=1e-13)
        np.testing.assert_allclose(once.tau, correlated.tau, atol=1e-13)
        assert max_norm(once.chi) <= 1e-13

    def test_gibbs_marginals_preserved(self):
        model = build_h0_noncommuting(1.0, [0.8], 0.3, LAYOUT)
        state = gibbs_state(model, 1.0)
        out = prep_marginal_preserving(state)
        np.testing.assert_allclose(out.rho, state.rho, atol=1e-13)
        np.testing.assert_allclose(out.tau, state.tau, atol=1e-13)
        assert max_norm(out.chi) <= 1e-13

    def test_two_copy_swap_oracle_agrees(self):
        layout = SpaceLayout(1, 1, (2,))
        state = build_witness_state(layout, True, True, seed=11)
        direct = prep_marginal_preserving(state).mat
        swapped = mpp_two_copy_oracle(state)
        assert max_norm(direct - swapped) <= 1e-12


class TestProjective:
    def test_product_input_gives_same_environment_for_all_outcomes(self):
        state = coherent_product_state(LAYOUT, 0.6)
        for psi in (np.array([1, 0]), np.array([0, 1]), np.array([1, 1]) / np.sqrt(2)):
            out = prep_projective(state, psi)
            np.testing.assert_allclose(out.tau, state.tau, atol=1e-12)

    def test_classical_correlations_select_conditional_environment(self):
        tau_g = thermal_env_density(LAYOUT, [0.8], 2.0)
        tau_e = thermal_env_density(LAYOUT, [0.8], 0.4)
        state = classical_correlated_state(LAYOUT, tau_g, tau_e)
        out = prep_projective(state, np.array([1, 0]))
        np.testing.assert_allclose(out.tau, tau_g, atol=1e-12)

    def test_schmidt_structure(self):
        # (|g,0> + |e,1>)/sqrt 2 conditioned on |g> leaves the vacuum
        layout = SpaceLayout(1, 1, (2,))
        psi = np.zeros(4, dtype=complex)
        psi[0] = psi[3] = 1 / np.sqrt(2)
        state = as_state(np.outer(psi, psi.conj()), layout)
        out = prep_projective(state, np.array([1, 0]))
        np.testing.assert_allclose(out.tau, np.diag([1.0, 0.0]), atol=1e-12)

    def test_zero_probability_rejected(self):
        state = diag_excited_state(LAYOUT)
        with pytest.raises(ZeroProbabilityError):
            prep_projective(state, np.array([1, 0]))


class TestRotate:
    def test_identity(self, correlated):
        out = prep_rotate(correlated, np.eye(2))
        assert max_norm(out.mat - correlated.mat) <= 1e-14

    def test_hadamard_creates_coherence(self):
        tau = thermal_env_density(LAYOUT, [0.8], 1.0)
        gg = np.diag([1.0, 0.0]).astype(complex)
        state = as_state(kron(gg, tau), LAYOUT)
        h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
        out = prep_rotate(state, h)
        assert abs(out.rho[0, 1]) == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(out.tau, state.tau, atol=1e-13)

    def test_rejects_non_unitary(self, correlated):
        with pytest.raises(ValueError, match="unitar"):
            prep_rotate(correlated, np.array([[1, 0], [0, 0.5]], dtype=complex))


class TestDetect:
    def test_family_too_small(self, model, correlated):
        fam = small_family()[:1]
        with pytest.raises(ValueError, match="two masks"):
            detect_wfpc(model, correlated, fam, GRID)

    def test_amplitude_mismatch_rejected(self, model, correlated):
        import dataclasses

        fam = small_family()
        fam[1] = dataclasses.replace(fam[1], amplitude=fam[1].amplitude * 1.01)
        with pytest.raises(ValueError, match="amplitude"):
            detect_wfpc(model, correlated, fam, GRID)

    def test_constant_family_second_order_is_phase_blind(self, model):
        # global phases only: any contrast isolates the coherence term, so a
        # block-diagonal state shows none
        state = gibbs_state(model, 1.0)
        base = gaussian_pulse(1.0, 1.0, 41, 0.25, weak_scale=1e-3, delay=14.0)
        fam = phase_family(base, "constant", 4)
        rep = detect_wfpc(
            model, state, fam, GRID, method="pert2", check_scaling=False
        )
        assert rep.contrast <= 1e-9
        assert not rep.detected

    def test_detects_marginal_coherence(self, model):
        state = coherent_product_state(LAYOUT, np.pi / 4)
        rep = detect_wfpc(
            model, state, small_family(), GRID, stepper="yoshida4", check_scaling=False
        )
        assert rep.detected
        assert rep.contrast > 1e-6

    def test_workers_do_not_change_results(self, model):
        state = coherent_product_state(LAYOUT, np.pi / 4)
        fam = small_family()
        a = detect_wfpc(model, state, fam, GRID, check_scaling=False, workers=1)
        b = detect_wfpc(model, state, fam, GRID, check_scaling=False, workers=2)
        np.testing.assert_array_equal(a.profile, b.profile)


class TestScalingDiagnostic:
    def test_first_order_dominated_ratio_near_two(self, model):
        state = coherent_product_state(LAYOUT, np.pi / 4)
        pulse = small_family()[1]
        ratio, ok = scaling_diagnostic(model, state, pulse, GRID)
        assert ok
        assert ratio == pytest.approx(2.0, abs=0.2)

    def test_second_order_dominated_ratio_near_four(self, model):
        state = diag_excited_state(LAYOUT)
        pulse = small_family(weak_scale=1e-3)[0]
        ratio, ok = scaling_diagnostic(model, state, pulse, GRID)
        assert ok
        assert ratio == pytest.approx(4.0, abs=0.2)

    def test_strong_field_leaves_windows(self, model):
        state = gibbs_state(model, 1.0)
        pulse = small_family(weak_scale=0.8)[0]
        ratio, ok = scaling_diagnostic(model, state, pulse, GRID)
        assert not ok


class TestNogoConditions:
    def test_commuting_gibbs_passes(self, model):
        state = gibbs_state(model, 1.0)
        rep = check_nogo_conditions(model, state, None, GRID)
        assert rep.cond2_pass and rep.cond3_pass

    def test_noncommuting_fails_condition_two(self):
        model = build_h0_noncommuting(1.0, [0.8], 0.3, LAYOUT)
        state = gibbs_state(model, 1.0)
        rep = check_nogo_conditions(model, state, None, GRID)
        assert not rep.cond2_pass
        assert rep.cond3_pass  # thermal states always commute with their H0

    def test_displaced_state_fails_condition_three(self, model):
        state = coherent_product_state(LAYOUT, np.pi / 4)
        rep = check_nogo_conditions(model, state, None, GRID)
        assert rep.cond2_pass
        assert not rep.cond3_pass


class TestProtocol:
    def test_chi_only_quadrant(self, model):
        state = build_witness_state(LAYOUT, False, True, seed=7)
        verdict = run_witness_protocol(
            model, state, small_family(), GRID, check_scaling=False, workers=2
        )
        assert verdict.quadrant == "ChiOnly"
        assert verdict.report_before.detected
        assert not verdict.report_after.detected
        assert not verdict.caveat_condition2

    def test_no_offdiag_notes_preserve_asymmetry(self, model):
        state = build_witness_state(LAYOUT, False, False, seed=7)
        verdict = run_witness_protocol(
            model, state, small_family(), GRID, check_scaling=False, workers=2
        )
        assert verdict.quadrant == "NoOffdiag"
        assert "witnessed" in verdict.notes
        assert "absent" in verdict.notes or "absence" in verdict.notes

    def test_caveat_flag_for_noncommuting_model(self):
        model = build_h0_noncommuting(1.0, [0.8], 0.3, LAYOUT)
        state = gibbs_state(model, 1.0)
        verdict = run_witness_protocol(
            model, state, small_family(weak_scale=3e-3), GRID,
            check_scaling=False, workers=2,
        )
        assert verdict.caveat_condition2
        assert "tomography" not in verdict.notes  # out of scope, not suggested

    def test_deterministic(self, model):
        state = build_witness_state(LAYOUT, False, True, seed=7)
        a = run_witness_protocol(model, state, small_family(), GRID, check_scaling=False)
        b = run_witness_protocol(model, state, small_family(), GRID, check_scaling=False)
        assert a.quadrant == b.quadrant
        np.testing.assert_array_equal(a.report_before.profile, b.report_before.profile)
        assert a.profile_distance == b.profile_distance


class TestRotatedMarginalWitness:
    HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    PSIS = (np.array([1, 0]), np.array([0, 1]))

    def test_product_input_shows_equal_contrasts(self, model):
        tau = thermal_env_density(LAYOUT, [0.8], 1.0)
        state = as_state(kron(np.diag([0.6, 0.4]).astype(complex), tau), LAYOUT)
        rep = rotated_marginal_witness(
            model, state, self.PSIS, self.HAD, small_family(), GRID, workers=2
        )
        assert not rep.environments_differ
        assert not rep.correlations_witnessed
        assert abs(rep.contrasts[0] - rep.contrasts[1]) <= 1e-9

    def test_classical_correlations_witnessed(self, model):
        tau_g = thermal_env_density(LAYOUT, [0.8], 2.0)
        tau_e = thermal_env_density(LAYOUT, [0.8], 0.4)
        state = classical_correlated_state(LAYOUT, tau_g, tau_e)
        rep = rotated_marginal_witness(
            model, state, self.PSIS, self.HAD, small_family(), GRID, workers=2
        )
        assert rep.environments_differ
        assert rep.correlations_witnessed
        assert abs(rep.contrasts[0] - rep.contrasts[1]) > 1e-6

    def test_no_rotation_means_no_first_order_control(self, model):
        tau_g = thermal_env_density(LAYOUT, [0.8], 2.0)
        tau_e = thermal_env_density(LAYOUT, [0.8], 0.4)
        state = classical_correlated_state(LAYOUT, tau_g, tau_e)
        rep = rotated_marginal_witness(
            model, state, self.PSIS, np.eye(2), small_family(), GRID, workers=2
        )
        # projective outputs are block diagonal; without L there is no
        # coherence to drive first-order control
        assert max(rep.contrasts) <= 1e-9

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from artifact import channels as ch
from artifact import states as st
from artifact.fock import (DensityOperator, FockSpace, StateVector, annihilation_matrix, basis_state, embed_tensor,
                           fidelity, ladder, partial_trace)

HALF = ch.BeamsplitterSpec.from_mu_lambda(np.sqrt(0.5), np.sqrt(0.5))


def random_density(space, rng):
    g = rng.normal(size=(space.dim, space.dim)) + 1j * rng.normal(size=(space.dim, space.dim))
    m = g @ g.conj().T
    return DensityOperator(space, m / np.trace(m).real)


class TestBeamsplitter:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ch.BeamsplitterSpec.from_mu_lambda(0.8, 0.8)
        with pytest.raises(ValueError):
            ch.BeamsplitterSpec(np.array([[1, 1], [0, 1]]))

    def test_hong_ou_mandel(self):
        sp = FockSpace(2, 2)
        out = ch.beamsplit(basis_state(sp, (1, 1)), (0, 1), HALF)
        amp = out.amplitudes
        assert abs(amp[sp.index((1, 1))]) < 1e-12
        assert abs(amp[sp.index((2, 0))]) ** 2 == pytest.approx(0.5)
        assert abs(amp[sp.index((0, 2))]) ** 2 == pytest.approx(0.5)

    def test_identity(self):
        rng = np.random.default_rng(0)
        rho = random_density(FockSpace(2, 2), rng)
        out = ch.beamsplit(rho, (0, 1), ch.IDENTITY_SPLITTER)
        assert np.allclose(out.matrix, rho.matrix)

    def test_coherent_pair_through_modulator(self):
        alphas = np.array([0.4 + 0.2j, -0.3j])
        sp = FockSpace(2, 12)
        out = ch.beamsplit(st.coherent(alphas, sp), (0, 1), ch.EOM_SPLITTER)
        expect = st.coherent(ch.EOM_SPLITTER.U @ alphas, sp)
        assert fidelity(out, expect) > 1 - 1e-9

    def test_norm_preserved(self):
        rho = random_density(FockSpace(3, 2), np.random.default_rng(1))
        # photons beyond the cutoff would leak; keep the state inside by using a cutoff covering the total
        out = ch.beamsplit(ch.beamsplit(rho, (0, 2), HALF), (0, 2), HALF.inverse())
        assert np.allclose(out.matrix, rho.matrix, atol=1e-10) or out.conditional

    def test_same_mode(self):
        with pytest.raises(ValueError):
            ch.beamsplit(st.tmsv(0.1), (1, 1), HALF)


class TestLoss:
    def test_single_photon(self):
        eta = 0.3
        out = ch.loss(st.fock(1, FockSpace(1, 3)), 0, eta)
        assert np.allclose(out.matrix, np.diag([1 - eta, eta, 0, 0]))

    def test_unit_transmission(self):
        rho = random_density(FockSpace(1, 4), np.random.default_rng(2))
        assert np.allclose(ch.loss(rho, 0, 1.0).matrix, rho.matrix)

    @pytest.mark.parametrize("eta", [0.0, 0.2, 0.7, 1.0])
    def test_kraus_complete(self, eta):
        ks = ch.loss_kraus(eta, 6)
        assert np.allclose(sum(K.conj().T @ K for K in ks), np.eye(7), atol=1e-10)

    @settings(max_examples=15, deadline=None)
    @given(hst.integers(0, 2 ** 32 - 1), hst.floats(0.0, 1.0), hst.sampled_from([0, 1]))
    def test_matches_dilation(self, seed, eta, mode):
        rho = random_density(FockSpace(2, 2), np.random.default_rng(seed))
        assert np.allclose(ch.loss(rho, mode, eta).matrix, ch.loss_by_dilation(rho, mode, eta).matrix, atol=1e-10)

    @staticmethod
    def _low_block(zeta, T1, T2):
        rho = ch.loss(ch.loss(st.tmsv(zeta, FockSpace(2, 6)), 0, T1), 1, T2)
        idx = [rho.space.index(o) for o in FockSpace(2, 1).basis()]
        return rho.matrix[np.ix_(idx, idx)]

    @pytest.mark.parametrize("T1,T2", [(1.0, 1.0), (1.0, 0.5), (0.7, 0.9), (1.0, 0.05), (0.6, 0.6)])
    def test_weak_tmsv_coefficients(self, T1, T2):
        zeta = 0.05
        approx = st.attenuated_tms_weak(zeta, st.LossSpec.from_power(T1, T2), FockSpace(2, 1)).matrix
        assert np.max(np.abs(self._low_block(zeta, T1, T2) - approx)) < 1e-3

    @pytest.mark.parametrize("T1,T2", [(0.3, 0.3), (0.55, 0.55), (1.0, 0.05)])
    def test_complete_second_order_form(self, T1, T2):
        # every loss branch at order zeta^2: one photon survives with the partner's transmission,
        # both lost returns to vacuum
        zeta = 0.05
        R1, R2 = 1 - T1, 1 - T2
        sp = FockSpace(2, 1)
        psi = np.zeros(4)
        psi[sp.index((0, 0))], psi[sp.index((1, 1))] = 1, zeta * np.sqrt(T1 * T2)
        m = np.outer(psi, psi)
        m[0, 0] += zeta ** 2 * R1 * R2
        m[sp.index((0, 1)), sp.index((0, 1))] = zeta ** 2 * R1 * T2
        m[sp.index((1, 0)), sp.index((1, 0))] = zeta ** 2 * T1 * R2
        m /= np.trace(m)
        assert np.max(np.abs(self._low_block(zeta, T1, T2) - m)) < 1e-4


class TestDetector:
    def test_perfect(self):
        on, off = ch.spcm_povm(ch.DetectorModel(1.0, 0.0), FockSpace(1, 3))
        assert np.allclose(on.matrix, np.diag([0, 1, 1, 1]))

    @pytest.mark.parametrize("eta", [0.1, 0.5, 0.9])
    def test_two_photon_click(self, eta):
        on, _ = ch.spcm_povm(ch.DetectorModel(eta), FockSpace(1, 3))
        assert on.matrix[2, 2].real == pytest.approx(2 * eta - eta ** 2)

    def test_background(self):
        on, off = ch.spcm_povm(ch.DetectorModel(0.5, 0.05), FockSpace(1, 2))
        assert np.allclose(on.matrix + off.matrix, np.eye(3))
        assert off.matrix[0, 0].real == pytest.approx(0.95)

    @pytest.mark.parametrize("kw", [dict(eta=1.2), dict(eta=0.5, bg_ratio=1.0)])
    def test_ranges(self, kw):
        with pytest.raises(ValueError):
            ch.DetectorModel(**kw)


class TestSubtraction:
    def test_ideal_limit_on_one_photon(self):
        res = ch.subtract_photon(st.fock(1, FockSpace(1, 2)), 0, 0.999)
        assert res.state.population(0) == pytest.approx(1.0)

    def test_outcomes_sum_to_one(self):
        rng = np.random.default_rng(3)
        for det in (ch.DetectorModel(), ch.DetectorModel(0.4, 0.1)):
            res = ch.subtract_photon(random_density(FockSpace(2, 2), rng), 1, 0.8, det)
            assert sum(o.probability for o in res.outcomes()) == pytest.approx(1, abs=1e-9)

    def test_rejects_tap(self):
        with pytest.raises(ValueError):
            ch.subtract_photon(st.fock(1), 0, 1.0)

    def test_branch_not_renormalized_on_read(self):
        res = ch.subtract_photon(st.fock(1, FockSpace(1, 2)), 0, 0.9)
        _ = res.state
        assert np.trace(res.output.matrix).real == pytest.approx(res.probability)

    def test_coherent_transparency(self):
        alpha, t = 0.8 + 0.3j, 0.9
        sp = FockSpace(1, 14)
        res = ch.subtract_photon(st.coherent(alpha, sp), 0, t)
        assert fidelity(res.state, st.coherent(alpha * t, sp)) > 1 - 1e-9
        assert res.probability == pytest.approx(1 - np.exp(-abs(alpha) ** 2 * (1 - t * t)), rel=1e-8)

    def test_delocalized_coherent_transparency(self):
        alpha, t = 0.6, 0.95
        sp = FockSpace(2, 12)
        split = ch.beamsplit(st.coherent([alpha, 0], sp), (0, 1), HALF)
        res = ch.subtract_photon(split, 0, t)
        back = ch.beamsplit(res.state, (0, 1), HALF.inverse())
        # the arm-A tap attenuates by t; the recombined state is the untapped coherent state reshaped by it
        expect = ch.beamsplit(ch.beamsplit(st.coherent([alpha, 0], sp), (0, 1), HALF), (0, 1), HALF.inverse())
        expect_amp = HALF.inverse().U @ (np.diag([t, 1]) @ (HALF.U @ np.array([alpha, 0])))
        assert fidelity(back, st.coherent(expect_amp, sp)) > 1 - 1e-9
        assert fidelity(expect, st.coherent([alpha, 0], sp)) > 1 - 1e-9


def _subtract_and_recombine(psi, split, times=1, t=1e-6):
    spec = ch.BeamsplitterSpec.from_mu_lambda(np.sqrt(split), np.sqrt(1 - split))
    state = psi
    for _ in range(times):
        state = ch.subtract_photon(state, 0, np.sqrt(1 - t * t)).state
    return ch.beamsplit(state, (0, 1), spec.inverse())


class TestVampire:
    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("split", [0.25, 0.5, 0.75])
    def test_ideal_action(self, n, split):
        out = _subtract_and_recombine(ch.delocalized_fock(n, split), split)
        assert out.population(n - 1, 0) >= 1 - 1e-9

    def test_repeated_subtraction(self):
        out = _subtract_and_recombine(ch.delocalized_fock(3, 0.4), 0.4, times=2)
        assert out.population(1, 0) >= 1 - 1e-9

    def test_dephased_fock_mixture(self):
        # zero-discord input: a Fock-diagonal mode state spread over two arms
        p = np.array([0.0, 0.5, 0.3, 0.2])
        sp = FockSpace(2, 3)
        spec = ch.BeamsplitterSpec.from_mu_lambda(np.sqrt(0.3), np.sqrt(0.7))
        rho = sum(pk * ch.beamsplit(basis_state(sp, (k, 0)), (0, 1), spec).density().matrix for k, pk in enumerate(p))
        res = ch.subtract_photon(DensityOperator(sp, rho), 0, np.sqrt(1 - 1e-12))
        out = ch.beamsplit(res.state, (0, 1), spec.inverse())
        a = annihilation_matrix(3)
        target = a @ np.diag(p) @ a.T
        target /= np.trace(target)
        assert fidelity(partial_trace(out, [0]), DensityOperator(FockSpace(1, 3), target)) > 1 - 1e-9
        assert partial_trace(out, [1]).population(0) > 1 - 1e-9

    def test_naive_prediction(self):
        assert np.allclose(ch.naive_local_prediction(1).diagonal(), [3 / 4, 1 / 4])
        assert np.allclose(ch.naive_local_prediction(2).diagonal(), [9 / 16, 3 / 8, 1 / 16])
        assert ch.naive_local_prediction(0).population(0) == pytest.approx(1)

    def test_working_point(self):
        assert ch.vampire_fidelity(2, 0.06, 0.05) == pytest.approx(0.96, abs=0.01)
        assert ch.vampire_fidelity(2, 0.07, 0.05) == pytest.approx(0.965, abs=0.005)

    def test_map_matches_pointwise(self):
        taps, bgs = [0.03, 0.06, 0.1], [0.0, 0.05]
        m = ch.vampire_fidelity_map(2, taps, bgs)
        for i, t in enumerate(taps):
            for j, b in enumerate(bgs):
                assert m[i, j] == pytest.approx(ch.vampire_fidelity(2, t, b))

    def test_unsupported(self):
        with pytest.raises(ValueError):
            ch.vampire_fidelity(3, 0.06, 0.05)


class TestNoSignalling:
    def test_single_photon(self):
        sp = FockSpace(2, 1)
        psi = StateVector(sp, (basis_state(sp, (1, 0)).amplitudes + basis_state(sp, (0, 1)).amplitudes) / np.sqrt(2))
        for eta in (0.1, 0.5, 1.0):
            assert ch.no_signalling_mean(psi, ch.DetectorModel(eta)) == pytest.approx(0.5)

    def test_vacuum(self):
        assert ch.no_signalling_mean(basis_state(FockSpace(2, 2), (0, 0))) == pytest.approx(0)

    def test_random_states(self):
        rng = np.random.default_rng(4)
        sp = FockSpace(2, 3)
        nB = ladder(sp, 1, "number").matrix
        for k in range(100):
            rho = random_density(sp, rng)
            det = ch.DetectorModel(rng.uniform(), rng.uniform(0, 0.5))
            direct = np.trace(nB @ rho.matrix).real
            assert abs(ch.no_signalling_mean(rho, det) - direct) < 1e-10


class TestCatalysis:
    def test_small_amplitude_gain(self):
        alpha = 1e-3
        sp = FockSpace(1, 3)
        v = np.zeros(4, complex)
        v[:2] = [1, alpha]
        spec = ch.CatalysisSpec.from_gain(4)
        res = ch.catalysis(StateVector(sp, v / np.linalg.norm(v)), 0, spec)
        rho = res.state.matrix
        ratio = rho[1, 0] / rho[0, 0]
        assert ratio.real == pytest.approx(res.diagnostics["gain"] * alpha, rel=1e-5)
        # nominal 1/tau differs from the exact gain by 2 tau
        assert res.diagnostics["gain"] == pytest.approx(spec.g - 2 * spec.tau)

    def test_outcomes_sum(self):
        res = ch.catalysis(st.tmsv(0.2, FockSpace(2, 9)), 1, ch.CatalysisSpec(0.3), ch.DetectorModel(0.6))
        assert sum(o.probability for o in res.outcomes()) == pytest.approx(1, abs=1e-9)

    def test_unit_gain_limit(self):
        sp = FockSpace(1, 3)
        v = np.array([1, 0.3, 0, 0], complex)
        psi = StateVector(sp, v / np.linalg.norm(v))
        res = ch.catalysis(psi, 0, ch.CatalysisSpec(0.99999))
        assert fidelity(res.state, psi) > 1 - 1e-6

    def test_small_cutoff(self):
        with pytest.raises(ValueError):
            ch.catalysis(st.fock(0, FockSpace(1, 1)), 0, ch.CatalysisSpec(0.5))

    def test_distilled_weak_state(self):
        # |00> + zeta tau1 tau2 |11> on the amplified mode picks up the exact gain at first order
        zeta, T2 = 0.01, 0.05
        loss = st.LossSpec.from_power(1.0, T2)
        small = st.attenuated_tms_weak(zeta, loss, FockSpace(2, 1))
        sp = FockSpace(2, 2)
        big = np.zeros((9, 9), complex)
        idx = [sp.index(o) for o in FockSpace(2, 1).basis()]
        big[np.ix_(idx, idx)] = small.matrix
        spec = ch.CatalysisSpec.from_gain(10)
        res = ch.catalysis(DensityOperator(sp, big), 1, spec)
        out = res.state.matrix
        i00, i11 = sp.index((0, 0)), sp.index((1, 1))
        ratio = out[i11, i00] / out[i00, i00]
        assert ratio.real == pytest.approx(zeta * np.sqrt(T2) * res.diagnostics["gain"], rel=1e-3)


class TestDistill:
    def test_unit_gain_control(self):
        rep = ch.distill(0.16, st.LossSpec.from_power(1, 0.05), None, detection_eff=0.3)
        assert rep.min_variance == pytest.approx(rep.attenuated_min_variance)
        assert rep.success_probability == 1.0

    def test_restores_squeezing(self):
        rep = ch.distill(0.16, st.LossSpec.from_power(1, 0.05), ch.CatalysisSpec.from_gain(8), detection_eff=0.3)
        assert rep.min_variance < rep.attenuated_min_variance
        assert abs(rep.min_variance / rep.input_min_variance - 1) < 0.1
        assert rep.fidelity >= 0.95
        assert rep.log_negativity_after > rep.log_negativity_before


class TestHeralding:
    @pytest.mark.parametrize("eta", [0.2, 0.5, 1.0])
    def test_click_patterns(self, eta):
        p = ch.click_pattern_probabilities(2, eta)
        assert p[1] == pytest.approx(2 * eta - 1.5 * eta ** 2)
        assert p[2] == pytest.approx(eta ** 2 / 2)
        assert sum(p.values()) == pytest.approx(1)

    def test_single_click_limit(self):
        res = ch.herald_fock(1e-4, 1)
        assert res.state.population(1) == pytest.approx(1, abs=1e-7)

    @pytest.mark.parametrize("eta", [0.3, 1.0])
    def test_two_click_admixture(self, eta):
        g = 0.01
        rho = ch.herald_fock(g, 2, ch.DetectorModel(eta)).state
        # |3> enters with squared amplitude gamma^2 relative to |2>
        assert rho.population(3) / rho.population(2) == pytest.approx(g ** 2 * (3 - 1.5 * eta), rel=1e-6)

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            ch.herald_fock(0.6)


class TestRates:
    def test_values(self):
        rep = ch.rates(5e4, 0.12, 76e6, distill=(0.16, 0.05, 10, 0.1))
        assert rep.p1 == pytest.approx(5.48e-3, rel=1e-3)
        assert rep.R2 == pytest.approx(16.4, abs=0.1)
        assert rep.two_click_per_pulse == pytest.approx(2.16e-7, rel=1e-2)
        assert rep.p2 == pytest.approx(1.063e-3, rel=1e-3)
        assert rep.R_dist_quoted == pytest.approx(57.0)

    def test_positive_inputs(self):
        with pytest.raises(ValueError):
            ch.rates(0, 0.1, 1)

import json

import numpy as np
import pytest
from scipy import stats

from artifact import channels as ch
from artifact import homodyne as hd
from artifact import states as st
from artifact.fock import DensityOperator, FockSpace, basis_state, embed_tensor, vacuum

TWELVE = np.linspace(0, np.pi, 12, endpoint=False)


class TestWavefunctions:
    def test_ground_state(self):
        x = np.linspace(-3, 3, 7)
        assert np.allclose(hd.quad_wavefunction(0, x), np.pi ** -0.25 * np.exp(-x ** 2 / 2))

    def test_orthonormal(self):
        g = hd.QuadratureGrid.default(30)
        psi = hd.hermite_functions(30, g.points)
        gram = psi @ psi.T * g.step
        assert np.max(np.abs(gram - np.eye(31))) < 1e-8

    def test_vacuum_variance(self):
        g = hd.QuadratureGrid.default(4)
        x = g.points
        assert np.sum(x ** 2 * hd.quad_wavefunction(0, x) ** 2) * g.step == pytest.approx(0.5, abs=1e-10)

    def test_high_order_finite(self):
        assert np.all(np.isfinite(hd.hermite_functions(200, np.linspace(-25, 25, 11))))

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            hd.QuadratureGrid(1, 0, 0.1)
        with pytest.raises(ValueError):
            hd.QuadratureGrid(0, 1, 0)


class TestPdf:
    @pytest.mark.parametrize("state", [st.coherent(0.7 - 0.4j, FockSpace(1, 8)), st.fock(3, FockSpace(1, 5)),
                                       st.sms_vacuum(0.4, FockSpace(1, 16))])
    def test_normalized(self, state):
        g = hd.QuadratureGrid.default(state.space.cutoff)
        p = hd.pdf(state, [0.3], g)
        assert p.sum() * g.step == pytest.approx(1, abs=1e-6)

    @pytest.mark.parametrize("theta", [0.0, 0.9, 2.5])
    def test_coherent_gaussian(self, theta):
        alpha = 0.9 * np.exp(0.6j)
        sp = FockSpace(1, 20)
        g = hd.QuadratureGrid.default(20)
        p = hd.pdf(st.coherent(alpha, sp), [theta], g)
        mean = np.sqrt(2) * abs(alpha) * np.cos(theta - np.angle(alpha))
        assert np.allclose(p, stats.norm.pdf(g.points, mean, np.sqrt(0.5)), atol=1e-8)

    def test_fock_phase_independent(self):
        psi = st.fock(2, FockSpace(1, 4))
        assert np.allclose(hd.pdf(psi, [0.0]), hd.pdf(psi, [1.3]))

    def test_tmsv_sum_variance_by_integration(self):
        z = 0.3
        psi = st.tmsv(z, FockSpace(2, 14))
        g = hd.QuadratureGrid(-7, 7, 0.05)
        for ts in (0.0, np.pi):
            p = hd.pdf(psi, [ts, 0.0], g)
            x = g.points
            s = (x[:, None] + x[None, :]) / np.sqrt(2)
            w = p * g.step ** 2
            var = np.sum(w * s ** 2) - np.sum(w * s) ** 2
            assert var == pytest.approx(st.tms_variance(z, theta_sum=ts), abs=1e-4)

    def test_coarse_grid_rejected(self):
        with pytest.raises(ValueError):
            hd.pdf(st.fock(4, FockSpace(1, 4)), [0.0], hd.QuadratureGrid(-1, 1, 0.1))

    def test_phase_count(self):
        with pytest.raises(ValueError):
            hd.pdf(st.tmsv(0.1), [0.0])


class TestSampling:
    def test_vacuum(self):
        s = hd.sample(vacuum(FockSpace(1, 2)), [0.0], 100_000, seed=1)
        assert s.values[:, 0].var() == pytest.approx(0.5, abs=0.007)

    def test_standard_error_of_mean(self):
        s = hd.sample(vacuum(FockSpace(1, 2)), [0.0], 40_000, seed=2).values[:, 0]
        means = s.reshape(400, 100).mean(axis=1)
        assert means.std() == pytest.approx(np.sqrt(0.5 / 100), rel=0.1)

    def test_seed_determinism(self):
        psi = st.tmsv(0.2, FockSpace(2, 6))
        a = hd.sample(psi, [0.1, 0.2], 500, seed=7)
        b = hd.sample(psi, [0.1, 0.2], 500, seed=7)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, hd.sample(psi, [0.1, 0.2], 500, seed=8).values)

    def test_count(self):
        with pytest.raises(ValueError):
            hd.sample(vacuum(FockSpace(1, 2)), [0.0], 0)

    def test_records_roundtrip(self, tmp_path):
        s = hd.sample(st.tmsv(0.2, FockSpace(2, 6)), [0.1, 7.0], 20, seed=3, tag="x")
        recs = s.records()
        assert all(0 <= p < 2 * np.pi for r in recs for p in r.phases)
        path = tmp_path / "r.jsonl"
        hd.save_records(recs, path)
        back = hd.load_records(path)
        assert len(back) == 20
        assert np.allclose([r.values for r in back], s.values)

    def test_corrupt_line_reported(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = json.dumps({"values": [0.1], "phases": [0.0], "tag": ""})
        path.write_text(good + "\n" + good + "\n{not json\n")
        with pytest.raises(hd.DatasetError, match=":3"):
            hd.load_records(path)


def _sampled_variances(state, phase_sets, combine, seed, count=100_000):
    out = []
    for k, ph in enumerate(phase_sets):
        s = hd.sample(state, ph, count, seed=seed + k)
        out.append(np.var(combine(s.values), ddof=1))
    return np.array(out)


def _within_3se(sampled, expect, count=100_000):
    se = np.asarray(expect) * np.sqrt(2 / (count - 1))
    return np.all(np.abs(sampled - expect) < 3 * se)


class TestSamplingOracles:
    def test_coherent(self):
        psi = st.coherent(0.8 + 0.3j, FockSpace(1, 12))
        got = _sampled_variances(psi, [[t] for t in TWELVE], lambda v: v[:, 0], 10)
        assert _within_3se(got, np.full(12, 0.5))

    def test_coherent_mean(self):
        alpha = 0.8 + 0.3j
        for k, th in enumerate((0.0, 1.0, 2.0)):
            v = hd.sample(st.coherent(alpha, FockSpace(1, 12)), [th], 100_000, seed=20 + k).values[:, 0]
            expect = np.sqrt(2) * abs(alpha) * np.cos(th - np.angle(alpha))
            assert abs(v.mean() - expect) < 3 * np.sqrt(0.5 / v.size)

    @pytest.mark.parametrize("R", [0.0, 0.4])
    def test_squeezed(self, R):
        z = 0.3
        rho = ch.loss(st.sms_vacuum(z, FockSpace(1, 16)), 0, 1 - R)
        got = _sampled_variances(rho, [[t] for t in TWELVE], lambda v: v[:, 0], 300 + int(100 * R))
        assert _within_3se(got, st.sms_variance(z, R, TWELVE))

    @pytest.mark.parametrize("T1,T2", [(1.0, 1.0), (0.8, 0.5)])
    def test_two_mode(self, T1, T2):
        z = 0.3
        loss = st.LossSpec.from_power(T1, T2)
        rho = ch.loss(ch.loss(st.tmsv(z, FockSpace(2, 10)), 0, T1), 1, T2)
        # a separate fixed seed block per loss setting keeps the two sweeps independent
        got = _sampled_variances(rho, [[t, 0.0] for t in TWELVE],
                                 lambda v: (v[:, 0] + v[:, 1]) / np.sqrt(2), 2000 + int(100 * T2), count=100_000)
        assert _within_3se(got, st.tms_variance(z, loss, TWELVE))

    def test_variance_error_calibrated(self):
        # z-scores of the sampled variance have unit spread, so the 3-SE bands above mean what they say
        psi = st.tmsv(0.3, FockSpace(2, 10))
        e = st.tms_variance(0.3, theta_sum=1.0)
        n = 20_000
        z = [(np.var(hd.sample(psi, [1.0, 0.0], n, seed=7000 + k).values.sum(axis=1) / np.sqrt(2), ddof=1) - e)
             / (e * np.sqrt(2 / (n - 1))) for k in range(60)]
        assert abs(np.mean(z)) < 0.5
        assert 0.75 < np.std(z) < 1.3


class TestProjector:
    def test_vacuum_trace(self):
        sp = FockSpace(1, 4)
        for x in (-1.0, 0.0, 0.7):
            P = hd.projector(x, 0.4, sp)
            assert np.trace(P.matrix @ vacuum(sp).density().matrix).real == pytest.approx(
                hd.quad_wavefunction(0, x) ** 2)

    def test_completeness(self):
        sp = FockSpace(1, 6)
        g = hd.QuadratureGrid.default(6)
        total = sum(hd.projector(x, 0.8, sp).matrix for x in g.points) * g.step
        assert np.max(np.abs(total - np.eye(7))) < 1e-6

    def test_fock_diagonal_phase_free(self):
        sp = FockSpace(1, 3)
        rho = np.diag([0.4, 0.3, 0.2, 0.1])
        a = np.trace(hd.projector(0.5, 0.0, sp).matrix @ rho).real
        b = np.trace(hd.projector(0.5, 2.0, sp).matrix @ rho).real
        assert a == pytest.approx(b)

    def test_chi_square_against_pdf(self):
        psi = st.sms_vacuum(0.4, FockSpace(1, 16))
        theta = 0.7
        draws = hd.sample(psi, [theta], 50_000, seed=5).values[:, 0]
        edges = np.linspace(-3, 3, 31)
        obs, _ = np.histogram(draws, edges)
        fine = hd.QuadratureGrid(-3, 3, 0.001)
        sp = psi.space
        rho = psi.density().matrix
        dens = np.array([np.trace(hd.projector(x, theta, sp).matrix @ rho).real for x in fine.points])
        idx = np.clip(np.digitize(fine.points, edges) - 1, 0, 29)
        prob = np.bincount(idx, weights=dens * fine.step, minlength=30)
        expected = prob / prob.sum() * obs.sum()
        assert stats.chisquare(obs, expected).pvalue > 0.01


class TestTraces:
    def test_clean_roundtrip(self):
        q = np.random.default_rng(0).normal(size=2000)
        batch = hd.synth_traces(q, hd.gaussian_response(3, 12), 0.0, seed=1)
        assert np.max(np.abs(hd.extract_quadratures(batch) - q)) < 1e-9

    def test_vacuum_calibration(self):
        rng = np.random.default_rng(4)
        shape = hd.gaussian_response(3, 12)
        cal = hd.extract_quadratures(hd.synth_traces(rng.normal(scale=0.7, size=20000), shape, 0.05, seed=5))
        stream = hd.extract_quadratures(hd.synth_traces(rng.normal(scale=0.7, size=20000), shape, 0.05, seed=6))
        assert np.var(hd.vacuum_normalize(stream, cal)) == pytest.approx(0.5, rel=0.02)

    def test_window_discovery(self):
        rng = np.random.default_rng(7)
        batch = hd.synth_traces(rng.normal(size=5000), hd.gaussian_response(2, 20), 0.05, seed=8)
        lo, hi = hd.discover_window(batch)
        assert lo <= 20 < hi
        assert hi - lo < 20

    def test_drift_removed(self):
        rng = np.random.default_rng(9)
        q = rng.normal(size=5000)
        batch = hd.synth_traces(q, hd.gaussian_response(3, 12), 0.0, seed=1, drift_amplitude=0.5)
        assert np.std(hd.extract_quadratures(batch) - q) < 0.02

    def test_no_window(self):
        batch = hd.synth_traces(np.zeros(1000), hd.gaussian_response(3, 12), 0.0, seed=1)
        with pytest.raises(ValueError):
            hd.discover_window(batch)

    def test_response_too_wide(self):
        with pytest.raises(ValueError):
            hd.synth_traces(np.zeros(10), hd.gaussian_response(15, 20), 0.0)


class TestCorrelator:
    def test_independent(self):
        rng = np.random.default_rng(0)
        c = hd.correlator(rng.normal(0, np.sqrt(0.5), 100_000), rng.normal(0, np.sqrt(0.5), 100_000), 1000)
        assert np.all(np.abs(c) < 3 / np.sqrt(1000))

    def test_tmsv_sign(self):
        z, n = 0.3, 50_000
        psi = st.tmsv(z, FockSpace(2, 10))
        c0 = hd.correlator(*hd.sample(psi, [0.0, 0.0], n, seed=1).values.T, n)[0]
        cpi = hd.correlator(*hd.sample(psi, [np.pi, 0.0], n, seed=2).values.T, n)[0]
        assert c0 == pytest.approx(np.sinh(2 * z) / 2, abs=0.02)
        assert cpi == pytest.approx(-np.sinh(2 * z) / 2, abs=0.02)

    def test_errors(self):
        with pytest.raises(ValueError):
            hd.correlator(np.zeros(4), np.zeros(5), 2)
        with pytest.raises(ValueError):
            hd.correlator(np.zeros(4), np.zeros(4), 1)


class TestPhaseFit:
    def test_noiseless_linear(self):
        t = np.linspace(0, 1, 400)
        series = 1.3 * np.cos(25.0 * t + 0.4) + 0.2
        m = hd.fit_phase(series, t)
        assert m.y == pytest.approx(25.0, abs=1e-6)
        assert m.z == pytest.approx(0.4, abs=1e-6)
        assert m.amplitude == pytest.approx(1.3, abs=1e-6)

    def test_quadratic_drift(self):
        # signal-to-noise of 5 per point, as for the block covariance in the distillation run
        t = np.linspace(0, 1, 240)
        errs = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            series = 0.05 * np.cos(8.0 * t ** 2 + 18.0 * t + 1.0) + rng.normal(0, 0.01, t.size)
            errs.append(abs(hd.fit_phase(series, t, model="quadratic").x / 8.0 - 1))
        assert np.median(errs) < 0.05
        assert max(errs) < 0.1

    def test_unfittable(self):
        rng = np.random.default_rng(0)
        with pytest.raises(hd.PhaseFitError):
            hd.fit_phase(rng.normal(size=200), np.linspace(0, 1, 200))

    def test_assign_wraps(self):
        m = hd.PhaseModel(0.0, 10.0, 1.0)
        assert np.all((0 <= hd.assign_phase(m, np.linspace(0, 3, 50))) & (hd.assign_phase(m, np.linspace(0, 3, 50)) < 2 * np.pi))

    def test_phase_roundtrip(self):
        # drifting sum phase, block covariance, quadratic fit, reassignment
        rng = np.random.default_rng(11)
        psi = st.tmsv(0.3, FockSpace(2, 10))
        blocks, size = 100, 1000
        t = np.arange(blocks) / blocks
        true = 2 * np.pi * 3 * t + 0.8 * t ** 2 + 0.3
        q = np.vstack([hd.sample(psi, [true[k], 0.0], size, seed=rng).values for k in range(blocks)])
        m = hd.fit_phase(hd.correlator(q[:, 0], q[:, 1], size), t, model="quadratic")
        err = np.angle(np.exp(1j * (hd.assign_phase(m, t) - true)))
        assert np.sqrt(np.mean(err ** 2)) < 0.05

    def test_binning(self):
        rng = np.random.default_rng(0)
        phases = rng.uniform(0, 2 * np.pi, 100_000)
        centers, groups = hd.bin_by_phase(rng.normal(size=phases.size), phases, 10)
        assert len(groups) == 10 and all(9000 < g.size < 11000 for g in groups)


class TestModeMatching:
    def test_identical(self):
        x = np.linspace(-5, 5, 201)
        f = np.exp(-x ** 2)
        assert hd.mode_overlap(f, 2 * f) == pytest.approx(1)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            hd.mode_overlap(np.ones(3), np.ones(4))

    def test_sinc_zero(self):
        assert hd.spectral_visibility(1 / 40, 40) == pytest.approx(0, abs=1e-12)
        assert hd.spectral_visibility(0, 40) == pytest.approx(1)
        with pytest.raises(ValueError):
            hd.spectral_visibility(0.1, 0.5)

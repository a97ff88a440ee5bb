import math

import numpy as np
import pytest

from photonflow._numerics import conv1
from photonflow.fock_oracle import example1 as oracle_example1
from photonflow.fock_oracle import one_particle_rdm
from photonflow.lin_sys import (
    TimeGrid,
    amplifier_params,
    beamsplitter_params,
    build_state_space,
    cavity_params,
    impulse_response,
    suggest_grid,
)
from photonflow.photon_states import (
    correlated_gaussian_2d,
    gaussian_pulse,
    make_factorizable,
    make_unfactorizable,
)
from photonflow.response import (
    default_frequency_grid,
    fock_amplitude_table,
    output_covariance,
    output_intensity,
    output_state_active_unfactorizable,
    output_state_factorizable,
    output_state_passive_unfactorizable,
    pattern_sign,
    project_onto_fock,
    spectral_transfer,
    vacuum_spectral_input,
)
from photonflow.tensor_alg import RaggedPulseMatrix, multimode_convolution_direct

GRID = TimeGrid(-6.0, 6.0, 257)
SQ38 = math.sqrt(3.0 / 8.0)


def balanced_splitter(eta=0.5):
    s = np.array([[np.sqrt(eta), np.sqrt(1 - eta)],
                  [-np.sqrt(1 - eta), np.sqrt(eta)]])
    return build_state_space(beamsplitter_params(s))


def single_photon_state(grid=GRID):
    return make_factorizable(
        RaggedPulseMatrix.from_functions([[gaussian_pulse(0.0, 1.0)]], grid))


def vacuum_state(grid=GRID, m=1):
    slabs = [np.zeros((0, grid.n_points), complex) for _ in range(m)]
    pulses = RaggedPulseMatrix(m=m, ells=(0,) * m, slabs=slabs, grid=grid)
    return make_factorizable(pulses)


class TestSpectralTransfer:
    def test_passive_vacuum_passthrough(self):
        om = np.linspace(-40, 40, 512)
        for kappa in (0.5, 2.0, 8.0):
            ss = build_state_space(cavity_params(kappa))
            out = spectral_transfer(ss, om, vacuum_spectral_input(1, om))
            assert np.abs(out - vacuum_spectral_input(1, om)).max() < 1e-8

    def test_static_congruence(self):
        ss = balanced_splitter(0.3)
        om = np.linspace(-5, 5, 17)
        rng = np.random.default_rng(1)
        r_in = rng.normal(size=(17, 4, 4)) + 1j * rng.normal(size=(17, 4, 4))
        out = spectral_transfer(ss, om, r_in)
        for k in range(17):
            assert np.allclose(out[k], ss.D @ r_in[k] @ ss.D.conj().T)

    def test_amplifier_lower_block_parseval(self):
        kappa, eps = 2.0, 0.4
        ss = build_state_space(amplifier_params(kappa, eps))
        om = np.linspace(-120, 120, 16001)
        out = spectral_transfer(ss, om, vacuum_spectral_input(1, om))
        freq_integral = np.trapezoid(out[:, 1, 1].real, om) / (2 * np.pi)
        ir = impulse_response(ss, suggest_grid(ss, n_points=4096))
        w = np.full(ir.grid.n_points, ir.grid.dt)
        w[0] = w[-1] = ir.grid.dt / 2
        time_integral = np.sum(w * np.abs(ir.smooth_plus[:, 0, 0]) ** 2)
        assert freq_integral == pytest.approx(time_integral, rel=1e-4)


class TestOutputCovariance:
    def test_passive_single_photon_kernel(self):
        kappa = 2.0
        ss = build_state_space(cavity_params(kappa))
        state = single_photon_state()
        ir = impulse_response(ss, suggest_grid(ss, dt=GRID.dt))
        cov = output_covariance(ss, state, ir=ir)
        assert cov.stationary is None
        # eta = g- * xi computed with the plain 1-D convolution
        xi = state.pulses.slabs[0][0]
        eta = conv1(ir.smooth_minus[:, 0, 0], xi, GRID.dt)
        eta[: len(xi)] += xi
        delta = np.zeros((2, 2))
        delta[0, 0] = 1.0
        assert np.allclose(cov.delta_coeff, delta, atol=1e-12)
        for it, ir_ in [(10, 400), (300, 300), (90, 650)]:
            block = cov.smooth_at(it, ir_)
            assert block[0, 0] == pytest.approx(eta[it] * np.conj(eta[ir_]), abs=1e-12)
            assert block[0, 1] == 0.0

    def test_vacuum_through_passive_is_delta_only(self):
        ss = build_state_space(cavity_params(2.0))
        cov = output_covariance(ss, vacuum_state(), ir=impulse_response(ss, suggest_grid(ss, dt=GRID.dt)))
        assert cov.rank == 0 and cov.stationary is None
        delta = np.zeros((2, 2))
        delta[0, 0] = 1.0
        assert np.allclose(cov.delta_coeff, delta, atol=1e-12)

    def test_static_splitter_matches_oracle_moments(self):
        eta = 0.5
        ss = balanced_splitter(eta)
        pulse = gaussian_pulse(0.0, 1.0)
        pulses = RaggedPulseMatrix.from_functions([[pulse, pulse], [pulse, pulse]], GRID)
        state = make_factorizable(pulses)
        cov = output_covariance(ss, state)
        oracle = oracle_example1(eta, "identical")
        rdm = one_particle_rdm(oracle, [(0, 0), (1, 0)])
        xi = pulses.slabs[0][0]
        for it, ir_ in [(10, 40), (80, 80), (128, 30), (200, 199), (5, 250)]:
            block = cov.smooth_at(it, ir_)
            lower = block[2:, 2:]
            expect = np.conj(xi[it]) * xi[ir_] * rdm
            assert np.abs(lower - expect).max() < 1e-8


class TestOutputIntensity:
    def test_single_photon_cavity_conservation(self):
        kappa = 2.0
        ss = build_state_space(cavity_params(kappa))
        grid = TimeGrid(-6.0, 6.0, 513)
        state = single_photon_state(grid)
        ir = impulse_response(ss, suggest_grid(ss, dt=grid.dt))
        times, vals = output_intensity(ss, state, ir=ir)
        xi = state.pulses.slabs[0][0]
        eta = conv1(ir.smooth_minus[:, 0, 0], xi, grid.dt)
        eta[: len(xi)] += xi
        assert np.abs(vals[0] - np.abs(eta) ** 2).max() < 1e-10
        assert np.trapezoid(vals[0], dx=grid.dt) == pytest.approx(1.0, abs=1e-4)

    def test_vacuum_through_passive_is_zero(self):
        ss = build_state_space(cavity_params(1.0))
        _, vals = output_intensity(ss, vacuum_state())
        assert np.abs(vals).max() == 0.0

    def test_vacuum_through_amplifier_constant_floor(self):
        kappa, eps = 2.0, 0.4
        ss = build_state_space(amplifier_params(kappa, eps))
        ir = impulse_response(ss, suggest_grid(ss, dt=GRID.dt))
        _, vals = output_intensity(ss, vacuum_state(), ir=ir)
        w = np.full(ir.grid.n_points, ir.grid.dt)
        w[0] = w[-1] = ir.grid.dt / 2
        floor = np.sum(w * np.abs(ir.smooth_plus[:, 0, 0]) ** 2)
        assert floor > 0
        assert np.abs(vals - floor).max() < 1e-12


class TestOutputStateFactorizable:
    def test_example1_fock_amplitudes(self):
        ss = balanced_splitter(0.5)
        pulse = gaussian_pulse(0.0, 1.0)
        state = make_factorizable(
            RaggedPulseMatrix.from_functions([[pulse, pulse], [pulse, pulse]], GRID))
        rec = output_state_factorizable(ss, state)
        basis = RaggedPulseMatrix.from_functions([[pulse], [pulse]], GRID)
        table = fock_amplitude_table(rec, basis)
        assert table[(4, 0)] == pytest.approx(SQ38, abs=1e-9)
        assert table[(2, 2)] == pytest.approx(-0.5, abs=1e-9)
        assert table[(0, 4)] == pytest.approx(SQ38, abs=1e-9)
        for occ in ((3, 1), (1, 3)):
            assert abs(table[occ]) < 1e-9
        assert sum(abs(a) ** 2 for a in table.values()) == pytest.approx(1.0, abs=1e-6)

    def test_identity_system_returns_input(self):
        ss = build_state_space(beamsplitter_params(np.eye(1)))
        state = single_photon_state()
        rec = output_state_factorizable(ss, state)
        assert np.allclose(rec.eta_minus.slabs[0][0, 0], state.pulses.slabs[0][0])
        assert np.abs(rec.eta_plus.slabs[0]).max() == 0.0

    def test_single_photon_cavity_matches_direct_convolution(self):
        ss = build_state_space(cavity_params(1.5))
        state = single_photon_state()
        ir = impulse_response(ss, suggest_grid(ss, dt=GRID.dt))
        rec = output_state_factorizable(ss, state, ir=ir)
        xi = state.pulses.slabs[0][0]
        eta = conv1(ir.smooth_minus[:, 0, 0], xi, GRID.dt)
        eta[: len(xi)] += xi
        assert np.abs(rec.eta_minus.slabs[0][0, 0] - eta).max() < 1e-12

    def test_passive_purity_and_norm_preservation(self):
        ss = build_state_space(cavity_params(2.0))
        grid = TimeGrid(-8.0, 8.0, 2049)
        pulses = RaggedPulseMatrix.from_functions(
            [[gaussian_pulse(0.0, 1.0), gaussian_pulse(0.8, 0.7)]], grid)
        state = make_factorizable(pulses)
        rec = output_state_factorizable(ss, state)
        assert rec.is_vacuum_gaussian
        assert np.abs(rec.eta_plus.slabs[0]).max() == 0.0
        assert rec.recomputed_norms[0] == pytest.approx(state.norms[0], abs=1e-5)

    def test_active_output_carries_spectral_density(self):
        ss = build_state_space(amplifier_params(2.0, 0.3))
        rec = output_state_factorizable(ss, single_photon_state())
        assert not rec.is_vacuum_gaussian
        sd = rec.gaussian_part
        mid = len(sd.omegas) // 2
        assert sd.values[mid, 1, 1].real > 0


class TestConsistencyTriangle:
    @pytest.mark.parametrize("params", [cavity_params(2.0), amplifier_params(2.0, 0.4)])
    def test_intensity_equals_covariance_diagonal(self, params):
        ss = build_state_space(params)
        pulses = RaggedPulseMatrix.from_functions(
            [[gaussian_pulse(0.0, 1.0), gaussian_pulse(0.6, 0.9)]], GRID)
        state = make_factorizable(pulses)
        ir = impulse_response(ss, suggest_grid(ss, dt=GRID.dt))
        _, vals = output_intensity(ss, state, ir=ir)
        cov = output_covariance(ss, state, ir=ir)
        diag = cov.lower_block_diag_equal_times()
        assert np.abs(vals - diag.real).max() < 1e-10
        assert np.abs(diag.imag).max() < 1e-10


class TestPassiveUnfactorizable:
    def test_cavity_two_photon_matches_quadrature(self):
        grid = TimeGrid(-5.0, 7.0, 96)
        psi = correlated_gaussian_2d((1.0, 1.0), (1.0, 1.0), 0.5)(grid.times, grid.times)
        state = make_unfactorizable([psi], grid)
        ss = build_state_space(cavity_params(2.0))
        ir = impulse_response(ss, suggest_grid(ss, dt=grid.dt))
        rec = output_state_passive_unfactorizable(ss, state, ir=ir)
        direct = multimode_convolution_direct(state.channels[0], ir.minus_kernel())
        num = np.linalg.norm(rec.channels[0].values - direct.values)
        assert num / np.linalg.norm(direct.values) < 1e-6
        assert rec.recomputed_norms[0] == pytest.approx(state.norms[0], rel=2e-3)

    def test_static_identity_unchanged(self):
        grid = TimeGrid(-4.0, 4.0, 49)
        psi = correlated_gaussian_2d((0.0, 0.0), (1.0, 1.0), 0.3)(grid.times, grid.times)
        state = make_unfactorizable([psi], grid)
        ss = build_state_space(beamsplitter_params(np.eye(1)))
        rec = output_state_passive_unfactorizable(ss, state)
        assert np.allclose(rec.channels[0].values, state.channels[0].values)

    def test_active_system_rejected(self):
        grid = TimeGrid(-4.0, 4.0, 49)
        psi = correlated_gaussian_2d((0.0, 0.0), (1.0, 1.0), 0.0)(grid.times, grid.times)
        state = make_unfactorizable([psi], grid)
        ss = build_state_space(amplifier_params(2.0, 0.3))
        with pytest.raises(ValueError, match="active"):
            output_state_passive_unfactorizable(ss, state)


class TestActiveUnfactorizable:
    def test_passive_system_reduces_to_passive_path(self):
        grid = TimeGrid(-5.0, 7.0, 96)
        psi = correlated_gaussian_2d((1.0, 1.0), (1.0, 1.0), -0.3)(grid.times, grid.times)
        state = make_unfactorizable([psi], grid)
        ss = build_state_space(cavity_params(2.0))
        ir = impulse_response(ss, suggest_grid(ss, dt=grid.dt))
        gen = output_state_active_unfactorizable(ss, state, ir=ir)
        passive = output_state_passive_unfactorizable(ss, state, ir=ir)
        pats = gen.channels[0]
        assert np.abs(pats[(1, 1)].tensor.values - passive.channels[0].values).max() < 1e-12
        for f in ((1, -1), (-1, 1), (-1, -1)):
            assert np.abs(pats[f].tensor.values).max() == 0.0
        assert gen.gaussian_part == "vacuum"

    def test_amplifier_single_photon_patterns(self):
        ss = build_state_space(amplifier_params(2.0, 0.4))
        xi = gaussian_pulse(0.0, 1.0)(GRID.times).astype(complex)
        state = make_unfactorizable([xi], GRID)
        ir = impulse_response(ss, suggest_grid(ss, dt=GRID.dt))
        gen = output_state_active_unfactorizable(ss, state, ir=ir)
        fact = make_factorizable(
            RaggedPulseMatrix(m=1, ells=(1,), slabs=[xi[None, :]], grid=GRID))
        rec = output_state_factorizable(ss, fact, ir=ir)
        pats = gen.channels[0]
        assert np.abs(pats[(1,)].tensor.values[0]
                      - rec.eta_minus.slabs[0][0, 0]).max() < 1e-12
        assert np.abs(pats[(-1,)].tensor.values[0]
                      - rec.eta_plus.slabs[0][0, 0].conj()).max() < 1e-12
        assert pats[(1,)].sign == 1 and pats[(-1,)].sign == -1

    def test_amplifier_separable_two_photon_kronecker(self):
        ss = build_state_space(amplifier_params(2.0, 0.4))
        grid = TimeGrid(-5.0, 5.0, 128)
        a = gaussian_pulse(0.0, 1.0)(grid.times).astype(complex)
        b = gaussian_pulse(0.7, 0.8)(grid.times).astype(complex)
        state = make_unfactorizable([np.multiply.outer(a, b)], grid)
        ir = impulse_response(ss, suggest_grid(ss, dt=grid.dt))
        gen = output_state_active_unfactorizable(ss, state, ir=ir)

        def one_d(kind, sig):
            if kind == 1:
                out = conv1(ir.smooth_minus[:, 0, 0], sig, grid.dt)
                out[: len(sig)] += sig
            else:
                out = conv1(ir.smooth_plus[:, 0, 0].conj(), sig, grid.dt)
            return out

        for f in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            expect = np.multiply.outer(one_d(f[0], a), one_d(f[1], b))
            got = gen.channels[0][f].tensor.values[0, 0]
            assert np.abs(got - expect).max() < 1e-8
            assert gen.channels[0][f].sign == pattern_sign(f)

    def test_remark8_product_input_reproduces_eta_tensors(self):
        ss = build_state_space(amplifier_params(2.0, 0.3))
        grid = TimeGrid(-5.0, 5.0, 128)
        a = gaussian_pulse(0.0, 1.0)(grid.times).astype(complex)
        b = gaussian_pulse(0.5, 0.8)(grid.times).astype(complex)
        state = make_unfactorizable([np.multiply.outer(a, b)], grid)
        ir = impulse_response(ss, suggest_grid(ss, dt=grid.dt))
        gen = output_state_active_unfactorizable(ss, state, ir=ir)
        fact = make_factorizable(
            RaggedPulseMatrix(m=1, ells=(2,), slabs=[np.stack([a, b])], grid=grid))
        rec = output_state_factorizable(ss, fact, ir=ir)
        em = rec.eta_minus.slabs[0][0]        # (ell, N)
        ep = rec.eta_plus.slabs[0][0]
        expect_pp = np.multiply.outer(em[0], em[1])
        expect_pm = np.multiply.outer(em[0], ep[1].conj())
        got_pp = gen.channels[0][(1, 1)].tensor.values[0, 0]
        got_pm = gen.channels[0][(1, -1)].tensor.values[0, 0]
        assert np.abs(got_pp - expect_pp).max() < 1e-8
        assert np.abs(got_pm - expect_pm).max() < 1e-8


class TestProjectOntoFock:
    def _example1_record(self, eta=0.5):
        ss = balanced_splitter(eta)
        pulse = gaussian_pulse(0.0, 1.0)
        state = make_factorizable(
            RaggedPulseMatrix.from_functions([[pulse, pulse], [pulse, pulse]], GRID))
        rec = output_state_factorizable(ss, state)
        basis = RaggedPulseMatrix.from_functions([[pulse], [pulse]], GRID)
        return rec, basis

    def test_example1_four_zero(self):
        rec, basis = self._example1_record()
        amp = project_onto_fock(rec, (4, 0), basis)
        assert amp == pytest.approx(SQ38, abs=1e-9)

    def test_wrong_total_rejected(self):
        rec, basis = self._example1_record()
        with pytest.raises(ValueError, match="photons"):
            project_onto_fock(rec, (2, 1), basis)

    def test_hong_ou_mandel_null(self):
        ss = balanced_splitter(0.5)
        pulse = gaussian_pulse(0.0, 1.0)
        state = make_factorizable(
            RaggedPulseMatrix.from_functions([[pulse], [pulse]], GRID))
        rec = output_state_factorizable(ss, state)
        basis = RaggedPulseMatrix.from_functions([[pulse], [pulse]], GRID)
        amp = project_onto_fock(rec, (1, 1), basis)
        assert abs(amp) < 1e-12

    def test_non_orthonormal_basis_rejected(self):
        rec, _ = self._example1_record()
        g = gaussian_pulse(0.0, 1.0)
        g2 = gaussian_pulse(0.1, 1.0)
        bad = RaggedPulseMatrix.from_functions([[g, g2], [g]], GRID)
        with pytest.raises(ValueError, match="orthonormal"):
            project_onto_fock(rec, (2, 1, 1), bad)

    def test_active_output_rejected(self):
        ss = build_state_space(amplifier_params(2.0, 0.3))
        rec = output_state_factorizable(ss, single_photon_state())
        basis = RaggedPulseMatrix.from_functions([[gaussian_pulse(0.0, 1.0)]], GRID)
        with pytest.raises(ValueError, match="vacuum"):
            project_onto_fock(rec, (1,), basis)


class TestCompletenessAndMoments:
    def test_example2_pipeline_completeness(self):
        r, ell = 0.5, 3
        s = np.array([[np.sqrt(1 - r), np.sqrt(r)], [np.sqrt(r), -np.sqrt(1 - r)]])
        ss = build_state_space(beamsplitter_params(s))
        pulse = gaussian_pulse(0.0, 1.0)
        state = make_factorizable(RaggedPulseMatrix.from_functions(
            [[pulse], [pulse] * ell], GRID))
        rec = output_state_factorizable(ss, state)
        basis = RaggedPulseMatrix.from_functions([[pulse], [pulse]], GRID)
        table = fock_amplitude_table(rec, basis)
        assert sum(abs(a) ** 2 for a in table.values()) == pytest.approx(1.0, abs=1e-6)
        closed = math.sqrt(r ** (ell - 1)) * (r - ell * (1 - r))
        assert table[(ell, 1)] == pytest.approx(closed, abs=1e-9)

    def test_static_second_moments_match_oracle(self):
        from photonflow.fock_oracle import photon_numbers

        ss = balanced_splitter(0.5)
        pulse = gaussian_pulse(0.0, 1.0)
        state = make_factorizable(RaggedPulseMatrix.from_functions(
            [[pulse, pulse], [pulse, pulse]], GRID))
        times, vals = output_intensity(ss, state)
        dt = times[1] - times[0]
        integrals = np.array([np.trapezoid(vals[j], dx=dt) for j in range(2)])
        oracle_counts = photon_numbers(oracle_example1(0.5, "identical"), 2)
        assert np.abs(integrals - oracle_counts).max() < 1e-6

    def test_non_vacuum_gaussian_input_stub(self):
        ss = build_state_space(cavity_params(2.0))
        with pytest.raises(NotImplementedError):
            output_state_factorizable(ss, single_photon_state(), input_gaussian="thermal")

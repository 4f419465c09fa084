import numpy as np
import pytest

from phononet.constants import TWO_PI, YB171_MASS
from phononet.crystal import (
    TrapConfig,
    equilibrium_positions,
    lamb_dicke,
    transverse_modes,
)
from phononet.drive import DriveProgram, comb_program, mean_mode_spacing
from phononet.effective import (
    build_effective_model,
    delta_tilde,
    diagonal_compensation,
    error_diagnostics,
    j_matrix,
    k_matrix,
    k_tensor,
)
from phononet.errors import ConfigError, RegimeError


def top_detuned_drive(modes, detuning, amp, ions, duration=1e-3, n_tones=1, spacing=0.0):
    """Single or multi-tone drive referenced to the highest mode."""
    w_top = float(modes.freqs[-1])
    base = w_top - detuning
    tones = base + spacing * np.arange(n_tones)
    amps = np.full((len(ions), n_tones), amp, dtype=complex)
    return DriveProgram.from_angular(tones, amps, ions, duration)


class TestDeltaTilde:
    def test_equal_arguments_give_one(self):
        assert delta_tilde(1234.5, 1234.5, 1e-3) == 1.0 + 0.0j

    def test_zero_at_two_pi(self):
        # (a - b) T = 2 pi puts the sinc at its first zero.
        a, b, t = TWO_PI * 1e3, 0.0, 1e-3
        assert abs(delta_tilde(a, b, t)) < 1e-15

    def test_conjugate_under_swap(self):
        rng = np.random.default_rng(11)
        a = rng.normal(scale=1e5, size=50)
        b = rng.normal(scale=1e5, size=50)
        np.testing.assert_allclose(
            delta_tilde(a, b, 1e-3), np.conj(delta_tilde(b, a, 1e-3)), rtol=1e-14
        )

    def test_magnitude_bound(self):
        # |kernel| <= 2 / (|a - b| T) for all nonzero arguments.
        rng = np.random.default_rng(12)
        a = rng.normal(scale=1e6, size=500)
        b = rng.normal(scale=1e6, size=500)
        t = rng.uniform(1e-4, 5e-3, size=500)
        vals = np.abs(delta_tilde(a, b, t))
        bound = 2.0 / (np.abs(a - b) * t)
        assert np.all(vals <= bound + 1e-15)


class TestJMatrix:
    def test_single_illuminated_ion_diagonal_only(self, modes5):
        d = top_detuned_drive(modes5, TWO_PI * 300e3, TWO_PI * 100e3, [3])
        j = j_matrix(d, modes5)
        off = j.copy()
        off[3, 3] = 0.0
        assert np.max(np.abs(off)) == 0.0
        assert j[3, 3] != 0.0

    def test_real_uniform_amplitudes_real_symmetric(self, modes5):
        d = top_detuned_drive(modes5, TWO_PI * 300e3, TWO_PI * 100e3, [0, 1, 2])
        j = j_matrix(d, modes5)
        assert np.max(np.abs(j.imag)) < 1e-14 * np.max(np.abs(j))
        np.testing.assert_allclose(j, j.T, rtol=1e-12)

    def test_two_ion_hand_summed(self, two_ion):
        _, _, modes = two_ion
        amp = TWO_PI * 80e3
        d = top_detuned_drive(modes, TWO_PI * 60e3, amp, [0, 1])
        j = j_matrix(d, modes)
        eta = modes.lamb_dicke
        nu = d.tones[0]
        expect = sum(
            eta[0, m] * eta[1, m] * amp * amp / (modes.freqs[m] - nu)
            for m in range(2)
        ) / 8.0
        np.testing.assert_allclose(j[0, 1], expect, rtol=1e-12)

    def test_hermitian_for_complex_amplitudes(self, modes5):
        rng = np.random.default_rng(5)
        w_top = float(modes5.freqs[-1])
        tones = w_top - TWO_PI * np.array([250e3, 310e3])[::-1]
        amps = TWO_PI * 1e4 * (rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2)))
        d = DriveProgram.from_angular(np.sort(tones), amps, [0, 2, 4], 1e-3)
        j = j_matrix(d, modes5)
        assert np.max(np.abs(j - j.conj().T)) < 1e-12 * np.max(np.abs(j))


class TestKTensor:
    def test_zero_amplitudes_zero_tensor(self, modes5):
        d = top_detuned_drive(modes5, TWO_PI * 300e3, 0.0, [0, 1])
        assert np.max(np.abs(k_tensor(d, modes5))) == 0.0

    def test_hermitian_slices(self, modes5):
        rng = np.random.default_rng(6)
        w_top = float(modes5.freqs[-1])
        tones = np.sort(w_top - TWO_PI * np.array([350e3, 290e3, 260e3]))
        amps = TWO_PI * 2e4 * (rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3)))
        d = DriveProgram.from_angular(tones, amps, [1, 3], 7e-4)
        t = k_tensor(d, modes5)
        for sl in t:
            assert np.max(np.abs(sl - sl.conj().T)) < 1e-12 * np.max(np.abs(sl))

    def test_single_tone_offdiagonal_kernel_suppression(self, modes40):
        # With one tone no resonant pair exists; every off-diagonal entry is
        # the kernel-free value times sinc((w_k - w_m) T / 2), bounded by
        # 2 / (|w_k - w_m| T).
        T = 1e-3
        d = top_detuned_drive(modes40, TWO_PI * 400e3, TWO_PI * 150e3, [7], duration=T)
        tens = k_tensor(d, modes40)[0]
        eta = modes40.lamb_dicke[7]
        nu = d.tones[0]
        amp = d.amplitudes[0, 0]
        delta = modes40.freqs - nu
        for k, m in [(10, 11), (15, 20), (3, 30)]:
            bare = (
                eta[k] * eta[m] * amp * np.conj(amp)
                * (delta[m] + delta[k]) / (8.0 * delta[k] * delta[m])
            )
            gap = modes40.freqs[m] - modes40.freqs[k]
            assert abs(tens[k, m]) <= 2.0 / (abs(gap) * T) * abs(bare) * (1 + 1e-12)
            ratio = abs(tens[k, m]) / abs(bare)
            x = 0.5 * gap * T
            np.testing.assert_allclose(ratio, abs(np.sin(x) / x), rtol=1e-9)

    def test_two_tone_dominant_pair_approximation(self, two_ion):
        _, _, modes = two_ion
        gap = float(modes.freqs[1] - modes.freqs[0])
        T = 2e-3  # gap * T >> 1 so the resonant pair dominates
        amp = TWO_PI * 15e3
        d = top_detuned_drive(
            modes, TWO_PI * 45e3, amp, [0], duration=T, n_tones=2, spacing=gap
        )
        tens = k_tensor(d, modes)[0]
        eta = modes.lamb_dicke[0]
        delta = modes.freqs[None, :] - d.tones[:, None]
        # Resonant pair for K[1, 0]: tone q=0 on mode 0 matches tone p=1 on
        # mode 1 (both detunings equal by construction).
        d_pk, d_qm = delta[1, 1], delta[0, 0]
        single = eta[1] * eta[0] * amp * amp * (d_qm + d_pk) / (8.0 * d_pk * d_qm)
        assert abs(abs(tens[1, 0]) - abs(single)) < 0.10 * abs(single)

    def test_amplitude_scaling_quadratic(self, modes5):
        d1 = top_detuned_drive(modes5, TWO_PI * 300e3, TWO_PI * 40e3, [0, 2])
        d2 = top_detuned_drive(modes5, TWO_PI * 300e3, TWO_PI * 120e3, [0, 2])
        t1 = k_tensor(d1, modes5)
        t2 = k_tensor(d2, modes5)
        np.testing.assert_allclose(t2, 9.0 * t1, rtol=1e-12)
        np.testing.assert_allclose(
            j_matrix(d2, modes5), 9.0 * j_matrix(d1, modes5), rtol=1e-12
        )


class TestKMatrix:
    def test_all_down_is_plain_sum(self, modes5):
        d = top_detuned_drive(modes5, TWO_PI * 280e3, TWO_PI * 50e3, [0, 3])
        tens = k_tensor(d, modes5)
        np.testing.assert_array_equal(k_matrix(tens), tens[0] + tens[1])
        np.testing.assert_array_equal(
            k_matrix(tens, [-1] * 5, illuminated=[0, 3]), tens[0] + tens[1]
        )

    def test_all_up_flips_sign(self, modes5):
        d = top_detuned_drive(modes5, TWO_PI * 280e3, TWO_PI * 50e3, [0, 3])
        tens = k_tensor(d, modes5)
        np.testing.assert_allclose(
            k_matrix(tens, [1] * 5, illuminated=[0, 3]), -(tens[0] + tens[1])
        )

    def test_spin_config_validation(self, modes5):
        d = top_detuned_drive(modes5, TWO_PI * 280e3, TWO_PI * 50e3, [0, 3])
        tens = k_tensor(d, modes5)
        with pytest.raises(ConfigError):
            k_matrix(tens, [0, 1, 1, 1, 1], illuminated=[0, 3])
        with pytest.raises(ConfigError):
            k_matrix(tens, [1] * 5)  # missing illuminated

    def test_uniform_illumination_diagonal(self, modes40):
        gap = mean_mode_spacing(modes40)
        d = comb_program(
            modes40, "all", 2, gap, TWO_PI * 400e3, TWO_PI * 250e3, duration=1e-3
        )
        k = k_matrix(k_tensor(d, modes40))
        off = k - np.diag(np.diag(k))
        assert np.linalg.norm(off) / np.linalg.norm(np.diag(k)) < 1e-9


class TestKernelDecay:
    def test_offresonant_couplings_decay_with_time(self, modes5):
        # Single tone: no resonant pair exists, so all inter-mode couplings
        # are kernel-suppressed and must fall off roughly as 1/T.
        def off_norm(duration):
            d = top_detuned_drive(
                modes5, TWO_PI * 300e3, TWO_PI * 150e3, [1], duration=duration
            )
            k = k_matrix(k_tensor(d, modes5))
            return np.linalg.norm(k - np.diag(np.diag(k)))

        for t_base in (0.7e-3, 1.0e-3):
            assert off_norm(2 * t_base) <= 0.6 * off_norm(t_base)


class TestPhaseCovariance:
    def test_tone_phase_rotation_structure(self, modes5):
        rng = np.random.default_rng(9)
        w_top = float(modes5.freqs[-1])
        tones = np.sort(w_top - TWO_PI * np.array([320e3, 270e3]))
        amps = TWO_PI * 3e4 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        ions = [1, 4]

        def k_with(phi, col=1):
            a = amps.copy()
            a[:, col] = a[:, col] * np.exp(1j * phi)
            d = DriveProgram.from_angular(tones, a, ions, 1e-3)
            return k_matrix(k_tensor(d, modes5))

        def k_single(col):
            a = amps.copy()
            a[:, 1 - col] = 0.0
            d = DriveProgram.from_angular(tones, a, ions, 1e-3)
            return k_matrix(k_tensor(d, modes5))

        k11, k22 = k_single(0), k_single(1)
        cross_0 = k_with(0.0) - k11 - k22
        cross_90 = k_with(np.pi / 2) - k11 - k22
        c12 = 0.5 * (cross_0 - 1j * cross_90)
        c21 = 0.5 * (cross_0 + 1j * cross_90)
        # Same-tone (p,p) content is untouched by the rotation; the cross
        # terms rotate by e^{+-i phi}.  Predict an arbitrary angle exactly.
        phi = 0.7431
        predicted = k11 + k22 + np.exp(1j * phi) * c12 + np.exp(-1j * phi) * c21
        np.testing.assert_allclose(
            k_with(phi), predicted, atol=1e-12 * np.max(np.abs(predicted))
        )

    def test_j_invariant_under_single_tone_phase(self, modes5):
        rng = np.random.default_rng(10)
        w_top = float(modes5.freqs[-1])
        tones = np.sort(w_top - TWO_PI * np.array([320e3, 270e3]))
        amps = TWO_PI * 3e4 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        d0 = DriveProgram.from_angular(tones, amps, [0, 2], 1e-3)
        rot = amps.copy()
        rot[:, 1] *= np.exp(0.9j)
        d1 = DriveProgram.from_angular(tones, rot, [0, 2], 1e-3)
        np.testing.assert_allclose(
            j_matrix(d0, modes5), j_matrix(d1, modes5), rtol=0, atol=1e-14 * TWO_PI
        )


class TestDiagonalCompensation:
    def test_zero_diagonal_is_identity(self, modes5):
        d = top_detuned_drive(modes5, TWO_PI * 300e3, TWO_PI * 50e3, [0, 1])
        model = build_effective_model(d, modes5)
        stripped = model.k_matrix.copy()
        np.fill_diagonal(stripped, 0.0)
        from dataclasses import replace

        model0 = replace(model, k_matrix=stripped)
        out, drv = diagonal_compensation(model0, d, modes5)
        np.testing.assert_array_equal(out.k_matrix, stripped)
        assert drv.compensation.amplitude_hz == 0.0

    def test_offdiagonal_bit_identical(self, modes40):
        gap = mean_mode_spacing(modes40)
        d = comb_program(
            modes40, [2, 3, 4, 5], 2, gap, TWO_PI * 400e3, TWO_PI * 250e3,
            duration=1e-3,
        )
        model = build_effective_model(d, modes40)
        comp, drv = diagonal_compensation(model, d, modes40)
        off_mask = ~np.eye(modes40.n, dtype=bool)
        assert np.array_equal(comp.k_matrix[off_mask], model.k_matrix[off_mask])
        assert np.all(np.diagonal(comp.k_matrix) == 0.0)
        assert comp.diagonal_compensated
        assert drv.compensation.amplitude_hz > 0

    def test_diagonal_only_populations_unchanged(self, modes5):
        # Uniform illumination gives a diagonal coupling matrix; removing
        # the diagonal changes per-mode phases but no populations.
        from phononet.evolve import mode_unitary

        gap = float(np.mean(np.diff(modes5.freqs)))
        d = comb_program(
            modes5, "all", 2, gap, TWO_PI * 300e3, TWO_PI * 150e3, duration=1e-3
        )
        model = build_effective_model(d, modes5)
        comp, _ = diagonal_compensation(model, d, modes5)
        w_raw = mode_unitary(model.k_matrix, model.duration)
        w_comp = mode_unitary(comp.k_matrix, comp.duration)
        np.testing.assert_allclose(
            np.abs(w_raw.matrix) ** 2, np.abs(w_comp.matrix) ** 2, atol=1e-18
        )
        phases = np.angle(np.diagonal(w_raw.matrix))
        assert np.max(np.abs(phases)) > 1e-3  # phases really did differ


class TestErrorDiagnostics:
    def test_vacuum_occupations_zero_red(self, modes5):
        d = top_detuned_drive(modes5, TWO_PI * 300e3, TWO_PI * 100e3, [0, 1])
        budget = error_diagnostics(d, modes5, np.zeros(5))
        assert np.all(budget.spin_flip_red == 0.0)
        assert np.all(budget.spin_flip_carrier > 0.0)

    def test_single_mode_red_value(self, one_ion):
        _, _, modes = one_ion
        # eta Omega / Delta = 0.0625 exactly, one phonon in the mode.
        delta = TWO_PI * 400e3
        eta = abs(modes.lamb_dicke[0, 0])
        amp = 0.0625 * delta / eta
        d = DriveProgram.from_angular(
            [float(modes.freqs[0]) - delta], [[amp]], [0], 1e-3
        )
        budget = error_diagnostics(d, modes, [1.0])
        np.testing.assert_allclose(
            budget.spin_flip_red[0], 0.5 * 0.0625**2, rtol=1e-12
        )
        np.testing.assert_allclose(budget.spin_flip_red[0], 1.953125e-3, rtol=1e-12)

    def test_carrier_value(self, one_ion):
        _, _, modes = one_ion
        # Tone at 3.6 MHz with 250 kHz amplitude: Omega^2 / (2 nu^2).
        trap = TrapConfig(
            n_ions=1,
            axial_quadratic=(TWO_PI * 100e3) ** 2,
            axial_quartic=0.0,
            radial_com_freq=TWO_PI * 4e6,
            ion_mass=YB171_MASS,
        )
        modes4 = lamb_dicke(
            transverse_modes(equilibrium_positions(trap)), trap, eta_com_override=0.1
        )
        d = DriveProgram.from_angular(
            [TWO_PI * 3.6e6], [[TWO_PI * 250e3]], [0], 1e-3
        )
        budget = error_diagnostics(d, modes4, [0.0])
        np.testing.assert_allclose(
            budget.spin_flip_carrier[0], (250e3 / 3.6e6) ** 2 / 2.0, rtol=1e-12
        )
        assert abs(budget.spin_flip_carrier[0] - 2.4e-3) < 1e-4

    def test_regime_violation_raises(self, one_ion):
        _, _, modes = one_ion
        delta = TWO_PI * 50e3
        eta = abs(modes.lamb_dicke[0, 0])
        amp = 0.3 * delta / eta  # eps = 0.3, n = 20 -> p = 0.9
        d = DriveProgram.from_angular(
            [float(modes.freqs[0]) - delta], [[amp]], [0], 1e-3
        )
        with pytest.raises(RegimeError):
            error_diagnostics(d, modes, [20.0])

    def test_occupation_validation(self, modes5):
        d = top_detuned_drive(modes5, TWO_PI * 300e3, TWO_PI * 50e3, [0])
        with pytest.raises(ConfigError):
            error_diagnostics(d, modes5, [-1, 0, 0, 0, 0])
        with pytest.raises(ConfigError):
            error_diagnostics(d, modes5, [0, 0])


class TestHermiticityInvariant:
    def test_k_matrix_hermitian_random_drives(self, modes5):
        rng = np.random.default_rng(20)
        w_top = float(modes5.freqs[-1])
        for trial in range(5):
            p = int(rng.integers(1, 4))
            tones = np.sort(w_top - TWO_PI * rng.uniform(200e3, 500e3, size=p))
            m = int(rng.integers(1, 4))
            ions = np.sort(rng.choice(5, size=m, replace=False))
            amps = TWO_PI * 3e4 * (
                rng.normal(size=(m, p)) + 1j * rng.normal(size=(m, p))
            )
            d = DriveProgram.from_angular(
                tones, amps, ions, rng.uniform(2e-4, 3e-3)
            )
            k = k_matrix(k_tensor(d, modes5))
            assert np.max(np.abs(k - k.conj().T)) < 1e-12 * np.max(np.abs(k))

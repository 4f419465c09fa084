import numpy as np
import pytest

from phononet.constants import COULOMB_E2, TWO_PI, YB171_MASS
from phononet.crystal import (
    TrapConfig,
    _axial_gradient,
    _relative_spread,
    equilibrium_positions,
    lamb_dicke,
    transverse_modes,
    tune_quartic,
)
from phononet.errors import ConfigError, SolverError


def quadratic_trap(n, axial_hz=100e3, radial_hz=4e6):
    return TrapConfig(
        n_ions=n,
        axial_quadratic=(TWO_PI * axial_hz) ** 2,
        axial_quartic=0.0,
        radial_com_freq=TWO_PI * radial_hz,
        ion_mass=YB171_MASS,
    )


class TestTrapConfig:
    def test_rejects_unbounded_potential(self):
        with pytest.raises(ConfigError):
            TrapConfig(
                n_ions=2,
                axial_quadratic=-(TWO_PI * 50e3) ** 2,
                axial_quartic=0.0,
                radial_com_freq=TWO_PI * 4e6,
                ion_mass=YB171_MASS,
            )
        with pytest.raises(ConfigError):
            TrapConfig(
                n_ions=2,
                axial_quadratic=1.0,
                axial_quartic=-1.0,
                radial_com_freq=TWO_PI * 4e6,
                ion_mass=YB171_MASS,
            )

    def test_negative_quadratic_allowed_with_quartic(self):
        trap = TrapConfig(
            n_ions=3,
            axial_quadratic=-(TWO_PI * 20e3) ** 2,
            axial_quartic=1e22,
            radial_com_freq=TWO_PI * 4e6,
            ion_mass=YB171_MASS,
        )
        assert trap.axial_quadratic < 0


class TestEquilibriumPositions:
    def test_single_ion_at_origin(self):
        chain = equilibrium_positions(quadratic_trap(1))
        assert chain.positions.tolist() == [0.0]

    def test_two_ion_analytic(self):
        # Force balance puts the pair at +-(1/2)^(2/3) of the length scale
        # ell = (e^2 / (4 pi eps0 M wz^2))^(1/3).
        trap = quadratic_trap(2)
        chain = equilibrium_positions(trap)
        ell = (COULOMB_E2 / (YB171_MASS * trap.axial_quadratic)) ** (1.0 / 3.0)
        expect = 0.5 ** (2.0 / 3.0) * ell
        np.testing.assert_allclose(chain.positions, [-expect, expect], rtol=1e-12)

    def test_force_residual_below_tolerance(self):
        trap = quadratic_trap(12)
        chain = equilibrium_positions(trap)
        grad = _axial_gradient(chain.positions, trap)
        f_char = COULOMB_E2 / np.min(chain.spacings) ** 2
        assert np.max(np.abs(grad)) < 1e-12 * f_char

    def test_sorted_and_symmetric(self):
        chain = equilibrium_positions(quadratic_trap(9))
        pos = chain.positions
        assert np.all(np.diff(pos) > 0)
        np.testing.assert_allclose(pos, -pos[::-1], atol=1e-9 * np.max(np.abs(pos)))

    def test_deterministic_bit_identical(self):
        trap = quadratic_trap(15)
        a = equilibrium_positions(trap).positions
        b = equilibrium_positions(trap).positions
        assert np.array_equal(a, b)

    def test_tuned_40_ion_spacing(self, trap40, chain40):
        sp = chain40.spacings
        assert abs(np.mean(sp) - 3.6e-6) < 0.01 * 3.6e-6
        central = np.diff(chain40.positions[5:35])
        assert _relative_spread(central) < 0.05


class TestTuneQuartic:
    def test_requires_three_ions(self):
        with pytest.raises(ConfigError):
            tune_quartic(quadratic_trap(2), 5e-6)

    def test_three_ion_noop_when_spacing_matches(self):
        # A 3-ion quadratic chain is exactly equidistant by symmetry, so a
        # trap already at the target spacing is a fixed point.
        trap = quadratic_trap(3, axial_hz=120e3)
        chain = equilibrium_positions(trap)
        target = float(np.mean(chain.spacings))
        assert tune_quartic(trap, target) is trap

    def test_mean_spacing_pinned(self, trap40):
        chain = equilibrium_positions(trap40)
        assert abs(np.mean(chain.spacings) - 3.6e-6) < 0.01 * 3.6e-6

    def test_beats_quadratic_baseline_n10(self):
        base = quadratic_trap(10, axial_hz=80e3, radial_hz=2e6)
        tuned = tune_quartic(base, 5e-6)
        tuned_chain = equilibrium_positions(tuned)
        # Quadratic-only baseline at the same mean spacing, via the exact
        # scaling a2 -> a2 u^3 of the equilibrium equations.
        u = float(np.mean(equilibrium_positions(base).spacings)) / 5e-6
        from dataclasses import replace

        baseline = replace(base, axial_quadratic=base.axial_quadratic * u**3)
        base_chain = equilibrium_positions(baseline)
        assert abs(np.mean(base_chain.spacings) - 5e-6) < 0.01 * 5e-6
        assert _relative_spread(tuned_chain.spacings) < _relative_spread(
            base_chain.spacings
        )


class TestTransverseModes:
    def test_com_mode_is_highest(self, modes5):
        n = modes5.n
        np.testing.assert_allclose(
            modes5.participation[:, -1], np.full(n, 1 / np.sqrt(n)), atol=1e-12
        )

    def test_com_frequency_equals_radial(self):
        trap = quadratic_trap(7)
        modes = transverse_modes(equilibrium_positions(trap))
        assert abs(modes.freqs[-1] - trap.radial_com_freq) < 1e-9 * trap.radial_com_freq

    def test_two_ion_rocking_mode(self):
        trap = quadratic_trap(2, axial_hz=150e3, radial_hz=3e6)
        modes = transverse_modes(equilibrium_positions(trap))
        rocking = np.sqrt(trap.radial_com_freq**2 - trap.axial_quadratic)
        np.testing.assert_allclose(modes.freqs[0], rocking, rtol=1e-10)

    def test_orthonormal_participation(self, modes40):
        b = modes40.participation
        eye = np.eye(modes40.n)
        assert np.max(np.abs(b.T @ b - eye)) < 1e-10
        assert np.max(np.abs(b @ b.T - eye)) < 1e-10

    def test_frequency_sum_rule(self):
        trap = quadratic_trap(8)
        chain = equilibrium_positions(trap)
        modes = transverse_modes(chain)
        z = chain.positions
        dz = z[:, None] - z[None, :]
        np.fill_diagonal(dz, np.inf)
        coupling = COULOMB_E2 / (trap.ion_mass * np.abs(dz) ** 3)
        hess = coupling.copy()
        np.fill_diagonal(hess, trap.radial_com_freq**2 - np.sum(coupling, axis=1))
        np.testing.assert_allclose(
            np.sum(modes.freqs**2), np.trace(hess), rtol=1e-9
        )

    def test_mirror_symmetry_of_modes(self, modes40):
        b = modes40.participation
        for m in range(modes40.n):
            v = b[:, m]
            r = v[::-1]
            dev = min(np.max(np.abs(v - r)), np.max(np.abs(v + r)))
            assert dev < 1e-9

    def test_instability_raises(self):
        # Axial confinement stiff enough to squeeze the chain while the
        # radial confinement is too weak to hold it straight.
        trap = TrapConfig(
            n_ions=5,
            axial_quadratic=(TWO_PI * 500e3) ** 2,
            axial_quartic=0.0,
            radial_com_freq=TWO_PI * 520e3,
            ion_mass=YB171_MASS,
        )
        with pytest.raises(SolverError):
            transverse_modes(equilibrium_positions(trap))


class TestLambDicke:
    def test_com_override_exact(self, modes5):
        assert modes5.eta_scale[-1] == 0.1

    def test_inverse_sqrt_frequency_scaling(self, modes40):
        eta = modes40.eta_scale
        w = modes40.freqs
        np.testing.assert_allclose(
            eta / eta[-1], np.sqrt(w[-1] / w), rtol=1e-12
        )

    def test_yb_355nm_counterpropagating_band(self):
        # Counter-propagating Raman pair at 355 nm on 171Yb+ at a 4 MHz
        # center-of-mass mode should land near 0.1.
        trap = TrapConfig(
            n_ions=1,
            axial_quadratic=(TWO_PI * 100e3) ** 2,
            axial_quartic=0.0,
            radial_com_freq=TWO_PI * 4e6,
            ion_mass=YB171_MASS,
            wave_number=2 * TWO_PI / 355e-9,
        )
        modes = lamb_dicke(transverse_modes(equilibrium_positions(trap)), trap)
        assert 0.05 < modes.eta_scale[-1] < 0.2

    def test_requires_wave_number_or_override(self, modes5):
        trap = quadratic_trap(5)
        bare = transverse_modes(equilibrium_positions(trap))
        with pytest.raises(ConfigError):
            lamb_dicke(bare, trap)

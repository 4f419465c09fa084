import numpy as np
import pytest

from phononet.constants import TWO_PI, YB171_MASS
from phononet.crystal import (
    TrapConfig,
    equilibrium_positions,
    lamb_dicke,
    transverse_modes,
    tune_quartic,
)


@pytest.fixture(scope="session")
def trap40():
    base = TrapConfig(
        n_ions=40,
        axial_quadratic=(TWO_PI * 50e3) ** 2,
        axial_quartic=0.0,
        radial_com_freq=TWO_PI * 4e6,
        ion_mass=YB171_MASS,
    )
    return tune_quartic(base, 3.6e-6)


@pytest.fixture(scope="session")
def chain40(trap40):
    return equilibrium_positions(trap40)


@pytest.fixture(scope="session")
def modes40(chain40, trap40):
    return lamb_dicke(transverse_modes(chain40), trap40, eta_com_override=0.1)


def _quadratic_chain(n, axial_hz, radial_hz):
    trap = TrapConfig(
        n_ions=n,
        axial_quadratic=(TWO_PI * axial_hz) ** 2,
        axial_quartic=0.0,
        radial_com_freq=TWO_PI * radial_hz,
        ion_mass=YB171_MASS,
    )
    chain = equilibrium_positions(trap)
    return trap, chain, lamb_dicke(transverse_modes(chain), trap, eta_com_override=0.1)


@pytest.fixture(scope="session")
def modes5():
    _, _, modes = _quadratic_chain(5, 120e3, 2e6)
    return modes


@pytest.fixture(scope="session")
def modes10():
    trap = TrapConfig(
        n_ions=10,
        axial_quadratic=(TWO_PI * 80e3) ** 2,
        axial_quartic=0.0,
        radial_com_freq=TWO_PI * 2e6,
        ion_mass=YB171_MASS,
    )
    tuned = tune_quartic(trap, 5e-6)
    chain = equilibrium_positions(tuned)
    return lamb_dicke(transverse_modes(chain), tuned, eta_com_override=0.1)


@pytest.fixture(scope="session")
def two_ion():
    """(trap, chain, modes) for the exact-propagator comparisons."""
    return _quadratic_chain(2, 80e3, 500e3)


@pytest.fixture(scope="session")
def one_ion():
    return _quadratic_chain(1, 100e3, 500e3)

"""Programmable phonon-mode couplings in trapped-ion chains.

Pipeline: crystal structure -> multi-tone drive -> effective spin/phonon
hopping matrices -> drive compilation for target couplings -> Gaussian
mode evolution and boson-sampling probabilities -> exact small-instance
verification.
"""

from .crystal import (
    TrapConfig,
    IonChain,
    ModeData,
    equilibrium_positions,
    tune_quartic,
    transverse_modes,
    lamb_dicke,
)

__all__ = [
    "TrapConfig",
    "IonChain",
    "ModeData",
    "equilibrium_positions",
    "tune_quartic",
    "transverse_modes",
    "lamb_dicke",
]

__version__ = "0.1.0"

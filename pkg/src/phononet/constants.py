"""Physical constants (CODATA 2018) used throughout the package.

All frequencies inside the package are angular (rad/s); helpers here
convert user-facing ordinary frequencies (Hz) at ingestion points.
"""

import math

HBAR = 1.054571817e-34          # J s
ELEMENTARY_CHARGE = 1.602176634e-19  # C
EPSILON_0 = 8.8541878128e-12    # F/m
ATOMIC_MASS = 1.66053906660e-27  # kg

# Coulomb energy prefactor e^2 / (4 pi eps0), J m
COULOMB_E2 = ELEMENTARY_CHARGE**2 / (4.0 * math.pi * EPSILON_0)

# Default ion species: 171Yb+
YB171_MASS = 170.936323 * ATOMIC_MASS

TWO_PI = 2.0 * math.pi


def hz_to_angular(f):
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    return TWO_PI * f


def angular_to_hz(w):
    """Angular frequency (rad/s) to ordinary frequency (Hz)."""
    return w / TWO_PI

"""Exception taxonomy.

The CLI maps these onto exit codes: ConfigError -> 2, RegimeError -> 3,
SolverError -> 4.
"""


class PhononetError(Exception):
    """Base class for all package errors."""


class ConfigError(PhononetError):
    """Invalid or inconsistent configuration / input data."""


class SolverError(PhononetError):
    """A numerical routine failed to converge to its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RegimeError(PhononetError):
    """Physical operating regime violated (results would be meaningless)."""


class ResonanceError(RegimeError):
    """A drive tone sits exactly on a sideband; dispersive quantities undefined."""


class InfeasibleError(PhononetError):
    """Compilation target provably unreachable under the given constraints."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound

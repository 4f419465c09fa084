"""Gaussian mode evolution under the beamsplitter matrix and exact
boson-sampling output probabilities.

The Hamiltonian sum_{k,m} K[k,m] a_k adag_m moves mode operators as
a_j(T) = sum_k W[j,k] a_k(0) with W = exp(-i K^T T): in the Heisenberg
picture da_j/dt = i [H, a_j] = -i sum_k K[k,j] a_k.  Output probabilities
of Fock patterns through W are permanents of the row/column-repeated
submatrix.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

HERMITICITY_TOL = 1e-8
UNITARITY_TOL = 1e-10
PERMANENT_MAX_N = 20
OCCUPATION_MAX_TOTAL = 10


@dataclass(frozen=True)
class ModeUnitary:
    """Mode transfer matrix W with a_k(T) = sum_m W[k,m] a_m(0)."""

    matrix: np.ndarray
    duration: float
    source_k: np.ndarray

    @property
    def n(self):
        return self.matrix.shape[0]

    def unitarity_defect(self):
        w = self.matrix
        return float(np.max(np.abs(w @ w.conj().T - np.eye(self.n))))

    def to_json_dict(self):
        return {
            "duration_s": self.duration,
            "matrix": [
                [{"re": z.real, "im": z.imag} for z in row] for row in self.matrix
            ],
        }


@dataclass(frozen=True)
class FockPattern:
    """Occupation numbers per mode."""

    occupations: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupations, dtype=int)
        if occ.ndim != 1 or np.any(occ < 0):
            raise ConfigError("occupations must be a 1-D non-negative integer vector")
        occ.flags.writeable = False
        object.__setattr__(self, "occupations", occ)

    @property
    def total(self):
        return int(np.sum(self.occupations))


def mode_unitary(k, duration):
    """Exponentiate a Hermitian coupling matrix into the mode transfer matrix.

    W = exp(-i K^T T), evaluated through the eigendecomposition of K^T
    (Hermitian since K is), so W is unitary to round-off.
    """
    k = np.asarray(k, dtype=complex)
    scale = np.max(np.abs(k)) if k.size else 0.0
    # Skip the shape check when the total rotation angle is below round-off
    # (e.g. a compensated matrix whose entries are numerical zero).
    if scale * duration > 1e-12 and (
        np.max(np.abs(k - k.conj().T)) > HERMITICITY_TOL * scale
    ):
        raise ConfigError("coupling matrix is not Hermitian")
    kt = 0.5 * (k.T + k.conj())  # symmetrized transpose, Hermitian by construction
    vals, vecs = np.linalg.eigh(kt)
    w = (vecs * np.exp(-1j * vals * duration)) @ vecs.conj().T
    return ModeUnitary(matrix=w, duration=duration, source_k=k)


def permanent(a, allow_large=False):
    """Permanent of a square complex matrix by Gray-code inclusion-exclusion.

    Runs in O(2^n n); guarded at n <= 20 unless allow_large is set.
    perm of the empty matrix is 1.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError("permanent requires a square matrix")
    n = a.shape[0]
    if n == 0:
        return complex(1.0)
    if n > PERMANENT_MAX_N and not allow_large:
        raise ConfigError(
            f"matrix size {n} exceeds the exact-permanent guard ({PERMANENT_MAX_N}); "
            "pass allow_large=True to override"
        )
    # Ryser's formula over proper subsets, visited in Gray-code order so the
    # column sums update by one row per step.
    total = complex(0.0)
    row_sum = np.zeros(n, dtype=complex)
    prev_gray = 0
    sign = 1.0
    for idx in range(1, 1 << n):
        gray = idx ^ (idx >> 1)
        bit = gray ^ prev_gray
        j = bit.bit_length() - 1
        if gray & bit:
            row_sum += a[j]
        else:
            row_sum -= a[j]
        sign = -sign
        total += sign * np.prod(row_sum)
        prev_gray = gray
    if n % 2:
        total = -total
    return complex(total)


def _repeat_indices(occupations):
    out = []
    for i, n in enumerate(occupations):
        out.extend([i] * int(n))
    return out


def output_probability(w, input_pattern, output_pattern, allow_large=False):
    """Probability of detecting output_pattern given input_pattern through W.

    |perm(W[rows(output), cols(input)])|^2 / (prod in! * prod out!), where
    rows and columns are repeated by occupation.  Photon number must match;
    totals above 10 need allow_large (the permanent cost is exponential).
    """
    w_mat = w.matrix if isinstance(w, ModeUnitary) else np.asarray(w, dtype=complex)
    inp = FockPattern(input_pattern) if not isinstance(input_pattern, FockPattern) else input_pattern
    out = FockPattern(output_pattern) if not isinstance(output_pattern, FockPattern) else output_pattern
    if inp.occupations.size != w_mat.shape[0] or out.occupations.size != w_mat.shape[0]:
        raise ConfigError("pattern length does not match the number of modes")
    if inp.total != out.total:
        raise ConfigError(
            f"photon number mismatch: input {inp.total} vs output {out.total}"
        )
    if inp.total > OCCUPATION_MAX_TOTAL and not allow_large:
        raise ConfigError(
            f"total occupation {inp.total} exceeds guard ({OCCUPATION_MAX_TOTAL}); "
            "pass allow_large=True to override"
        )
    rows = _repeat_indices(out.occupations)
    cols = _repeat_indices(inp.occupations)
    sub = w_mat[np.ix_(rows, cols)]
    amp2 = abs(permanent(sub, allow_large=allow_large)) ** 2
    norm = 1.0
    for n in inp.occupations:
        norm *= math.factorial(int(n))
    for n in out.occupations:
        norm *= math.factorial(int(n))
    return amp2 / norm


def enumerate_patterns(n_modes, total):
    """All occupation patterns of n_modes modes holding `total` quanta."""
    if n_modes == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in enumerate_patterns(n_modes - 1, total - first):
            yield (first,) + rest


def output_distribution(w, input_pattern, allow_large=False):
    """All (pattern, probability) pairs for the input's photon-number sector."""
    inp = FockPattern(input_pattern) if not isinstance(input_pattern, FockPattern) else input_pattern
    n_modes = w.n if isinstance(w, ModeUnitary) else np.asarray(w).shape[0]
    return [
        (pat, output_probability(w, inp, FockPattern(np.array(pat)), allow_large))
        for pat in enumerate_patterns(n_modes, inp.total)
    ]


def covariance_evolve(w, means, covariance):
    """Propagate a Gaussian state (mode means and quadrature covariance).

    means: complex vector of <a_m>; covariance: real 2N x 2N matrix in
    (q_1..q_N, p_1..p_N) ordering with vacuum = I/2.  A passive W acts as
    the orthogonal symplectic S = [[Re W, -Im W], [Im W, Re W]], so purity
    and total photon number are preserved automatically.
    """
    w_mat = w.matrix if isinstance(w, ModeUnitary) else np.asarray(w, dtype=complex)
    n = w_mat.shape[0]
    means = np.asarray(means, dtype=complex)
    cov = np.asarray(covariance, dtype=float)
    if means.shape != (n,) or cov.shape != (2 * n, 2 * n):
        raise ConfigError("means/covariance shape does not match the mode count")
    # Physicality: V + i Omega / 2 >= 0 with Omega the symplectic form.
    omega = np.block(
        [[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]]
    )
    check = cov + 0.5j * omega
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (check + check.conj().T))))
    if min_eig < -1e-9:
        raise ConfigError(
            f"covariance violates the vacuum floor (min eigenvalue {min_eig:.2e})"
        )
    s = np.block(
        [[w_mat.real, -w_mat.imag], [w_mat.imag, w_mat.real]]
    )
    return w_mat @ means, s @ cov @ s.T


def vacuum_covariance(n_modes):
    """Quadrature covariance of the N-mode vacuum (I/2)."""
    return 0.5 * np.eye(2 * n_modes)


def mean_photon_number(means, covariance):
    """Total <n> of a Gaussian state in the conventions of covariance_evolve."""
    n = means.size
    return float(np.sum(np.abs(means) ** 2) + 0.5 * (np.trace(covariance) - n))

"""Exact ground truth on a truncated spin (x) Fock space.

Propagates the full time-dependent red-sideband Hamiltonian

    H(t) = (i/2) sum_{i,m,p} eta[i,m] W[i,p] exp(-i D[p,m] t) s+_i a_m + h.c.

for small ion numbers, and compares the resulting propagator against the
exponential of the effective spin/phonon hopping Hamiltonians.  The
off-resonant carrier term (1/2) sum_{i,p} W[i,p] exp(+i nu_p t) s+_i + h.c.
can be switched on to validate the carrier part of the spin-flip error
budget; it is off by default.

Basis ordering: index = spin_index * fock_dim + fock_index, spin bits
little-endian in the ion index (bit i set = ion i up), Fock digits
little-endian base (cutoff+1) in the mode index.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConfigError, SolverError

DIMENSION_GUARD = 1 << 20
NORM_DRIFT_TOL = 1e-9
STEP_CONVERGENCE_TOL = 1e-8

# Gauss-node coefficients of the two-exponential fourth-order
# commutator-free scheme.
_CF4_C1 = 0.5 - math.sqrt(3.0) / 6.0
_CF4_C2 = 0.5 + math.sqrt(3.0) / 6.0
_CF4_A1 = 0.25 + math.sqrt(3.0) / 6.0
_CF4_A2 = 0.25 - math.sqrt(3.0) / 6.0


@dataclass(frozen=True)
class HilbertSpec:
    """Truncated spin (x) Fock space layout."""

    n_ions: int
    n_modes: int
    fock_cutoff: int

    def __post_init__(self):
        if self.n_ions < 1 or self.n_modes < 1:
            raise ConfigError("need at least one ion and one mode")
        if self.fock_cutoff < 1:
            raise ConfigError("fock_cutoff must be >= 1")
        if self.dimension > DIMENSION_GUARD:
            raise ConfigError(
                f"Hilbert dimension {self.dimension} exceeds guard {DIMENSION_GUARD}"
            )

    @property
    def fock_dim(self):
        return (self.fock_cutoff + 1) ** self.n_modes

    @property
    def dimension(self):
        return (1 << self.n_ions) * self.fock_dim

    def index_of(self, spins, occupations):
        """Basis index of a product state; spins iterable of 0/1 (1 = up)."""
        spins = list(spins)
        occupations = list(occupations)
        if len(spins) != self.n_ions or len(occupations) != self.n_modes:
            raise ConfigError("spins/occupations length mismatch")
        spin_idx = 0
        for i, s in enumerate(spins):
            if s not in (0, 1):
                raise ConfigError("spin entries must be 0 (down) or 1 (up)")
            spin_idx |= s << i
        fock_idx = 0
        base = self.fock_cutoff + 1
        for m, n in enumerate(occupations):
            if not 0 <= n <= self.fock_cutoff:
                raise ConfigError("occupation outside the Fock cutoff")
            fock_idx += n * base**m
        return spin_idx * self.fock_dim + fock_idx

    def unpack(self, index):
        """Inverse of index_of: (spin bits, occupations)."""
        spin_idx, fock_idx = divmod(int(index), self.fock_dim)
        spins = tuple((spin_idx >> i) & 1 for i in range(self.n_ions))
        occs = []
        base = self.fock_cutoff + 1
        for _ in range(self.n_modes):
            fock_idx, n = divmod(fock_idx, base)
            occs.append(n)
        return spins, tuple(occs)


@dataclass(frozen=True)
class QuantumState:
    """State vector on a HilbertSpec basis."""

    amplitudes: np.ndarray
    spec: HilbertSpec

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != (self.spec.dimension,):
            raise ConfigError("amplitude vector does not match the space dimension")
        object.__setattr__(self, "amplitudes", amp)

    @classmethod
    def product(cls, spec, occupations, spins=None):
        """All-spins-down (or given spins) Fock product state."""
        if spins is None:
            spins = [0] * spec.n_ions
        amp = np.zeros(spec.dimension, dtype=complex)
        amp[spec.index_of(spins, occupations)] = 1.0
        return cls(amplitudes=amp, spec=spec)

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))


def _kron_chain(ops):
    """Kronecker product with the last list element least significant."""
    out = ops[-1]
    for op in reversed(ops[:-1]):
        out = sparse.kron(op, out, format="csr")
    return sparse.csr_matrix(out)


def _spin_raise(spec, ion):
    sp = sparse.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex))
    eye = sparse.identity(2, dtype=complex, format="csr")
    ops = [sp if i == ion else eye for i in range(spec.n_ions)]
    return _kron_chain(list(reversed(ops)))  # ion index little-endian


def _spin_z(spec, ion):
    sz = sparse.csr_matrix(np.diag([-1.0, 1.0]).astype(complex))
    eye = sparse.identity(2, dtype=complex, format="csr")
    ops = [sz if i == ion else eye for i in range(spec.n_ions)]
    return _kron_chain(list(reversed(ops)))


def _annihilate(spec, mode):
    d = spec.fock_cutoff + 1
    a = sparse.csr_matrix(
        (np.sqrt(np.arange(1, d)), (np.arange(d - 1), np.arange(1, d))), shape=(d, d)
    ).astype(complex)
    eye = sparse.identity(d, dtype=complex, format="csr")
    ops = [a if m == mode else eye for m in range(spec.n_modes)]
    return _kron_chain(list(reversed(ops)))


def _full_spin(spec, op):
    return sparse.kron(op, sparse.identity(spec.fock_dim, dtype=complex), format="csr")


def _full_fock(spec, op):
    return sparse.kron(
        sparse.identity(1 << spec.n_ions, dtype=complex), op, format="csr"
    )


class _DriveOperators:
    """Precomputed operator content of the drive Hamiltonian on a spec."""

    def __init__(self, drive, modes, spec, include_carrier=False):
        if spec.n_modes > modes.n:
            raise ConfigError("spec has more modes than the chain provides")
        if np.any(drive.illuminated >= spec.n_ions):
            raise ConfigError("spec does not cover the illuminated ions")
        eta = modes.require_lamb_dicke()
        if eta.shape[0] < spec.n_ions:
            raise ConfigError("spec has more ions than the chain provides")
        self.dim = spec.dimension
        self.dense = self.dim <= 4096

        freqs = modes.freqs[: spec.n_modes]
        # One operator per (illuminated ion, mode); coefficient
        # c_im(t) = (i/2) eta[i,m] sum_p W[i,p] exp(-i D[p,m] t).
        self.terms = []
        for idx, ion in enumerate(drive.illuminated):
            raise_full = _full_spin(spec, _spin_raise(spec, int(ion)))
            for m in range(spec.n_modes):
                op = raise_full @ _full_fock(spec, _annihilate(spec, m))
                amps = 0.5j * eta[ion, m] * drive.amplitudes[idx]  # [P]
                phases = -(freqs[m] - drive.tones)  # -D[p,m]
                self.terms.append(
                    (op.toarray() if self.dense else op, amps, phases)
                )
            if include_carrier:
                amps = 0.5 * drive.amplitudes[idx]
                self.terms.append(
                    (
                        raise_full.toarray() if self.dense else raise_full,
                        amps,
                        drive.tones.copy(),
                    )
                )

    def hamiltonian(self, t):
        """H(t)/hbar in rad/s (dense when small, else CSR), Hermitian."""
        if self.dense:
            h = np.zeros((self.dim, self.dim), dtype=complex)
        else:
            h = sparse.csr_matrix((self.dim, self.dim), dtype=complex)
        for op, amps, phases in self.terms:
            coef = np.sum(amps * np.exp(1j * phases * t))
            h = h + coef * op
        return h + h.conj().T


def hamiltonian_at(t, drive, modes, spec, include_carrier=False):
    """Drive Hamiltonian at time t as a sparse CSR matrix (units rad/s)."""
    ops = _DriveOperators(drive, modes, spec, include_carrier)
    h = ops.hamiltonian(t)
    return sparse.csr_matrix(h)


def minimum_steps(drive, duration):
    """Step floor: at least 20 samples per period of the fastest tone."""
    f_max = float(np.max(drive.tones_hz))
    return max(int(math.ceil(duration * 20.0 * f_max)), 1)


def _expm_dense(h, dt):
    """exp(-i h dt) for Hermitian dense h via eigendecomposition."""
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * vals * dt)) @ vecs.conj().T


def _apply_step(g, dt, state):
    """exp(-i dt g) @ state by a Taylor sweep.

    The per-step generator norm is tiny (the step floor samples the fastest
    tone 20 times per period), so the series reaches round-off in a handful
    of matmuls, far cheaper than an eigendecomposition per step.  Falls
    back to the eigensolver if the norm bound is not actually small.
    """
    x = float(np.max(np.sum(np.abs(g), axis=1))) * dt
    if x > 0.5:
        return _expm_dense(g, dt) @ state
    out = state.copy()
    term = state
    bound = 1.0
    for k in range(1, 40):
        term = (-1j * dt / k) * (g @ term)
        out += term
        bound *= x / k
        if bound < 1e-16:
            break
    return out


def _cf4_sweep(ops, duration, steps, apply_to, observer=None):
    """Drive `apply_to` (vector or matrix) through `steps` CF4 steps."""
    dt = duration / steps
    state = apply_to
    for k in range(steps):
        t0 = k * dt
        h1 = ops.hamiltonian(t0 + _CF4_C1 * dt)
        h2 = ops.hamiltonian(t0 + _CF4_C2 * dt)
        g1 = _CF4_A1 * h1 + _CF4_A2 * h2
        g2 = _CF4_A2 * h1 + _CF4_A1 * h2
        if not ops.dense:
            g1 = g1.toarray()
            g2 = g2.toarray()
        state = _apply_step(g2, dt, _apply_step(g1, dt, state))
        if observer is not None:
            observer(t0 + dt, state)
    return state


def propagate(
    state,
    drive,
    modes,
    spec,
    duration,
    steps=None,
    include_carrier=False,
    verify=True,
    observer=None,
):
    """Time-ordered propagation with a 4th-order commutator-free stepper.

    steps defaults to (and is never allowed below) 20 samples per period of
    the fastest tone.  With verify=True the run is repeated at twice the
    step count; the finer result is returned and must agree with the coarse
    one to 1e-8 (else SolverError), and the norm may drift at most 1e-9.
    observer(t, amplitudes) is called after every accepted step of the
    finest run.
    """
    floor = minimum_steps(drive, duration)
    if steps is None:
        steps = floor
    elif steps < floor:
        raise ConfigError(
            f"steps={steps} too coarse: need >= {floor} for the fastest tone"
        )
    ops = _DriveOperators(drive, modes, spec, include_carrier)
    coarse = _cf4_sweep(ops, duration, steps, state.amplitudes.copy())
    if not verify:
        out = QuantumState(amplitudes=coarse, spec=spec)
        _check_norm(out)
        if observer is not None:
            _cf4_sweep(ops, duration, steps, state.amplitudes.copy(), observer)
        return out
    fine = _cf4_sweep(ops, duration, 2 * steps, state.amplitudes.copy(), observer)
    drift = float(np.linalg.norm(fine - coarse))
    if drift > STEP_CONVERGENCE_TOL:
        raise SolverError(
            f"propagation not step-converged: doubling steps moved the state by {drift:.2e}",
            residual=drift,
        )
    out = QuantumState(amplitudes=fine, spec=spec)
    _check_norm(out)
    return out


def _check_norm(state):
    drift = abs(state.norm() - 1.0)
    if drift > NORM_DRIFT_TOL:
        raise SolverError(
            f"propagation norm drift {drift:.2e} exceeds {NORM_DRIFT_TOL}",
            residual=drift,
        )


def propagate_unitary(
    drive, modes, spec, duration, steps=None, include_carrier=False, verify=True
):
    """Full propagator matrix of the drive Hamiltonian on the truncated space."""
    floor = minimum_steps(drive, duration)
    if steps is None:
        steps = floor
    elif steps < floor:
        raise ConfigError(
            f"steps={steps} too coarse: need >= {floor} for the fastest tone"
        )
    ops = _DriveOperators(drive, modes, spec, include_carrier)
    eye = np.eye(spec.dimension, dtype=complex)
    coarse = _cf4_sweep(ops, duration, steps, eye.copy())
    if not verify:
        return coarse
    fine = _cf4_sweep(ops, duration, 2 * steps, eye.copy())
    drift = float(np.max(np.abs(fine - coarse)))
    if drift > STEP_CONVERGENCE_TOL:
        raise SolverError(
            f"propagator not step-converged: {drift:.2e}", residual=drift
        )
    return fine


def effective_propagator(model, spec, duration):
    """exp(-i (H_s + H_p) T) on the truncated space, dense.

    H_s hops spin excitations with the J matrix; H_p hops phonons with the
    per-ion K tensors and carries each driven ion's sz operator, so the
    comparison against the exact propagator is valid on the full spin
    space, not only the all-down sector.
    """
    n = model.j_matrix.shape[0]
    if spec.n_ions != n or spec.n_modes != model.k_tensor.shape[1]:
        raise ConfigError(
            "spec must cover exactly the chain's ions and modes for a valid comparison"
        )
    dim = spec.dimension
    h = np.zeros((dim, dim), dtype=complex)

    # H_s = -sum_ij J_ij (s+_i s-_j + s-_i s+_j); the second sum is the
    # Hermitian conjugate of the first because J is Hermitian.
    raises = [_spin_raise(spec, i) for i in range(n)]
    lowers = [op.conj().T.tocsr() for op in raises]
    cross = np.zeros((1 << n, 1 << n), dtype=complex)
    for i in range(n):
        for j in range(n):
            if model.j_matrix[i, j] == 0:
                continue
            cross += model.j_matrix[i, j] * (raises[i] @ lowers[j]).toarray()
    h -= np.kron(cross + cross.conj().T, np.eye(spec.fock_dim))

    annis = [_annihilate(spec, m) for m in range(spec.n_modes)]
    for idx, ion in enumerate(model.illuminated):
        hop = np.zeros((spec.fock_dim, spec.fock_dim), dtype=complex)
        for k in range(spec.n_modes):
            for m in range(spec.n_modes):
                coef = model.k_tensor[idx, k, m]
                if coef == 0:
                    continue
                hop += coef * (annis[k] @ annis[m].conj().T).toarray()
        sz = _spin_z(spec, int(ion)).toarray()
        h -= np.kron(sz, hop)

    return _expm_dense(h, duration)


def sector_indices(spec, all_spin_down=True, max_total_phonons=None):
    """Basis indices of a comparison sector."""
    idx = []
    for i in range(spec.dimension):
        spins, occs = spec.unpack(i)
        if all_spin_down and any(spins):
            continue
        if max_total_phonons is not None and sum(occs) > max_total_phonons:
            continue
        idx.append(i)
    return np.asarray(idx, dtype=int)


@dataclass(frozen=True)
class CompareReport:
    fidelity: float
    trace_distance: float
    epsilon_used: float
    sector_dimension: int


def compare(exact, effective, spec, sector=None, epsilon=float("nan")):
    """Sector-projected propagator fidelity and trace distance.

    Both propagators are phase-aligned on their vacuum (all-down, zero
    phonons) amplitude; fidelity is |tr(A^dag B)| / d over the sector and
    the trace distance is the normalized nuclear norm of A - B.  Leakage
    out of the sector lowers the fidelity.
    """
    if sector is None:
        sector = sector_indices(spec, all_spin_down=True)
    a = exact[np.ix_(sector, sector)].copy()
    b = effective[np.ix_(sector, sector)].copy()
    vac = spec.index_of([0] * spec.n_ions, [0] * spec.n_modes)
    where = np.nonzero(sector == vac)[0]
    if where.size:
        v = int(where[0])
        for mat in (a, b):
            amp = mat[v, v]
            if abs(amp) > 0:
                mat *= np.exp(-1j * np.angle(amp))
    d = len(sector)
    fidelity = float(abs(np.trace(a.conj().T @ b)) / d)
    svals = np.linalg.svd(a - b, compute_uv=False)
    return CompareReport(
        fidelity=fidelity,
        trace_distance=float(np.sum(svals) / (2.0 * d)),
        epsilon_used=float(epsilon),
        sector_dimension=d,
    )


def average_spin_flip_probability(
    drive, modes, spec, duration, occupations, steps=None, include_carrier=False
):
    """Time-averaged probability of any spin pointing up during the drive.

    Starts from all spins down with the given mode occupations and averages
    the out-of-sector population over the run, which is what the
    time-averaged error-budget formulas predict.
    """
    down = sector_indices(spec, all_spin_down=True)
    mask = np.zeros(spec.dimension, dtype=bool)
    mask[down] = True
    samples = []

    def observer(_t, amp):
        samples.append(1.0 - float(np.sum(np.abs(amp[mask]) ** 2)))

    state = QuantumState.product(spec, occupations)
    propagate(
        state,
        drive,
        modes,
        spec,
        duration,
        steps=steps,
        include_carrier=include_carrier,
        observer=observer,
    )
    return float(np.mean(samples))

"""Effective spin-hopping and phonon-hopping matrices for a multi-tone drive.

In the dispersive regime the drive generates, at second order, a spin
hopping matrix

    J[i,j] = (1/8) sum_{m,p} eta[i,m] eta[j,m] conj(W[i,p]) W[j,p] / D[p,m]

and a per-ion phonon hopping tensor

    K_i[k,m] = (1/8) sum_{p,q} eta[i,k] eta[i,m] W[i,q] conj(W[i,p])
               * (D[q,m] + D[p,k]) / (D[p,k] D[q,m]) * kernel(D[q,m], D[p,k])

where W is the complex amplitude matrix, D[p,m] = omega_m - nu_p is the
detuning of tone p from the red sideband of mode m, and the finite-time
kernel enforces (p,q)/(k,m) pair resonance up to 1/T broadening.  With all
spins down the summed matrix K = sum_i K_i generates the bosonic
beamsplitter Hamiltonian sum_{k,m} K[k,m] a_k adag_m.

All rates are angular (rad/s); JSON exports divide by 2*pi.
"""

from dataclasses import dataclass, replace

import numpy as np

from .constants import TWO_PI
from .drive import BlueToneAnnotation, central_window, detunings, epsilon_tensor
from .errors import ConfigError, RegimeError


def delta_tilde(delta_qm, delta_pk, duration):
    """Finite-time pair-resonance kernel.

    exp(i x) * sinc(x) with x = (delta_qm - delta_pk) * T / 2 and
    sinc(x) = sin(x)/x, sinc(0) = 1.  Behaves like a Kronecker delta on
    (delta_qm, delta_pk) once |delta_qm - delta_pk| * T >> 1, and satisfies
    kernel(a, b) = conj(kernel(b, a)), which makes K Hermitian at any T.
    Accepts scalars or broadcastable arrays.
    """
    x = 0.5 * (np.asarray(delta_qm) - np.asarray(delta_pk)) * duration
    return np.exp(1j * x) * np.sinc(x / np.pi)


def j_matrix(drive, modes):
    """Spin hopping matrix J (rad/s), Hermitian, [N x N].

    Rows and columns of dark (non-illuminated) ions are zero: every term
    carries amplitudes of both ions.
    """
    eta = modes.require_lamb_dicke()
    delta = detunings(drive, modes)  # [P x N]
    omega = drive.full_amplitudes(modes.n)  # [N x P]
    inv = 1.0 / delta  # [P x N]
    return 0.125 * np.einsum(
        "im,jm,ip,jp,pm->ij", eta, eta, omega.conj(), omega, inv, optimize=True
    )


def k_tensor(drive, modes):
    """Per-ion phonon hopping tensors K_i (rad/s), shape [M x N x N].

    Index order (illuminated ion, destination mode k, source mode m).  Each
    slice is Hermitian because the kernel conjugates under argument swap.
    """
    eta = modes.require_lamb_dicke()
    delta = detunings(drive, modes)  # [P x N]
    # Pair kernel and detuning sum are ion-independent: [p,k,q,m].
    diff = delta[None, None, :, :] - delta[:, :, None, None]
    ssum = delta[None, None, :, :] + delta[:, :, None, None]
    x = 0.5 * diff * drive.duration
    kernel = np.exp(1j * x) * np.sinc(x / np.pi)
    weight = ssum * kernel

    inv = 1.0 / delta
    out = np.empty((drive.n_illuminated, modes.n, modes.n), dtype=complex)
    for idx, ion in enumerate(drive.illuminated):
        amp = drive.amplitudes[idx]  # [P]
        v = amp.conj()[:, None] * eta[ion][None, :] * inv  # [p,k]
        w = amp[:, None] * eta[ion][None, :] * inv  # [q,m]
        out[idx] = 0.125 * np.einsum("pk,qm,pkqm->km", v, w, weight, optimize=True)
    return out


def k_matrix(tensor, spin_config=None, illuminated=None):
    """Summed beamsplitter matrix K[k,m] = -sum_i <sz_i> K_i[k,m].

    With the default all-spins-down configuration this is sum_i K_i.  When
    an explicit spin_config (entries +-1, one per ion of the chain) is
    given, the illuminated ion indices matching the tensor's first axis are
    required to look up each ion's spin.
    """
    tensor = np.asarray(tensor)
    if spin_config is None:
        return np.sum(tensor, axis=0)
    spin_config = np.asarray(spin_config)
    if not np.all(np.isin(spin_config, (-1, 1))):
        raise ConfigError("spin_config entries must be +1 or -1")
    if illuminated is None:
        raise ConfigError("explicit spin_config requires the illuminated ion indices")
    illuminated = np.asarray(illuminated, dtype=int)
    if illuminated.size != tensor.shape[0]:
        raise ConfigError("illuminated does not match tensor's first axis")
    signs = -spin_config[illuminated].astype(float)
    return np.tensordot(signs, tensor, axes=(0, 0))


@dataclass(frozen=True)
class EffectiveModel:
    """Evaluated effective couplings of one drive on one mode spectrum."""

    j_matrix: np.ndarray       # [N x N] complex, rad/s
    k_tensor: np.ndarray       # [M x N x N] complex, rad/s
    k_matrix: np.ndarray       # [N x N] complex, rad/s
    duration: float            # s
    mode_window: tuple         # (lo, hi) sorted-mode indices used for reporting
    illuminated: np.ndarray    # [M] ion indices matching k_tensor's first axis
    diagonal_compensated: bool = False


def build_effective_model(drive, modes, spin_config=None, mode_window=None):
    """Evaluate J, K_i and K for a drive; sums always run over all modes."""
    if mode_window is None:
        mode_window = central_window(modes.n)
    tensor = k_tensor(drive, modes)
    return EffectiveModel(
        j_matrix=j_matrix(drive, modes),
        k_tensor=tensor,
        k_matrix=k_matrix(tensor, spin_config, illuminated=drive.illuminated),
        duration=drive.duration,
        mode_window=tuple(mode_window),
        illuminated=drive.illuminated,
    )


def diagonal_compensation(model, drive, modes):
    """Suppress on-site (diagonal) terms of the beamsplitter matrix.

    The diagonal of K is zeroed analytically; off-diagonal entries are
    untouched.  The returned drive carries an annotation with the single
    blue-sideband tone (amplitude, detuning) whose second-order light shift
    would produce the removed mean on-site rate, as a modeled equivalent of
    the hardware compensation; the exact-propagator module is the ground
    truth for whether this cancellation is adequate.
    """
    diag = np.diagonal(model.k_matrix)
    if not np.any(diag):
        return model, replace(
            drive, compensation=BlueToneAnnotation(amplitude_hz=0.0, detuning_hz=0.0)
        )
    compensated = model.k_matrix.copy()
    np.fill_diagonal(compensated, 0.0)

    lo, hi = model.mode_window
    delta = detunings(drive, modes)  # [P x N]
    # Representative detuning: nearest tone per window mode, averaged.
    det = float(np.mean(np.min(np.abs(delta[:, lo:hi]), axis=0)))
    eta = modes.require_lamb_dicke()
    eta2 = float(np.sum(eta[drive.illuminated][:, lo:hi] ** 2) / max(hi - lo, 1))
    mean_onsite = float(np.mean(np.abs(diag[lo:hi])))
    # Single-tone second-order light-shift match: eta^2 |Ob|^2 / (4 det) = mean rate.
    amp = np.sqrt(4.0 * det * mean_onsite / eta2) if eta2 > 0 else 0.0

    new_model = replace(model, k_matrix=compensated, diagonal_compensated=True)
    note = BlueToneAnnotation(amplitude_hz=amp / TWO_PI, detuning_hz=det / TWO_PI)
    return new_model, replace(drive, compensation=note)


@dataclass(frozen=True)
class ErrorBudget:
    """Per-ion spin-flip probabilities predicted by the time-averaged formulas."""

    spin_flip_red: np.ndarray      # [M] 0.5 * sum_{m,p} n_m |eps_imp|^2
    spin_flip_carrier: np.ndarray  # [M] sum_p |W_ip|^2 / (2 nu_p^2)
    epsilon_bound: float           # max |eps| entry

    @property
    def total(self):
        return self.spin_flip_red + self.spin_flip_carrier


def error_diagnostics(drive, modes, occupations):
    """Evaluate the spin-flip error budget for given mode occupations.

    occupations n_m >= 0, one entry per mode.  Raises RegimeError when any
    per-ion probability exceeds 0.5: the perturbative picture no longer
    applies there.
    """
    occupations = np.asarray(occupations, dtype=float)
    if occupations.shape != (modes.n,):
        raise ConfigError("occupations must have one entry per mode")
    if np.any(occupations < 0):
        raise ConfigError("occupations must be non-negative")
    eps = epsilon_tensor(drive, modes)  # [M x N x P]
    red = 0.5 * np.einsum("imp,m->i", np.abs(eps) ** 2, occupations)
    carrier = np.sum(
        np.abs(drive.amplitudes) ** 2 / (2.0 * drive.tones[None, :] ** 2), axis=1
    )
    if np.any(red > 0.5) or np.any(carrier > 0.5):
        raise RegimeError(
            "spin-flip probability exceeds 0.5; dispersive error budget invalid"
        )
    return ErrorBudget(
        spin_flip_red=red,
        spin_flip_carrier=carrier,
        epsilon_bound=float(np.max(eps)) if eps.size else 0.0,
    )

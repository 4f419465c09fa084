"""Multi-tone drive programs and dispersive-regime checks.

A drive is a set of tone frequencies near the red motional sidebands plus a
constant complex amplitude matrix over the illuminated ions.  Frequencies
and amplitudes are stored canonically in Hz (the JSON wire unit) and
exposed in angular units; multiplying and dividing by 2*pi are not exact
inverses in floating point, so keeping the wire unit canonical is what
makes JSON round-trips bit-exact.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import TWO_PI
from .errors import ConfigError, ResonanceError

# Relative detuning below which a tone is treated as sitting on a sideband.
RESONANCE_RTOL = 1e-9


@dataclass(frozen=True)
class BlueToneAnnotation:
    """Record of the modeled single blue-sideband tone that would cancel
    on-site terms.  Analytic cancellation is applied exactly; this note
    documents the equivalent hardware knob and is flagged as modeled in
    exports."""

    amplitude_hz: float
    detuning_hz: float


@dataclass(frozen=True)
class DriveProgram:
    """Tone frequencies and complex Rabi amplitudes for the illuminated ions.

    tones_hz: [P] strictly increasing, Hz (red-sideband frame, > 0).
    amplitudes_hz: [M x P] complex, Hz.
    illuminated: [M] unique ion indices (0-based).
    duration: evolution time T, seconds.

    Angular-unit views (rad/s) are available as .tones and .amplitudes;
    build from angular inputs with :meth:`from_angular`.
    """

    tones_hz: np.ndarray
    amplitudes_hz: np.ndarray
    illuminated: np.ndarray
    duration: float
    compensation: BlueToneAnnotation | None = None

    def __post_init__(self):
        tones = np.atleast_1d(np.asarray(self.tones_hz, dtype=float))
        amps = np.atleast_2d(np.asarray(self.amplitudes_hz, dtype=complex))
        ions = np.atleast_1d(np.asarray(self.illuminated, dtype=int))
        if tones.ndim != 1 or tones.size < 1:
            raise ConfigError("need at least one tone")
        if np.any(tones <= 0):
            raise ConfigError("tone frequencies must be positive")
        if tones.size > 1 and not np.all(np.diff(tones) > 0):
            raise ConfigError("tone frequencies must be strictly increasing")
        if ions.size < 1:
            raise ConfigError("need at least one illuminated ion")
        if np.any(ions < 0) or np.unique(ions).size != ions.size:
            raise ConfigError("illuminated ion indices must be unique and >= 0")
        if amps.shape != (ions.size, tones.size):
            raise ConfigError(
                f"amplitude matrix shape {amps.shape} does not match "
                f"(ions, tones) = ({ions.size}, {tones.size})"
            )
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        for arr in (tones, amps, ions):
            arr.flags.writeable = False
        object.__setattr__(self, "tones_hz", tones)
        object.__setattr__(self, "amplitudes_hz", amps)
        object.__setattr__(self, "illuminated", ions)
        tones_ang = TWO_PI * tones
        amps_ang = TWO_PI * amps
        tones_ang.flags.writeable = False
        amps_ang.flags.writeable = False
        object.__setattr__(self, "_tones_angular", tones_ang)
        object.__setattr__(self, "_amps_angular", amps_ang)

    @classmethod
    def from_angular(cls, tones, amplitudes, illuminated, duration, compensation=None):
        """Construct from angular-frequency (rad/s) tone and amplitude values."""
        return cls(
            tones_hz=np.asarray(tones, dtype=float) / TWO_PI,
            amplitudes_hz=np.asarray(amplitudes, dtype=complex) / TWO_PI,
            illuminated=illuminated,
            duration=duration,
            compensation=compensation,
        )

    @property
    def tones(self):
        """Tone frequencies in rad/s."""
        return self._tones_angular

    @property
    def amplitudes(self):
        """Complex Rabi amplitudes in rad/s, shape [M x P]."""
        return self._amps_angular

    @property
    def n_tones(self):
        return self.tones_hz.size

    @property
    def n_illuminated(self):
        return self.illuminated.size

    def full_amplitudes(self, n_ions):
        """Amplitude matrix on all n_ions ions (zero rows for dark ions), rad/s."""
        if np.any(self.illuminated >= n_ions):
            raise ConfigError("illuminated ion index out of range for this chain")
        full = np.zeros((n_ions, self.n_tones), dtype=complex)
        full[self.illuminated] = self.amplitudes
        return full

    def to_json_dict(self):
        doc = {
            "tones_hz": self.tones_hz.tolist(),
            "amplitudes_hz": [
                [{"re": z.real, "im": z.imag} for z in row]
                for row in self.amplitudes_hz
            ],
            "ions": self.illuminated.tolist(),
            "duration_s": self.duration,
        }
        if self.compensation is not None:
            doc["compensation"] = {
                "amplitude_hz": self.compensation.amplitude_hz,
                "detuning_hz": self.compensation.detuning_hz,
                "modeled": True,
            }
        return doc

    @classmethod
    def from_json_dict(cls, doc):
        comp = None
        if doc.get("compensation") is not None:
            comp = BlueToneAnnotation(
                amplitude_hz=float(doc["compensation"]["amplitude_hz"]),
                detuning_hz=float(doc["compensation"]["detuning_hz"]),
            )
        amps = np.array(
            [[complex(c["re"], c["im"]) for c in row] for row in doc["amplitudes_hz"]],
            dtype=complex,
        )
        return cls(
            tones_hz=np.asarray(doc["tones_hz"], dtype=float),
            amplitudes_hz=amps,
            illuminated=np.asarray(doc["ions"], dtype=int),
            duration=float(doc["duration_s"]),
            compensation=comp,
        )


@dataclass(frozen=True)
class DispersiveReport:
    """Dispersive-regime diagnostics for a drive against a mode spectrum."""

    epsilon: np.ndarray          # |eta_im Omega_ip / Delta_pm|, [M x N x P]
    max_epsilon: float
    min_detuning: float          # min |Delta_pm|, rad/s
    spectral_resolution: float   # min_{p!=q} |nu_p - nu_q| * T (inf for P=1)
    threshold: float
    violation: bool


def detunings(drive, modes):
    """Delta[p, m] = omega_m - nu_p in rad/s; errors on an exact sideband hit."""
    delta = modes.freqs[None, :] - drive.tones[:, None]
    hit = np.abs(delta) < RESONANCE_RTOL * modes.freqs[None, :]
    if np.any(hit):
        p, m = np.argwhere(hit)[0]
        raise ResonanceError(
            f"tone {p} is resonant with mode {m} "
            f"(|detuning| < {RESONANCE_RTOL:g} relative)"
        )
    return delta


def epsilon_tensor(drive, modes):
    """Dispersive parameters |eta_im Omega_ip / Delta_pm| for illuminated ions.

    Shape [M x N x P], indexed (illuminated ion, mode, tone).
    """
    eta = modes.require_lamb_dicke()
    delta = detunings(drive, modes)  # [P x N]
    eta_ill = eta[drive.illuminated]  # [M x N]
    # [M,N,P] = |eta[i,m] * Omega[i,p]| / |Delta[p,m]|
    num = np.abs(eta_ill[:, :, None] * drive.amplitudes[:, None, :])
    return num / np.abs(delta.T[None, :, :])


def dispersive_check(drive, modes, threshold=0.1):
    """Evaluate dispersive-regime validity of a drive.

    Flags a violation when the largest dispersive parameter exceeds the
    threshold or when two tones are not spectrally resolved over the drive
    duration (|nu_p - nu_q| T < 2 pi).
    """
    eps = epsilon_tensor(drive, modes)
    delta = detunings(drive, modes)
    if drive.n_tones > 1:
        gaps = np.diff(drive.tones)  # strictly increasing, so adjacent is min
        resolution = float(np.min(gaps) * drive.duration)
    else:
        resolution = math.inf
    max_eps = float(np.max(eps)) if eps.size else 0.0
    return DispersiveReport(
        epsilon=eps,
        max_epsilon=max_eps,
        min_detuning=float(np.min(np.abs(delta))),
        spectral_resolution=resolution,
        threshold=threshold,
        violation=(max_eps > threshold) or (resolution < TWO_PI),
    )


def comb_program(
    modes,
    ions,
    n_tones,
    tone_spacing,
    base_detuning,
    amplitude,
    phase_pattern="uniform",
    duration=1e-3,
    window=None,
):
    """Build an arithmetic tone comb targeting the central mode band.

    The comb center sits base_detuning below the mean of the central-window
    sideband frequencies; tone p is offset by (p - (P-1)/2) * tone_spacing.
    phase_pattern "staggered" multiplies tone p's amplitude by (-1)^p,
    flipping the phase of odd tones.  ions may be "all".
    """
    if n_tones < 1:
        raise ConfigError("n_tones must be >= 1")
    if base_detuning == 0:
        raise ConfigError("base_detuning must be nonzero")
    if phase_pattern not in ("uniform", "staggered"):
        raise ConfigError(f"unknown phase_pattern {phase_pattern!r}")
    n = modes.n
    if isinstance(ions, str):
        if ions != "all":
            raise ConfigError(f"unknown ion selector {ions!r}")
        ions = list(range(n))
    ions = np.asarray(ions, dtype=int)

    if window is None:
        window = central_window(n)
    lo, hi = window
    center = float(np.mean(modes.freqs[lo:hi])) - base_detuning
    offsets = (np.arange(n_tones) - (n_tones - 1) / 2.0) * tone_spacing
    tones = center + offsets
    if np.any(tones <= 0):
        raise ConfigError("comb extends to non-positive frequencies")
    # Hard error on a resonant comb tone.
    if np.any(np.abs(modes.freqs[None, :] - tones[:, None]) < RESONANCE_RTOL * modes.freqs[None, :]):
        raise ResonanceError("comb tone resonant with a mode; shift the detuning")

    signs = np.ones(n_tones)
    if phase_pattern == "staggered":
        signs[1::2] = -1.0
    amps = np.broadcast_to(amplitude * signs, (ions.size, n_tones))
    return DriveProgram.from_angular(
        tones=tones, amplitudes=amps, illuminated=ions, duration=duration
    )


def central_window(n):
    """Sorted-index range (lo, hi) of the central half of the mode spectrum.

    For a 40-mode chain this selects the 20 central modes (indices 10..29)
    that are well isolated from the edge modes.
    """
    lo = n // 4
    return lo, n - lo


def core_window(n):
    """Central quarter of the spectrum, where mode gaps are flattest."""
    lo = 3 * n // 8
    return lo, n - lo


def mean_mode_spacing(modes, window=None):
    """Mean adjacent mode-frequency gap (rad/s) over a sorted-index window.

    Defaults to the core of the spectrum: near-equidistant chains have an
    arch-shaped gap profile and a comb matched to the flat core stays
    resonant over more bands than one matched to the full-window mean.
    """
    lo, hi = core_window(modes.n) if window is None else window
    if hi - lo < 2:
        raise ConfigError("window too small to define a mode spacing")
    return float(np.mean(np.diff(modes.freqs[lo:hi])))

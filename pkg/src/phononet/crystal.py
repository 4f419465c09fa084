"""Ion chain structure: equilibrium positions and transverse normal modes.

The axial trap potential per ion is V(z) = (M/2) (a2 z^2 + a4 z^4) with a
possibly negative quadratic coefficient when the quartic term confines.
Transverse confinement is harmonic at the radial center-of-mass frequency.
"""

from dataclasses import dataclass, replace

import numpy as np

from .constants import COULOMB_E2, HBAR
from .errors import ConfigError, SolverError

_MIRROR_TOL = 1e-9


@dataclass(frozen=True)
class TrapConfig:
    """Static trap parameters for a linear chain.

    axial_quadratic is a2 in rad^2/s^2 (equals omega_z^2 for a purely
    quadratic trap and may be <= 0 when axial_quartic > 0), axial_quartic
    is a4 in rad^2/(s^2 m^2).  wave_number is the effective drive wave
    number along the transverse axis; it may be omitted when Lamb-Dicke
    couplings are fixed via an explicit center-of-mass value instead.
    """

    n_ions: int
    axial_quadratic: float
    axial_quartic: float
    radial_com_freq: float
    ion_mass: float
    wave_number: float | None = None

    def __post_init__(self):
        if self.n_ions < 1:
            raise ConfigError(f"n_ions must be >= 1, got {self.n_ions}")
        if self.radial_com_freq <= 0:
            raise ConfigError("radial_com_freq must be positive")
        if self.ion_mass <= 0:
            raise ConfigError("ion_mass must be positive")
        if self.axial_quartic < 0:
            raise ConfigError("axial_quartic must be >= 0 (unbounded potential)")
        if self.axial_quartic == 0 and self.axial_quadratic <= 0:
            raise ConfigError(
                "axial potential unbounded below: need axial_quadratic > 0 "
                "when axial_quartic = 0"
            )


@dataclass(frozen=True)
class IonChain:
    """Equilibrium positions (m, sorted ascending) plus the trap that produced them."""

    positions: np.ndarray
    trap: TrapConfig

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", pos)
        if pos.shape != (self.trap.n_ions,):
            raise ConfigError("positions shape does not match n_ions")
        if self.trap.n_ions > 1 and not np.all(np.diff(pos) > 0):
            raise ConfigError("positions must be strictly increasing")

    @property
    def spacings(self):
        return np.diff(self.positions)


@dataclass(frozen=True)
class ModeData:
    """Transverse normal-mode structure.

    freqs: mode angular frequencies (rad/s), ascending.
    participation: orthonormal matrix b[i, m] (ion i, mode m).
    eta_scale / lamb_dicke are filled by :func:`lamb_dicke` and are None
    until then.
    """

    freqs: np.ndarray
    participation: np.ndarray
    eta_scale: np.ndarray | None = None
    lamb_dicke: np.ndarray | None = None

    @property
    def n(self):
        return self.freqs.size

    def require_lamb_dicke(self):
        if self.lamb_dicke is None:
            raise ConfigError("Lamb-Dicke couplings not set; call lamb_dicke() first")
        return self.lamb_dicke


def _axial_potential(z, trap):
    """Total axial potential energy (J)."""
    m = trap.ion_mass
    v = 0.5 * m * np.sum(trap.axial_quadratic * z**2 + trap.axial_quartic * z**4)
    dz = z[:, None] - z[None, :]
    np.fill_diagonal(dz, np.inf)
    v += 0.5 * COULOMB_E2 * np.sum(1.0 / np.abs(dz))
    return v


def _axial_gradient(z, trap):
    """Gradient of the total axial potential, dV/dz_i (N)."""
    m = trap.ion_mass
    g = m * (trap.axial_quadratic * z + 2.0 * trap.axial_quartic * z**3)
    dz = z[:, None] - z[None, :]
    np.fill_diagonal(dz, np.inf)
    g -= COULOMB_E2 * np.sum(np.sign(dz) / dz**2, axis=1)
    return g


def _axial_hessian(z, trap):
    """Hessian of the total axial potential (N x N)."""
    m = trap.ion_mass
    dz = z[:, None] - z[None, :]
    np.fill_diagonal(dz, np.inf)
    inv3 = 1.0 / np.abs(dz) ** 3
    h = -2.0 * COULOMB_E2 * inv3
    diag = m * (trap.axial_quadratic + 6.0 * trap.axial_quartic * z**2)
    diag += 2.0 * COULOMB_E2 * np.sum(inv3, axis=1)
    np.fill_diagonal(h, diag)
    return h


def _length_scale(trap):
    """Characteristic inter-ion length from force balance against the trap."""
    scales = []
    if trap.axial_quadratic > 0:
        scales.append((COULOMB_E2 / (trap.ion_mass * trap.axial_quadratic)) ** (1.0 / 3.0))
    if trap.axial_quartic > 0:
        scales.append((COULOMB_E2 / (trap.ion_mass * trap.axial_quartic)) ** 0.2)
    return max(scales)


def _initial_guess(trap):
    n = trap.n_ions
    ell = _length_scale(trap)
    # Empirical minimum-spacing law for quadratic chains; mildly oversized
    # guesses still converge, badly undersized ones can jam the line search.
    spacing = ell * 2.0 / max(n, 2) ** 0.56
    if trap.axial_quadratic < 0 and trap.axial_quartic > 0:
        # Double-well regime: the chain spreads at least out to the wells.
        z_well = np.sqrt(-trap.axial_quadratic / (2.0 * trap.axial_quartic))
        spacing = max(spacing, 2.0 * (z_well + ell) / max(n - 1, 1))
    return (np.arange(n) - (n - 1) / 2.0) * spacing


def equilibrium_positions(trap, force_tol=1e-12, max_iter=200):
    """Solve the axial force-balance equations by damped Newton iteration.

    Starts from an equally spaced symmetric guess; the returned residual
    satisfies max|dV/dz| < force_tol * F_char where F_char is the Coulomb
    force between neighbors at the mean spacing.  Deterministic: identical
    input produces bit-identical output.
    """
    if trap.n_ions == 1:
        # Symmetric potential: the single ion sits at the origin.
        return IonChain(positions=np.zeros(1), trap=trap)

    m = trap.ion_mass

    def force_scale(pos):
        edge = np.max(np.abs(pos))
        trap_force = m * (
            abs(trap.axial_quadratic) * edge + 2.0 * trap.axial_quartic * edge**3
        )
        return max(COULOMB_E2 / np.min(np.diff(pos)) ** 2, trap_force)

    z = _initial_guess(trap)
    grad = _axial_gradient(z, trap)
    pot = _axial_potential(z, trap)
    shift = 0.0
    for _ in range(max_iter):
        f_char = force_scale(z)
        gnorm = np.max(np.abs(grad))
        if gnorm < force_tol * f_char:
            break
        hess = _axial_hessian(z, trap)
        # Levenberg-style shift keeps the step a descent direction where the
        # landscape is non-convex (negative quadratic + quartic traps).
        scale = np.max(np.abs(np.diag(hess)))
        accepted = False
        while not accepted:
            try:
                step = np.linalg.solve(hess + shift * scale * np.eye(len(z)), grad)
            except np.linalg.LinAlgError:
                step = grad / scale
            lam = 1.0
            for _ in range(40):
                z_new = z - lam * step
                if np.all(np.diff(z_new) > 0):
                    p_new = _axial_potential(z_new, trap)
                    # Monotone descent up to round-off in the potential.
                    if p_new < pot + 1e-14 * abs(pot):
                        accepted = True
                        break
                lam *= 0.5
            if accepted:
                shift = shift / 4.0 if shift > 1e-12 else 0.0
            else:
                shift = 1e-6 if shift == 0.0 else shift * 10.0
                if shift > 1e6:
                    raise SolverError(
                        "equilibrium iteration stalled", residual=float(gnorm)
                    )
        z, pot = z_new, p_new
        grad = _axial_gradient(z, trap)
    else:
        raise SolverError(
            f"equilibrium not converged after {max_iter} Newton iterations",
            residual=float(np.max(np.abs(grad))),
        )
    return IonChain(positions=z, trap=trap)


def _relative_spread(spacings):
    mean = np.mean(spacings)
    return float(np.sqrt(np.mean((spacings / mean - 1.0) ** 2)))


def tune_quartic(
    trap, target_spacing, mean_tol=0.01, shape_bounds=(-12.0, 8.0), edge_trim=None
):
    """Find (a2, a4) giving a near-equidistant chain at the target mean spacing.

    Scaling positions by s maps an equilibrium of (a2, a4) to one of
    (a2/s^3, a4/s^5), so the relative spacing spread depends only on the
    shape parameter g = A / B^(3/5) of the dimensionless coefficients.  The
    spread is minimized over the shape alone (1-D search at fixed quartic
    strength) and the mean spacing is then pinned to the target by exact
    rescaling.  The outermost edge_trim ions per side (default N//8, at
    least 1) are excluded from the spread objective: edge spacings cannot
    be equalized by a quartic term and the chain is used through its
    central section.  If the input trap already realizes the target with an
    essentially equidistant chain it is returned unchanged.
    """
    from scipy import optimize

    if trap.n_ions < 3:
        raise ConfigError("tune_quartic requires n_ions >= 3")
    if edge_trim is None:
        edge_trim = max(1, trap.n_ions // 8)
    edge_trim = min(edge_trim, (trap.n_ions - 2) // 2)

    def inner_spread(chain_obj):
        pos = chain_obj.positions
        inner = pos[edge_trim : len(pos) - edge_trim] if edge_trim else pos
        return _relative_spread(np.diff(inner))

    chain = equilibrium_positions(trap)
    sp = chain.spacings
    if abs(np.mean(sp) - target_spacing) <= mean_tol * target_spacing and (
        _relative_spread(sp) < 1e-9
    ):
        return trap

    m = trap.ion_mass
    ell = target_spacing
    unit2 = COULOMB_E2 / (m * ell**3)  # converts dimensionless A to a2
    unit4 = COULOMB_E2 / (m * ell**5)  # converts dimensionless B to a4

    def chain_for(a_coef, b_coef):
        t = replace(trap, axial_quadratic=a_coef * unit2, axial_quartic=b_coef * unit4)
        return equilibrium_positions(t)

    def spread_at(gamma):
        return inner_spread(chain_for(gamma, 1.0))

    res = optimize.minimize_scalar(
        spread_at, bounds=shape_bounds, method="bounded", options={"xatol": 1e-5}
    )
    if not res.success:
        raise SolverError("tune_quartic: spread minimization failed", residual=res.fun)

    gamma = float(res.x)
    mean_ratio = float(np.mean(chain_for(gamma, 1.0).spacings) / ell)
    # Rescale positions by 1/mean_ratio: coefficients pick up mean_ratio^{3,5}.
    tuned = replace(
        trap,
        axial_quadratic=gamma * mean_ratio**3 * unit2,
        axial_quartic=mean_ratio**5 * unit4,
    )
    achieved = float(np.mean(equilibrium_positions(tuned).spacings))
    if abs(achieved - target_spacing) > mean_tol * target_spacing:
        raise SolverError(
            "tune_quartic: mean spacing off target",
            residual=abs(achieved - target_spacing) / target_spacing,
        )
    return tuned


def transverse_modes(chain):
    """Diagonalize the transverse Hessian of the chain.

    The Hessian per unit mass is w_r^2 on the diagonal minus the Coulomb
    curvature matrix; its eigenvalues are the squared mode frequencies.
    Modes are sorted ascending, so the center-of-mass mode (frequency w_r,
    uniform participation) comes last.  Eigenvector signs are fixed by
    making each column's largest-magnitude entry positive.
    """
    trap = chain.trap
    n = trap.n_ions
    z = chain.positions
    dz = z[:, None] - z[None, :]
    np.fill_diagonal(dz, np.inf)
    coupling = COULOMB_E2 / (trap.ion_mass * np.abs(dz) ** 3)
    hess = coupling.copy()
    np.fill_diagonal(hess, trap.radial_com_freq**2 - np.sum(coupling, axis=1))

    w2, vecs = np.linalg.eigh(hess)
    if np.any(w2 <= 0):
        raise SolverError(
            "transverse confinement too weak: non-positive mode frequency",
            residual=float(np.min(w2)),
        )
    for m in range(n):
        col = vecs[:, m]
        if col[np.argmax(np.abs(col))] < 0:
            vecs[:, m] = -col
    return ModeData(freqs=np.sqrt(w2), participation=vecs)


def lamb_dicke(modes, trap, eta_com_override=None):
    """Fill per-mode Lamb-Dicke scales eta_m and couplings eta[i,m] = eta_m b[i,m].

    eta_m = k sqrt(hbar / (2 M w_m)) from the trap's wave number; when
    eta_com_override is given the whole set is rescaled so the
    center-of-mass mode has exactly that value.
    """
    if eta_com_override is None and trap.wave_number is None:
        raise ConfigError("need trap.wave_number or eta_com_override to set Lamb-Dicke couplings")
    if eta_com_override is not None:
        w_com = modes.freqs[-1]
        eta = eta_com_override * np.sqrt(w_com / modes.freqs)
    else:
        eta = trap.wave_number * np.sqrt(HBAR / (2.0 * trap.ion_mass * modes.freqs))
    return replace(
        modes, eta_scale=eta, lamb_dicke=modes.participation * eta[None, :]
    )

"""Command-line pipeline: config ingestion, orchestration, plot-ready exports.

Subcommands: modes, kmatrix, compile, evolve, verify.  One structured JSON
config file drives everything; named presets encode the reference 40-ion
chain and its drive recipes.  All frequencies in configs are ordinary Hz
(converted to angular units at ingestion), durations are seconds.

Exit codes: 0 success, 2 config error, 3 physics-regime violation or
failed verification, 4 numerical non-convergence.
"""

import argparse
import copy
import math
import os
import sys

import numpy as np

from . import compiler, crystal, effective, evolve, oracle, serialize
from .constants import TWO_PI, YB171_MASS, ATOMIC_MASS
from .drive import DriveProgram, comb_program, dispersive_check, mean_mode_spacing
from .errors import ConfigError, InfeasibleError, PhononetError, RegimeError, SolverError

EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_NUMERIC = 4


# --------------------------------------------------------------------------
# Presets: the reference 40-ion chain (radial COM 4 MHz, 3.6 um spacing,
# eta_com 0.1) with the three drive recipes, plus small verification setups.

_TRAP40 = {
    "n_ions": 40,
    "radial_com_freq_hz": 4.0e6,
    "ion_mass_amu": 170.936323,
    "eta_com": 0.1,
    "target_spacing_um": 3.6,
}

_TRAP2 = {
    "n_ions": 2,
    "radial_com_freq_hz": 500e3,
    "axial_freq_hz": 80e3,
    "ion_mass_amu": 170.936323,
    "eta_com": 0.1,
}

PRESETS = {
    "fig1c": {"trap": dict(_TRAP40)},
    "fig2a": {
        "trap": dict(_TRAP40),
        "drive": {
            "type": "comb",
            "ions": [2, 3, 4, 5],
            "n_tones": 2,
            "band": 1,
            "base_detuning_hz": 400e3,
            "amplitude_hz": 250e3,
            "phase_pattern": "uniform",
            "duration_s": 1e-3,
        },
        "effective": {"diagonal_compensation": True},
    },
    "fig2b": {
        "trap": dict(_TRAP40),
        "drive": {
            "type": "comb",
            "ions": [2, 3, 4, 5],
            "n_tones": 2,
            "band": 2,
            "base_detuning_hz": 400e3,
            "amplitude_hz": 250e3,
            "phase_pattern": "uniform",
            "duration_s": 1e-3,
        },
        "effective": {"diagonal_compensation": True},
    },
    "fig2c": {
        "trap": dict(_TRAP40),
        "drive": {
            "type": "comb",
            "ions": [3],
            "n_tones": 6,
            "band": 1,
            "base_detuning_hz": 400e3,
            "amplitude_hz": 250e3,
            "phase_pattern": "staggered",
            "duration_s": 1e-3,
        },
        "effective": {"diagonal_compensation": True},
    },
    "uniform": {
        "trap": dict(_TRAP40),
        "drive": {
            "type": "comb",
            "ions": "all",
            "n_tones": 2,
            "band": 1,
            "base_detuning_hz": 400e3,
            "amplitude_hz": 250e3,
            "phase_pattern": "uniform",
            "duration_s": 1e-3,
        },
    },
    "verify-sweep": {
        "trap": dict(_TRAP2),
        "oracle": {
            "mode": "sweep",
            "fock_cutoff": 3,
            "max_phonons": 2,
            "base_detuning_hz": 47.3e3,
            "duration_s": 8.37e-4,
            "epsilons": [0.02, 0.04, 0.08],
            "drive_ions": [0],
            "infidelity_at": 0.04,
            "infidelity_limit": 1e-2,
            "slope_range": [1.5, 2.5],
        },
    },
    "verify-rabi": {
        "trap": {
            "n_ions": 1,
            "radial_com_freq_hz": 500e3,
            "axial_freq_hz": 100e3,
            "ion_mass_amu": 170.936323,
            "eta_com": 0.1,
        },
        "oracle": {
            "mode": "rabi",
            "fock_cutoff": 2,
            "amplitude_hz": 20e3,
            "steps_per_period": 400,
            "return_threshold": 0.999,
        },
    },
}


# --------------------------------------------------------------------------
# Config validation (strict: unknown keys rejected).

_SCHEMA = {
    "trap": {
        "required": {"n_ions", "radial_com_freq_hz"},
        "optional": {
            "ion_mass_amu",
            "eta_com",
            "raman_wavelength_nm",
            "axial_freq_hz",
            "axial_quadratic",
            "axial_quartic",
            "target_spacing_um",
        },
    },
    "drive": {
        "required": {"type"},
        "optional": {
            "ions",
            "n_tones",
            "band",
            "tone_spacing_hz",
            "base_detuning_hz",
            "amplitude_hz",
            "phase_pattern",
            "duration_s",
            "tones_hz",
            "amplitudes_hz",
            "file",
        },
    },
    "effective": {
        "required": set(),
        "optional": {"diagonal_compensation", "mode_window", "spin_config"},
    },
    "compile": {
        "required": {"target"},
        "optional": {
            "epsilon_cap",
            "restarts",
            "tone_budget",
            "ion_budget",
            "ions",
            "tones_hz",
            "duration_s",
            "tol",
        },
    },
    "evolve": {
        "required": {"input"},
        "optional": {"allow_large"},
    },
    "oracle": {
        "required": {"mode"},
        "optional": {
            "fock_cutoff",
            "max_phonons",
            "base_detuning_hz",
            "duration_s",
            "epsilons",
            "drive_ions",
            "amplitude_hz",
            "steps_per_period",
            "return_threshold",
            "infidelity_at",
            "infidelity_limit",
            "slope_range",
            "steps",
        },
    },
    "output": {"required": set(), "optional": {"formats"}},
}


def validate_config(config):
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(config) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for name, section in config.items():
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be an object")
        spec = _SCHEMA[name]
        bad = set(section) - spec["required"] - spec["optional"]
        if bad:
            raise ConfigError(f"unknown keys in section {name!r}: {sorted(bad)}")
        missing = spec["required"] - set(section)
        if missing:
            raise ConfigError(f"section {name!r} missing keys: {sorted(missing)}")
    return config


def merge_config(preset_name, config_path):
    if preset_name is None and config_path is None:
        raise ConfigError("provide --preset, --config, or both")
    merged = {}
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset_name!r}; available: {sorted(PRESETS)}"
            )
        merged = copy.deepcopy(PRESETS[preset_name])
    if config_path is not None:
        user = serialize.load_json(config_path)
        if not isinstance(user, dict):
            raise ConfigError("config file must contain a JSON object")
        for section, content in user.items():
            if isinstance(content, dict):
                merged.setdefault(section, {}).update(content)
            else:
                merged[section] = content
    return validate_config(merged)


# --------------------------------------------------------------------------
# Section resolution.

_TRAP_DEFAULTS = {"ion_mass_amu": 170.936323, "axial_freq_hz": 50e3}


def resolve_trap(section):
    """TrapConfig from the Hz-unit config section (tuning the quartic when
    a target spacing is requested)."""
    cfg = dict(_TRAP_DEFAULTS)
    cfg.update(section)
    mass = float(cfg["ion_mass_amu"]) * ATOMIC_MASS
    wave_number = None
    if "raman_wavelength_nm" in cfg:
        # Counter-propagating Raman pair: effective k is twice the optical k.
        wave_number = 2.0 * TWO_PI / (float(cfg["raman_wavelength_nm"]) * 1e-9)
    quad = (TWO_PI * float(cfg["axial_freq_hz"])) ** 2
    if "axial_quadratic" in cfg:
        quad = float(cfg["axial_quadratic"])
    trap = crystal.TrapConfig(
        n_ions=int(cfg["n_ions"]),
        axial_quadratic=quad,
        axial_quartic=float(cfg.get("axial_quartic", 0.0)),
        radial_com_freq=TWO_PI * float(cfg["radial_com_freq_hz"]),
        ion_mass=mass,
        wave_number=wave_number,
    )
    if "target_spacing_um" in cfg:
        trap = crystal.tune_quartic(trap, float(cfg["target_spacing_um"]) * 1e-6)
    resolved = dict(cfg)
    resolved["axial_quadratic"] = trap.axial_quadratic
    resolved["axial_quartic"] = trap.axial_quartic
    return trap, resolved


def build_modes(trap, trap_section):
    chain = crystal.equilibrium_positions(trap)
    modes = crystal.transverse_modes(chain)
    eta_com = trap_section.get("eta_com")
    modes = crystal.lamb_dicke(
        modes, trap, eta_com_override=float(eta_com) if eta_com is not None else None
    )
    return chain, modes


def resolve_drive(section, modes):
    kind = section["type"]
    if kind == "explicit":
        doc = {
            "tones_hz": section["tones_hz"],
            "amplitudes_hz": section["amplitudes_hz"],
            "ions": section["ions"],
            "duration_s": section.get("duration_s", 1e-3),
        }
        return DriveProgram.from_json_dict(doc)
    if kind == "file":
        return DriveProgram.from_json_dict(serialize.load_json(section["file"]))
    if kind != "comb":
        raise ConfigError(f"unknown drive type {kind!r}")
    if "tone_spacing_hz" in section:
        spacing = TWO_PI * float(section["tone_spacing_hz"])
    else:
        spacing = float(section.get("band", 1)) * mean_mode_spacing(modes)
    return comb_program(
        modes,
        section.get("ions", "all"),
        int(section.get("n_tones", 2)),
        spacing,
        TWO_PI * float(section.get("base_detuning_hz", 400e3)),
        TWO_PI * float(section.get("amplitude_hz", 250e3)),
        section.get("phase_pattern", "uniform"),
        duration=float(section.get("duration_s", 1e-3)),
    )


# --------------------------------------------------------------------------
# Commands.


def cmd_modes(config, out_dir, seed, force):
    trap, trap_resolved = resolve_trap(config["trap"])
    chain, modes = build_modes(trap, config["trap"])
    serialize.write_csv(
        os.path.join(out_dir, "positions.csv"),
        ["ion", "position_m"],
        serialize.chain_to_rows(chain),
    )
    serialize.write_csv(
        os.path.join(out_dir, "spectrum.csv"),
        ["mode", "freq_rad_s", "freq_hz"],
        serialize.modes_to_spectrum_rows(modes),
    )
    serialize.write_csv(
        os.path.join(out_dir, "participation.csv"),
        ["ion", "mode", "b_im"],
        serialize.modes_to_participation_rows(modes),
    )
    serialize.dump_json(
        {
            "positions_m": chain.positions.tolist(),
            "mode_freqs_hz": (modes.freqs / TWO_PI).tolist(),
            "eta_scale": None if modes.eta_scale is None else modes.eta_scale.tolist(),
        },
        os.path.join(out_dir, "modes.json"),
    )
    return {"trap": trap_resolved}


def _effective_pipeline(config, modes):
    drv = resolve_drive(config["drive"], modes)
    eff_cfg = config.get("effective", {})
    window = eff_cfg.get("mode_window")
    model = effective.build_effective_model(
        drv,
        modes,
        spin_config=eff_cfg.get("spin_config"),
        mode_window=tuple(window) if window is not None else None,
    )
    if eff_cfg.get("diagonal_compensation", False):
        model, drv = effective.diagonal_compensation(model, drv, modes)
    return drv, model


def cmd_kmatrix(config, out_dir, seed, force):
    trap, trap_resolved = resolve_trap(config["trap"])
    chain, modes = build_modes(trap, config["trap"])
    if "drive" not in config:
        raise ConfigError("kmatrix requires a drive section")
    drv, model = _effective_pipeline(config, modes)
    report = dispersive_check(drv, modes)
    if report.violation and not force:
        raise RegimeError(
            f"dispersive check failed (max epsilon {report.max_epsilon:.3g}, "
            f"resolution {report.spectral_resolution:.3g}); use --force to export anyway"
        )
    doc = {
        "k_matrix_hz": serialize.complex_matrix_to_json(model.k_matrix),
        "j_matrix_hz": serialize.complex_matrix_to_json(model.j_matrix),
        "mode_window": list(model.mode_window),
        "duration_s": model.duration,
        "diagonal_compensated": model.diagonal_compensated,
        "max_epsilon": report.max_epsilon,
        "drive": drv.to_json_dict(),
    }
    serialize.dump_json(doc, os.path.join(out_dir, "kmatrix.json"))
    serialize.write_matrix_heatmap_csv(
        os.path.join(out_dir, "heatmap.csv"), model.k_matrix
    )
    return {"trap": trap_resolved, "max_epsilon": report.max_epsilon}


def _compile_target(section, modes, window):
    spec = section["target"]
    n = modes.n
    if isinstance(spec, dict) and spec.get("type") == "band":
        strength = TWO_PI * float(spec.get("strength_hz", 10.0))
        band = int(spec.get("band", 1))
        lo, hi = window
        target = np.zeros((n, n), dtype=complex)
        for m in range(lo, hi - band):
            target[m + band, m] = strength
            target[m, m + band] = strength
        return target
    if isinstance(spec, dict) and spec.get("type") == "file":
        return serialize.complex_matrix_from_json(
            serialize.load_json(spec["path"])["k_matrix_hz"]
        )
    if isinstance(spec, dict) and spec.get("type") == "zero":
        return np.zeros((n, n), dtype=complex)
    raise ConfigError("compile target must be a band/file/zero object")


def cmd_compile(config, out_dir, seed, force):
    trap, trap_resolved = resolve_trap(config["trap"])
    chain, modes = build_modes(trap, config["trap"])
    section = config.get("compile")
    if section is None:
        raise ConfigError("compile requires a compile section")
    from .drive import central_window

    window = central_window(modes.n)
    target = _compile_target(section, modes, window)
    task = compiler.CompileTask(
        target=target,
        fixed_tones=(
            TWO_PI * np.asarray(section["tones_hz"], dtype=float)
            if "tones_hz" in section
            else None
        ),
        fixed_ions=(
            np.asarray(section["ions"], dtype=int) if "ions" in section else None
        ),
        ion_budget=int(section.get("ion_budget", 4)),
        tone_budget=int(section.get("tone_budget", 6)),
        epsilon_cap=float(section.get("epsilon_cap", 0.1)),
        duration=float(section.get("duration_s", 1e-3)),
        tol=float(section.get("tol", compiler.DEFAULT_RESIDUAL_TOL)),
    )
    result = compiler.compile_drive(
        task, modes, seed=seed, restarts=int(section.get("restarts", 8))
    )
    serialize.dump_json(
        result.drive.to_json_dict(), os.path.join(out_dir, "compiled_drive.json")
    )
    serialize.dump_json(
        {
            "residual": result.residual,
            "converged": result.converged,
            "iterations": result.iterations,
            "seed": result.seed,
            "restart_index": result.restart_index,
            "restart_residuals": list(result.restart_residuals),
            "achieved_hz": serialize.complex_matrix_to_json(result.achieved),
            "target_hz": serialize.complex_matrix_to_json(target),
        },
        os.path.join(out_dir, "compile_report.json"),
    )
    if not result.converged and not force:
        raise SolverError(
            f"compilation residual {result.residual:.3g} above tolerance {task.tol}"
        )
    return {"trap": trap_resolved, "residual": result.residual}


def cmd_evolve(config, out_dir, seed, force):
    trap, trap_resolved = resolve_trap(config["trap"])
    chain, modes = build_modes(trap, config["trap"])
    if "drive" not in config or "evolve" not in config:
        raise ConfigError("evolve requires drive and evolve sections")
    drv, model = _effective_pipeline(config, modes)
    section = config["evolve"]
    pattern = evolve.FockPattern(np.asarray(section["input"], dtype=int))
    w = evolve.mode_unitary(model.k_matrix, model.duration)
    serialize.dump_json(w.to_json_dict(), os.path.join(out_dir, "unitary.json"))
    allow = bool(section.get("allow_large", False))
    dist = evolve.output_distribution(w, pattern, allow_large=allow)
    rows = [("|" + ",".join(str(x) for x in pat) + ">", p) for pat, p in dist]
    serialize.write_csv(
        os.path.join(out_dir, "probabilities.csv"), ["pattern", "probability"], rows
    )
    total = float(sum(p for _, p in dist))
    return {"trap": trap_resolved, "probability_sum": total}


def _verify_sweep(section, trap, modes, out_dir):
    from .effective import build_effective_model

    cutoff = int(section.get("fock_cutoff", 3))
    max_ph = int(section.get("max_phonons", 2))
    delta = TWO_PI * float(section.get("base_detuning_hz", 47.3e3))
    duration = float(section.get("duration_s", 8.37e-4))
    epsilons = [float(e) for e in section.get("epsilons", [0.02, 0.04, 0.08])]
    ions = [int(i) for i in section.get("drive_ions", [0])]
    spec = oracle.HilbertSpec(
        n_ions=trap.n_ions, n_modes=modes.n, fock_cutoff=cutoff
    )
    sector = oracle.sector_indices(spec, all_spin_down=True, max_total_phonons=max_ph)

    gap = float(np.mean(np.diff(modes.freqs))) if modes.n > 1 else 0.0
    center = float(np.mean(modes.freqs)) - delta
    if modes.n > 1:
        tones = np.array([center - gap / 2.0, center + gap / 2.0])
    else:
        tones = np.array([center])
    dd = np.abs(modes.freqs[None, :] - tones[:, None])
    eta_over_delta = np.max(
        np.abs(modes.lamb_dicke[ions])[:, None, :] / dd[None, :, :]
    )

    rows = []
    infs = []
    for i, eps in enumerate(sorted(epsilons)):
        amp = eps / eta_over_delta
        amps = np.full((len(ions), tones.size), amp, dtype=complex)
        drv = DriveProgram.from_angular(tones, amps, ions, duration)
        rep = dispersive_check(drv, modes)
        model = build_effective_model(drv, modes)
        exact = oracle.propagate_unitary(
            drv, modes, spec, duration, verify=(i == len(epsilons) - 1),
            steps=section.get("steps"),
        )
        eff = oracle.effective_propagator(model, spec, duration)
        rep_cmp = oracle.compare(exact, eff, spec, sector=sector, epsilon=rep.max_epsilon)
        rows.append(
            (rep.max_epsilon, 1.0 - rep_cmp.fidelity, rep_cmp.trace_distance)
        )
        infs.append(1.0 - rep_cmp.fidelity)
    serialize.write_csv(
        os.path.join(out_dir, "fidelity_vs_epsilon.csv"),
        ["epsilon", "infidelity", "trace_distance"],
        rows,
    )
    eps_arr = np.array(sorted(epsilons))
    slope = float(np.polyfit(np.log(eps_arr), np.log(np.array(infs)), 1)[0])
    lo_s, hi_s = section.get("slope_range", [1.5, 2.5])
    at = float(section.get("infidelity_at", 0.04))
    limit = float(section.get("infidelity_limit", 1e-2))
    inf_at = float(np.interp(at, eps_arr, infs))
    verdict = {
        "slope": slope,
        "slope_range": [lo_s, hi_s],
        "slope_ok": bool(lo_s <= slope <= hi_s),
        "monotone": bool(np.all(np.diff(infs) > 0)),
        "infidelity_at": {str(at): inf_at},
        "infidelity_ok": bool(inf_at < limit),
    }
    verdict["passed"] = bool(
        verdict["slope_ok"] and verdict["monotone"] and verdict["infidelity_ok"]
    )
    return verdict


def _verify_rabi(section, trap, modes, out_dir):
    cutoff = int(section.get("fock_cutoff", 2))
    amp = TWO_PI * float(section.get("amplitude_hz", 20e3))
    steps_per = int(section.get("steps_per_period", 400))
    threshold = float(section.get("return_threshold", 0.999))
    spec = oracle.HilbertSpec(n_ions=1, n_modes=1, fock_cutoff=cutoff)
    w_mode = float(modes.freqs[0])
    eta = float(abs(modes.lamb_dicke[0, 0]))
    drv = DriveProgram.from_angular([w_mode], [[amp]], [0], duration=1.0)
    period = TWO_PI / (eta * amp)
    steps = max(steps_per, oracle.minimum_steps(drv, period))
    idx = spec.index_of([0], [1])
    samples = []

    def observer(t, amp_vec):
        samples.append((t, float(abs(amp_vec[idx]) ** 2)))

    state = oracle.QuantumState.product(spec, [1])
    out = oracle.propagate(
        state, drv, modes, spec, period, steps=steps, observer=observer
    )
    serialize.write_csv(
        os.path.join(out_dir, "rabi.csv"), ["time_s", "population_down_n1"], samples
    )
    final = float(abs(out.amplitudes[idx]) ** 2)
    return {
        "rabi_period_s": period,
        "steps": steps,
        "return_population": final,
        "passed": bool(final > threshold),
    }


def cmd_verify(config, out_dir, seed, force):
    trap, trap_resolved = resolve_trap(config["trap"])
    chain, modes = build_modes(trap, config["trap"])
    section = config.get("oracle")
    if section is None:
        raise ConfigError("verify requires an oracle section")
    mode = section["mode"]
    if mode == "sweep":
        verdict = _verify_sweep(section, trap, modes, out_dir)
    elif mode == "rabi":
        verdict = _verify_rabi(section, trap, modes, out_dir)
    else:
        raise ConfigError(f"unknown oracle mode {mode!r}")
    serialize.dump_json(verdict, os.path.join(out_dir, "verdict.json"))
    if not verdict["passed"] and not force:
        raise RegimeError("verification verdict failed; see verdict.json")
    return {"trap": trap_resolved, "passed": verdict["passed"]}


COMMANDS = {
    "modes": cmd_modes,
    "kmatrix": cmd_kmatrix,
    "compile": cmd_compile,
    "evolve": cmd_evolve,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phononet",
        description="Compile, simulate and verify phonon-mode couplings in ion chains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--preset", default=None, help=f"one of {sorted(PRESETS)}")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--force", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = merge_config(args.preset, args.config)
        os.makedirs(args.out, exist_ok=True)
        extras = COMMANDS[args.command](config, args.out, args.seed, args.force)
        echo = copy.deepcopy(config)
        echo["_resolved"] = {"command": args.command, "seed": args.seed}
        if extras:
            echo["_resolved"].update(
                {k: v for k, v in extras.items() if k != "trap"}
            )
            if "trap" in extras:
                echo["_resolved"]["trap"] = {
                    k: (float(v) if isinstance(v, (int, float)) else v)
                    for k, v in extras["trap"].items()
                }
        serialize.dump_json(echo, os.path.join(args.out, "resolved_config.json"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RegimeError, InfeasibleError) as exc:
        print(f"regime violation: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())

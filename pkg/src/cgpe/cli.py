"""Command-line front end: config-driven experiments with reproducible outputs.

Exit codes: 0 success, 1 numerical failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bdg, continuation, diagnostics, io, radial, splitstep
from .collocation import NonConvergenceError, SingularJacobianError
from .io import ConfigError
from .model import ModelParams, graded_mesh

PRESETS = {
    "desk": {
        "mesh_intervals": 1200,
        "bdg_grid": 600,
        "nx": 256,
        "tau": 0.005,
        "nu_max": 1e-2,
    },
    "paper": {
        "mesh_intervals": 6000,
        "bdg_grid": 600,
        "nx": 1024,
        "tau": 0.001,
        "nu_max": 1e-4,
    },
}


class NumericalFailure(RuntimeError):
    pass


def _get(section, key, cast, default):
    if key not in section:
        return default
    try:
        return cast(section[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def _get_bool(section, key, default):
    if key not in section:
        return default
    val = section[key].strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean for {key}: {section[key]!r}")


def _mesh(params, section, preset):
    n = _get(section, "mesh_intervals", int, preset["mesh_intervals"])
    if n < 4:
        raise ConfigError("mesh_intervals must be at least 4")
    return graded_mesh(params.b, n, params.pump_radius)


def _initial_state(params, section, mesh):
    spec = section.get("guess", "tf")
    if spec == "tf":
        return radial.thomas_fermi_guess(params, mesh) if params.alpha > 0 else None
    if spec.startswith("multibump:"):
        return radial.multi_bump_guess(params, mesh, int(spec.split(":", 1)[1]))
    raise ConfigError(f"unknown guess {spec!r}")


def _solve(params, section, preset, m=0, guess=None):
    mesh = _mesh(params, section, preset)
    if guess is None and m == 0:
        guess = _initial_state(params, section, mesh)
    try:
        return radial.solve_stationary(params, guess=guess, m=m, mesh=mesh)
    except (NonConvergenceError, SingularJacobianError) as exc:
        raise NumericalFailure(f"stationary solve failed: {exc}") from exc


def run_stationary(params, config, out, preset, seed):
    section = config.get("stationary", {})
    m = _get(section, "m", int, 0)
    if params.alpha == 0.0:
        print("warning: alpha = 0, emitting the trivial zero profile")
    profile = _solve(params, section, preset, m=m)
    path = out / "profile.csv"
    io.save_profile_csv(path, profile)
    balance = diagnostics.mass_balance_residual(profile)
    print(f"stationary: m={m} mu={profile.mu:.10g} residual={profile.residual_norm:.3e} "
          f"mass_balance={balance:.3e}")
    return [path]


def run_stability(params, config, out, preset, seed):
    section = config.get("stability", {})
    m_max = _get(section, "m_max", int, 50)
    if m_max < 1:
        raise ConfigError("m_max must be at least 1")
    n_grid = _get(section, "n_grid", int, preset["bdg_grid"])
    winding = _get(section, "winding", int, 0)
    dump_spectra = _get_bool(section, "dump_spectra", False)
    profile = _solve(params, section, preset, m=winding)
    try:
        if winding:
            report = bdg.central_vortex_stability(profile, range(1, m_max + 1),
                                                  n_grid=n_grid,
                                                  keep_spectra=dump_spectra)
        else:
            report = bdg.stability_scan(profile, range(1, m_max + 1),
                                        n_grid=n_grid, keep_spectra=dump_spectra)
    except bdg.EigenSolverError as exc:
        raise NumericalFailure(str(exc)) from exc
    paths = [out / "mode_scan.csv"]
    io.save_mode_scan_csv(paths[0], report)
    if dump_spectra:
        paths.append(out / "spectrum.csv")
        io.save_spectrum_csv(paths[-1], report)
    print(f"stability: verdict {report.verdict} (max Im omega = {report.max_im:+.6e})")
    return paths


def run_curve(params, config, out, preset, seed):
    section = config.get("curve", {})
    if "r_values" in section:
        R_values = [float(tok) for tok in section["r_values"].split(",") if tok.strip()]
    else:
        r_min = _get(section, "r_min", float, 1.0)
        r_max = _get(section, "r_max", float, 9.0)
        r_step = _get(section, "r_step", float, 1.0)
        if r_step <= 0 or r_max < r_min:
            raise ConfigError("curve needs r_min <= r_max and r_step > 0")
        R_values = list(np.arange(r_min, r_max + 0.5 * r_step, r_step))
    if not R_values:
        raise ConfigError("empty R grid")
    m_max = _get(section, "m_max", int, 50)
    if m_max < 1:
        raise ConfigError("m_max must be at least 1")
    n_grid = _get(section, "n_grid", int, preset["bdg_grid"])
    mesh_n = _get(section, "mesh_intervals", int, preset["mesh_intervals"])
    curve = bdg.stability_curve(params, R_values, modes=range(1, m_max + 1),
                                n_grid=n_grid,
                                refine_threshold=_get_bool(section, "bisect", True),
                                solver_kwargs={"n_intervals": mesh_n})
    path = out / "curve.csv"
    io.save_curve_csv(path, curve)
    if curve.threshold_bracket:
        lo, hi = curve.threshold_bracket
        print(f"curve: instability threshold in [{lo:.4g}, {hi:.4g}] "
              f"(estimate {curve.threshold:.4g})")
    else:
        print("curve: no stable->unstable transition bracketed")
    gaps = [pt.R for pt in curve.points if pt.max_im is None]
    if gaps:
        print(f"curve: solve failures at R = {gaps}")
    return [path]


def run_continue(params, config, out, preset, seed):
    section = config.get("continue", {})
    param = section.get("param", "sigma")
    lam_lo = _get(section, "lambda_min", float, None)
    lam_hi = _get(section, "lambda_max", float, None)
    if lam_lo is None or lam_hi is None:
        raise ConfigError("[continue] needs lambda_min and lambda_max")
    if lam_hi <= lam_lo:
        raise ConfigError("lambda_max must exceed lambda_min")
    nu_max = _get(section, "nu_max", float, preset["nu_max"])
    max_points = _get(section, "max_points", int, 2000)
    start = _solve(params, section, preset)
    try:
        problem, branch = continuation.trace_stationary_branch(
            start, param, (lam_lo, lam_hi), nu_max=nu_max, max_points=max_points)
    except (continuation.CorrectorError, continuation.RankDeficientError,
            NonConvergenceError) as exc:
        raise NumericalFailure(f"continuation failed: {exc}") from exc
    paths = [out / "branch.csv"]
    io.save_branch_csv(paths[0], branch)
    if _get_bool(section, "dump_profiles", False):
        prof_dir = out / "profiles"
        prof_dir.mkdir(exist_ok=True)
        stride = max(1, len(branch.points) // 50)
        for i in range(0, len(branch.points), stride):
            prof = problem.profile_at(branch.points[i])
            p = prof_dir / f"point_{i:05d}.csv"
            io.save_profile_csv(p, prof)
            paths.append(p)
    folds = [pt.lam for pt in branch.folds()]
    print(f"continue: {len(branch.points)} points over {param} in "
          f"[{branch.lambdas().min():.4g}, {branch.lambdas().max():.4g}]; "
          f"folds at {folds if folds else 'none'}; termination {branch.termination}")
    return paths


def _initial_field(params, section, shape, domain):
    spec = section.get("ic", "gaussian")
    if spec == "gaussian":
        return splitstep.oscillator_ground_state(shape, domain)
    if spec.startswith("profile:"):
        prof = io.load_profile_csv(spec.split(":", 1)[1])
        return splitstep.field_from_profile(prof, shape, domain)
    if spec.startswith("vortex:"):
        m = int(spec.split(":", 1)[1])
        prof = radial.solve_stationary(params, m=m)
        return splitstep.field_from_profile(prof, shape, domain)
    raise ConfigError(f"unknown initial condition {spec!r}")


def run_evolve(params, config, out, preset, seed):
    section = config.get("evolve", {})
    nx = _get(section, "nx", int, preset["nx"])
    tau = _get(section, "tau", float, preset["tau"])
    t_final = _get(section, "t_final", float, None)
    if t_final is None:
        raise ConfigError("[evolve] needs t_final")
    half_width = _get(section, "half_width", float, params.b)
    noise = _get(section, "noise_amp", float, 0.0)
    n_steps = int(round(t_final / tau))
    snap_steps = _get(section, "snapshot_every", int, max(1, n_steps))
    domain = splitstep.square_domain(half_width)
    field = _initial_field(params, section, (nx, nx), domain)
    try:
        result = splitstep.evolve(field, params, tau, t_final,
                                  snapshot_every=snap_steps,
                                  noise_amplitude=noise, seed=seed)
    except (ValueError, FloatingPointError) as exc:
        raise ConfigError(str(exc)) if isinstance(exc, ValueError) else \
            NumericalFailure(str(exc))
    paths = []
    for i, snap in enumerate(result.snapshots):
        p = out / f"snap_{i:05d}.bin"
        io.save_snapshot(p, snap)
        paths.append(p)
    series = out / "series.csv"
    io.save_timeseries_csv(series, result)
    paths.append(series)
    print(f"evolve: {len(result.snapshots)} snapshots to t={result.final.t:.4g}, "
          f"norm bound violations {result.norm_violations}")
    if not result.completed:
        raise NumericalFailure(f"field became non-finite at t={result.failure_time}")
    return paths


def run_census(params, config, out, preset, seed):
    section = config.get("census", {})
    target = section.get("snapshots", None)
    if target is None:
        raise ConfigError("[census] needs snapshots = <file-or-directory>")
    target = Path(target)
    files = sorted(target.glob("*.bin")) if target.is_dir() else [target]
    if not files:
        raise ConfigError(f"no snapshots found under {target}")
    floor_rel = _get(section, "density_floor_rel", float, 1e-3)
    paths = []
    for f in files:
        field = io.load_snapshot(f)
        census = diagnostics.vortex_census(
            field, density_floor=floor_rel * float(field.density().max()))
        p = out / f"census_{f.stem}.csv"
        io.save_census_csv(p, census)
        paths.append(p)
        print(f"census: {f.name}: {len(census)} vortices, "
              f"total winding {census.total_winding()}")
    return paths


RUNNERS = {
    "stationary": run_stationary,
    "stability": run_stability,
    "curve": run_curve,
    "continue": run_continue,
    "evolve": run_evolve,
    "census": run_census,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cgpe",
        description="Pumped-decaying Gross-Pitaevskii laboratory")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
        p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        config_path = Path(args.config)
        config = io.load_config(config_path)
        params = io.params_from_config(config, base_dir=config_path.parent)
        out = Path(args.out) if args.out else Path(f"cgpe-{args.experiment}")
        out.mkdir(parents=True, exist_ok=True)
        preset = PRESETS[args.preset]
        artifacts = RUNNERS[args.experiment](params, config, out, preset, args.seed)
        io.write_manifest(out, args.experiment,
                          config_path.read_text(encoding="utf-8"),
                          {"preset": args.preset, "seed": args.seed,
                           "argv": list(argv) if argv is not None else sys.argv[1:]},
                          artifacts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, NonConvergenceError, SingularJacobianError,
            bdg.EigenSolverError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

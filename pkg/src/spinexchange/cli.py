"""Command-line interface: experiment dispatch, CSV/JSON serialization, manifests.

All user-facing frequencies are quoted divided by 2*pi in GHz (rates in MHz,
times in ns); the manifest records both the user-facing and the internal
angular values.  Data tables are CSV with '#' header comments; summaries and
manifests are JSON.  Fixed-step runs with the same configuration produce
byte-identical data files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import IntegratorConfig, convergence_check, simulate
from .entanglement import find_peak
from .model import (TWO_PI, SystemParams, check_conditions, default_params, ghz,
                    purcell_coupling, to_ghz)
from .sweeps import (DiffusionSpec, SweepSpec, SweepTable, run_detuning_scan,
                     run_shift_scan, run_sweep, spectral_diffusion_average)

FLOAT_FORMAT = ".10g"

# Keys accepted both as --flags and in a config file ("key = value" lines).
CONFIG_SCHEMA = {
    "q": (float, lambda v: v > 0, "cavity quality factor"),
    "g_ghz": (float, lambda v: v > 0, "cavity coupling /2pi [GHz]"),
    "gamma_mhz": (float, lambda v: v >= 0, "radiative rate per channel [MHz]"),
    "gamma_angular": (bool, None, "interpret gamma as 2pi * value"),
    "omega_opt_thz": (float, lambda v: v > 0, "optical transition /2pi [THz]"),
    "nmax": (int, lambda v: v >= 1, "cavity photon truncation"),
    "dt_ns": (float, lambda v: v > 0, "integrator step upper bound [ns]"),
    "t_end_ns": (float, lambda v: v > 0, "time horizon [ns]"),
    "t_eval_ns": (float, lambda v: v > 0, "averaging evaluation time [ns]; default: peak time"),
    "record_every": (int, lambda v: v >= 1, "steps between recorded samples"),
    "ideal": (bool, None, "lossless case: kappa = gamma = 0"),
    "out_dir": (str, None, "output directory"),
    "format": (str, lambda v: v in ("csv", "both"), "table format: csv or both (adds JSON mirrors)"),
    "jobs": (int, lambda v: v >= 1, "worker processes for sweeps"),
    "points": (int, lambda v: v >= 2, "grid points per scan axis"),
    "points_q": (int, lambda v: v >= 2, "Q-axis grid points"),
    "gamma_inh_ghz": (float, lambda v: v >= 0, "inhomogeneous FWHM /2pi [GHz]"),
    "grid_points": (int, lambda v: v >= 1 and v % 2 == 1, "averaging grid points per axis (odd)"),
    "span_sigma": (float, lambda v: v > 0, "averaging grid half-width [sigma]"),
    "method": (str, lambda v: v in ("rk4_fixed", "rk45_adaptive"), "integrator"),
}

DEFAULTS = {
    "q": 9800.0,
    "g_ghz": 3.0,
    "gamma_mhz": 50.0,
    "gamma_angular": False,
    "omega_opt_thz": 471.0,
    "nmax": 2,
    "dt_ns": 2e-4,
    "t_end_ns": 500.0,
    "t_eval_ns": None,
    "record_every": 100,
    "ideal": False,
    "out_dir": "out",
    "format": "csv",
    "jobs": None,
    "points": 21,
    "points_q": 25,
    "gamma_inh_ghz": 1.0,
    "grid_points": 9,
    "span_sigma": 2.5,
    "method": "rk4_fixed",
}

TRAJECTORY_COLUMNS = ("t_ns", "rho00", "rho01", "rho10", "rho11", "popE_A", "popE_B",
                      "n_photon", "inversion", "concurrence", "weight", "purity")

SWEEP_COLUMNS = ("axis_value", "c_max", "t_max_ns", "min_inversion", "weight_at_peak",
                 "g_eff_ghz", "t_end_ns", "ratio1", "ratio2", "ratio3", "status", "error")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config_file(path: str | Path) -> dict:
    """Flat `key = value` file; '#' comments; unknown keys are rejected."""
    result = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        caster, validator, _ = CONFIG_SCHEMA[key]
        parsed = _parse_bool(value) if caster is bool else caster(value)
        if validator is not None and not validator(parsed):
            raise ValueError(f"{path}:{lineno}: value {value!r} out of range for {key}")
        result[key] = parsed
    return result


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, and explicit flags (flags win).

    Keys set by the file or a flag are tracked in the "_explicit" entry so
    commands can distinguish a requested value from a built-in default (the
    sweep commands use automatic per-point horizons unless t_end_ns was given).
    """
    merged = dict(DEFAULTS)
    explicit = set()
    if getattr(args, "config", None):
        file_cfg = parse_config_file(args.config)
        merged.update(file_cfg)
        explicit |= set(file_cfg)
    for key in CONFIG_SCHEMA:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
            explicit.add(key)
    for key, (_, validator, _) in CONFIG_SCHEMA.items():
        value = merged.get(key)
        if value is not None and validator is not None and not validator(value):
            raise ValueError(f"configuration value {key}={value!r} out of range")
    merged["_explicit"] = explicit
    return merged


def params_from_config(cfg: dict) -> SystemParams:
    gamma = cfg["gamma_mhz"] * 1e-3  # MHz -> 1/ns, plain-rate reading
    if cfg["gamma_angular"]:
        gamma *= TWO_PI
    return default_params(q=cfg["q"], g_ghz=cfg["g_ghz"], ideal=cfg["ideal"],
                          gamma=gamma, n_max=cfg["nmax"],
                          omega_opt=TWO_PI * 1e3 * cfg["omega_opt_thz"])


def integrator_from_config(cfg: dict) -> IntegratorConfig:
    dt = cfg["dt_ns"]
    record_every = cfg["record_every"]
    explicit = cfg.get("_explicit", ())
    if cfg["ideal"] and "dt_ns" not in explicit:
        # without damping, step-level truncation noise on fast coherences
        # accumulates secularly; the default step is tightened so hundreds of
        # nanoseconds stay positive (an explicit --dt-ns always wins)
        dt_safe = 4e-5
        if "record_every" not in explicit:
            record_every = max(1, round(record_every * dt / dt_safe))
        dt = dt_safe
    return IntegratorConfig(dt=dt, t_end=cfg["t_end_ns"],
                            record_every=record_every, method=cfg["method"])


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), FLOAT_FORMAT)


def write_csv(path: Path, comments: list[str], header: tuple[str, ...], rows) -> None:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: str | Path):
    """Parse a CSV written by write_csv back into (comments, header, row dicts)."""
    comments, header, rows = [], None, []
    for raw in Path(path).read_text().splitlines():
        if raw.startswith("#"):
            comments.append(raw[1:].strip())
            continue
        if not raw.strip():
            continue
        cells = raw.split(",")
        if header is None:
            header = tuple(cells)
            continue
        record = {}
        for key, cell in zip(header, cells):
            try:
                record[key] = float(cell)
            except ValueError:
                record[key] = cell
        rows.append(record)
    return comments, header, rows


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, experiment: str, cfg: dict, params: SystemParams | None,
                   files: list[Path], wall_clock_s: float) -> Path:
    manifest = {
        "experiment": experiment,
        "version": __version__,
        "config": {k: cfg.get(k) for k in sorted(CONFIG_SCHEMA)},
        "config_explicit": sorted(cfg.get("_explicit", ())),
        "wall_clock_s": wall_clock_s,
        "files": [{"name": f.name, "sha256": _digest(f), "bytes": f.stat().st_size}
                  for f in files],
    }
    if params is not None:
        manifest["params_internal_rad_per_ns"] = asdict(params)
        manifest["params_user"] = {
            "g_cav_ghz": to_ghz(params.g_cav_A),
            "Omega_L_ghz": to_ghz(params.Omega_L_A),
            "Delta_L_ghz": to_ghz(params.Delta_L_A),
            "Delta_cav_ghz": to_ghz(params.Delta_cav_A),
            "kappa_ghz": to_ghz(params.kappa),
            "gamma_mhz": params.gamma * 1e3,
            "q": params.q,
            "n_max": params.n_max,
        }
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path


def _trajectory_rows(traj):
    for k in range(len(traj.times)):
        yield (traj.times[k], traj.pop00[k], traj.pop01[k], traj.pop10[k],
               traj.pop11[k], traj.popE_A[k], traj.popE_B[k], traj.n_photon[k],
               traj.inversion[k], traj.concurrence[k], traj.weight[k], traj.purity[k])


def _summarize(traj) -> dict:
    t_max, c_max = find_peak(traj.times, traj.concurrence)
    c_max = min(c_max, 1.0)  # parabolic refinement may overshoot a rippled peak
    return {"c_max": c_max, "t_max_ns": t_max,
            "min_inversion": float(traj.inversion.min())}


def _sweep_rows(table: SweepTable, axis_to_user=None):
    convert = axis_to_user or (lambda v: v)
    for row in table.rows:
        yield (convert(row.axis_value), row.c_max, row.t_max, row.min_inversion,
               row.weight_at_peak, to_ghz(row.g_eff), row.t_end,
               row.ratio1, row.ratio2, row.ratio3, row.status, row.error)


def _maybe_json_mirror(cfg: dict, path: Path, header, rows) -> list[Path]:
    if cfg["format"] != "both":
        return []
    mirror = path.with_suffix(".json")
    write_json(mirror, {"columns": list(header),
                        "rows": [[None if isinstance(v, float) and math.isnan(v) else v
                                  for v in row] for row in rows]})
    return [mirror]


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    started = time.perf_counter()
    params = params_from_config(cfg)
    traj = simulate(params, integrator_from_config(cfg))
    out = _out_dir(cfg)
    files = []
    rows = list(_trajectory_rows(traj))
    csv_path = out / "trajectory.csv"
    write_csv(csv_path,
              [f"experiment: simulate (q={cfg['q']}, ideal={cfg['ideal']})",
               "two-emitter spin populations, photon number, inversion, concurrence",
               f"method={traj.method} dt_ns={traj.dt} record_every={traj.record_every}"],
              TRAJECTORY_COLUMNS, rows)
    files.append(csv_path)
    files += _maybe_json_mirror(cfg, csv_path, TRAJECTORY_COLUMNS, rows)
    summary = _summarize(traj)
    summary_path = out / "summary.json"
    write_json(summary_path, summary)
    files.append(summary_path)
    write_manifest(out, "simulate", cfg, params, files, time.perf_counter() - started)
    print(f"c_max={summary['c_max']:.4f} at t_max={summary['t_max_ns']:.2f} ns, "
          f"min inversion {summary['min_inversion']:.4f}")
    return 0


def cmd_fig3(args) -> int:
    cfg = resolve_config(args)
    started = time.perf_counter()
    out = _out_dir(cfg)
    files = []
    summaries = {}
    cases = [("ideal", dict(cfg, ideal=True)),
             ("q9800", dict(cfg, ideal=False, q=9800.0)),
             ("q98000", dict(cfg, ideal=False, q=98000.0))]
    for label, case_cfg in cases:
        params = params_from_config(case_cfg)
        traj = simulate(params, integrator_from_config(case_cfg))
        rows = list(_trajectory_rows(traj))
        path = out / f"fig3_{label}.csv"
        write_csv(path,
                  [f"experiment: fig3/{label} (inversion and concurrence vs time)",
                   f"g_ghz={case_cfg['g_ghz']} q={case_cfg['q']} ideal={case_cfg['ideal']}"],
                  TRAJECTORY_COLUMNS, rows)
        files.append(path)
        files += _maybe_json_mirror(case_cfg, path, TRAJECTORY_COLUMNS, rows)
        summaries[label] = _summarize(traj)
    summary_path = out / "fig3_summary.json"
    write_json(summary_path, summaries)
    files.append(summary_path)
    write_manifest(out, "fig3", cfg, params_from_config(cfg), files,
                   time.perf_counter() - started)
    for label, summary in summaries.items():
        print(f"{label}: c_max={summary['c_max']:.4f} t_max={summary['t_max_ns']:.2f} ns "
              f"min_inv={summary['min_inversion']:.4f}")
    return 0


def cmd_fig4(args) -> int:
    cfg = resolve_config(args)
    started = time.perf_counter()
    out = _out_dir(cfg)
    base = params_from_config(cfg)
    # automatic per-point horizons unless a horizon was requested explicitly
    t_end = cfg["t_end_ns"] if "t_end_ns" in cfg["_explicit"] else None
    factors = tuple(np.linspace(0.5, 2.0, cfg["points"]))
    scans = {}
    for axis in ("Delta_L_factor", "Delta_cav_factor"):
        scans[axis] = run_detuning_scan(
            SweepSpec(base=base, axis=axis, grid=factors, dt=cfg["dt_ns"], t_end=t_end),
            jobs=cfg["jobs"])
    shifts_ghz = np.linspace(-20.0, 20.0, cfg["points"])
    shift_table = run_shift_scan(base, [ghz(v) for v in shifts_ghz],
                                 jobs=cfg["jobs"], dt=cfg["dt_ns"], t_end=t_end)

    files = []
    rows_a, rows_b = [], []
    for i, factor in enumerate(factors):
        row_l = scans["Delta_L_factor"].table.rows[i]
        row_c = scans["Delta_cav_factor"].table.rows[i]
        rows_a.append((factor, to_ghz(factor * base.Delta_L_A), row_l.c_max,
                       to_ghz(factor * base.Delta_cav_A), row_c.c_max,
                       row_l.status, row_c.status))
        rows_b.append((factor, to_ghz(factor * base.Delta_L_A), row_l.t_max,
                       to_ghz(factor * base.Delta_cav_A), row_c.t_max,
                       row_l.status, row_c.status))
    header_a = ("factor", "delta_l_ghz", "c_max_delta_l_scan",
                "delta_cav_ghz", "c_max_delta_cav_scan", "status_l", "status_cav")
    header_b = ("factor", "delta_l_ghz", "t_max_ns_delta_l_scan",
                "delta_cav_ghz", "t_max_ns_delta_cav_scan", "status_l", "status_cav")
    for name, header, rows in (("fig4a", header_a, rows_a), ("fig4b", header_b, rows_b)):
        path = out / f"{name}.csv"
        write_csv(path, [f"experiment: fig4/{name[-1]} (detuning scan at q={cfg['q']})",
                         "one detuning scaled by `factor`, the other fixed at its base value"],
                  header, rows)
        files.append(path)
        files += _maybe_json_mirror(cfg, path, header, rows)
    header_c = ("delta_omega_ghz", "c_max", "status")
    header_d = ("delta_omega_ghz", "t_max_ns", "status")
    rows_c = [(to_ghz(r.axis_value), r.c_max, r.status) for r in shift_table.rows]
    rows_d = [(to_ghz(r.axis_value), r.t_max, r.status) for r in shift_table.rows]
    for name, header, rows in (("fig4c", header_c, rows_c), ("fig4d", header_d, rows_d)):
        path = out / f"{name}.csv"
        write_csv(path, [f"experiment: fig4/{name[-1]} (common transition shift at q={cfg['q']})"],
                  header, rows)
        files.append(path)
        files += _maybe_json_mirror(cfg, path, header, rows)
    summary = {
        "t_max_exponent_delta_l": scans["Delta_L_factor"].exponent,
        "t_max_exponent_delta_cav": scans["Delta_cav_factor"].exponent,
    }
    summary_path = out / "fig4_summary.json"
    write_json(summary_path, summary)
    files.append(summary_path)
    write_manifest(out, "fig4", cfg, base, files, time.perf_counter() - started)
    ok = (scans["Delta_L_factor"].table.all_ok and scans["Delta_cav_factor"].table.all_ok
          and shift_table.all_ok)
    print(f"t_max exponents: Delta_L {summary['t_max_exponent_delta_l']:.3f}, "
          f"Delta_cav {summary['t_max_exponent_delta_cav']:.3f}")
    return 0 if ok else 1


def cmd_fig5(args) -> int:
    cfg = resolve_config(args)
    started = time.perf_counter()
    out = _out_dir(cfg)
    base = params_from_config(cfg)
    files = []

    gamma_grid_ghz = [float(v) for v in (args.gamma_inh_list or "0,0.25,0.5,1,2,4").split(",")]
    rows_a = []
    t_eval = cfg["t_eval_ns"]
    for gamma_ghz in gamma_grid_ghz:
        spec = DiffusionSpec(gamma_inh=ghz(gamma_ghz), grid_points=cfg["grid_points"],
                             span_sigma=cfg["span_sigma"], dt=cfg["dt_ns"],
                             t_eval=t_eval)
        result = spectral_diffusion_average(base, spec, jobs=cfg["jobs"])
        t_eval = result.t_eval  # the unshifted peak time, shared across widths
        rows_a.append((gamma_ghz, result.c_red, result.c_pointwise, result.c_ref,
                       result.t_eval))
    header_a = ("gamma_inh_ghz", "c_red", "c_pointwise", "c_ref", "t_eval_ns")
    path_a = out / "fig5a.csv"
    write_csv(path_a, [f"experiment: fig5/a (averaged concurrence vs inhomogeneous width, "
                       f"q={cfg['q']})",
                       "c_red: concurrence of the averaged state; c_pointwise: weighted "
                       "mean of per-point concurrences"],
              header_a, rows_a)
    files.append(path_a)
    files += _maybe_json_mirror(cfg, path_a, header_a, rows_a)

    g_list = [float(v) for v in (args.g_list or "0.3,1.0,2.0,3.0").split(",")]
    q_grid = tuple(np.logspace(3, 6, cfg["points_q"]))
    t_end_sweep = cfg["t_end_ns"] if "t_end_ns" in cfg["_explicit"] else None
    rows_b, rows_c = [], []
    all_ok = True
    for g_ghz_value in g_list:
        base_g = params_from_config(dict(cfg, g_ghz=g_ghz_value))
        table = run_sweep(SweepSpec(base=base_g, axis="Q", grid=q_grid,
                                    dt=cfg["dt_ns"], t_end=t_end_sweep),
                          jobs=cfg["jobs"])
        all_ok = all_ok and table.all_ok
        for row in table.rows:
            rows_b.append((g_ghz_value, row.axis_value, row.c_max, row.status))
            rows_c.append((g_ghz_value, row.axis_value, row.t_max, row.status))
    header_b = ("g_ghz", "q", "c_max", "status")
    header_c = ("g_ghz", "q", "t_max_ns", "status")
    for name, header, rows in (("fig5b", header_b, rows_b), ("fig5c", header_c, rows_c)):
        path = out / f"{name}.csv"
        write_csv(path, [f"experiment: fig5/{name[-1]} (quality-factor scan per coupling)"],
                  header, rows)
        files.append(path)
        files += _maybe_json_mirror(cfg, path, header, rows)
    write_manifest(out, "fig5", cfg, base, files, time.perf_counter() - started)
    print(f"fig5: {len(rows_a)} diffusion widths, {len(rows_b)} (g, Q) points")
    return 0 if all_ok else 1


def cmd_diffusion(args) -> int:
    cfg = resolve_config(args)
    started = time.perf_counter()
    out = _out_dir(cfg)
    base = params_from_config(cfg)
    spec = DiffusionSpec(gamma_inh=ghz(cfg["gamma_inh_ghz"]), grid_points=cfg["grid_points"],
                         span_sigma=cfg["span_sigma"], dt=cfg["dt_ns"],
                         t_eval=cfg["t_eval_ns"])
    result = spectral_diffusion_average(base, spec, jobs=cfg["jobs"])
    files = []
    header = ("i", "j", "shift_a_ghz", "shift_b_ghz", "weight", "concurrence")
    rows = []
    n = spec.grid_points
    for i in range(n):
        for j in range(n):
            rows.append((i, j, to_ghz(result.offsets[i]), to_ghz(result.offsets[j]),
                         result.weights[i, j], result.point_concurrence[i, j]))
    grid_path = out / "diffusion_grid.csv"
    write_csv(grid_path,
              [f"experiment: diffusion (gamma_inh/2pi = {cfg['gamma_inh_ghz']} GHz, "
               f"q={cfg['q']}, evaluated at t={result.t_eval:.4f} ns)"],
              header, rows)
    files.append(grid_path)
    files += _maybe_json_mirror(cfg, grid_path, header, rows)
    summary = {"c_red": result.c_red, "c_pointwise": result.c_pointwise,
               "c_ref": result.c_ref, "t_eval_ns": result.t_eval,
               "base_c_max": result.base_c_max, "base_t_max_ns": result.base_t_max,
               "outside_mass": result.outside_mass}
    summary_path = out / "diffusion_summary.json"
    write_json(summary_path, summary)
    files.append(summary_path)
    write_manifest(out, "diffusion", cfg, base, files, time.perf_counter() - started)
    print(f"c_red={result.c_red:.4f} (pointwise {result.c_pointwise:.4f}, "
          f"center {result.c_ref:.4f}) at t={result.t_eval:.2f} ns")
    return 0


def cmd_conditions(args) -> int:
    cfg = resolve_config(args)
    params = params_from_config(cfg)
    report = check_conditions(params)
    out = _out_dir(cfg)
    payload = {"ratio1": report.ratio1, "ratio2": report.ratio2, "ratio3": report.ratio3,
               "threshold": report.threshold,
               "satisfied_1": report.satisfied_1, "satisfied_2": report.satisfied_2,
               "satisfied_3": report.satisfied_3, "all_satisfied": report.all_satisfied}
    write_json(out / "conditions.json", payload)
    print("regime ratios (want 1, 2 large; 3 below one):")
    print(f"  1: Delta_L / Omega_L                = {report.ratio1:10.3f}  "
          f"[{'ok' if report.satisfied_1 else 'FAIL'}]")
    print(f"  2: |Delta_cav - Delta_L| / max(...) = {report.ratio2:10.3f}  "
          f"[{'ok' if report.satisfied_2 else 'FAIL'}]")
    print(f"  3: detuning^2 gamma_rad / (g Omega)^2 = {report.ratio3:8.3f}  "
          f"[{'ok' if report.satisfied_3 else 'FAIL'}]")
    return 0


def cmd_purcell(args) -> int:
    omega = TWO_PI * 1e3 * args.omega_thz
    g = purcell_coupling(args.purcell_factor, args.q_meas, args.tau_ns,
                         args.debye_waller, omega)
    print(f"g_cav/2pi = {to_ghz(g):.3g} GHz")
    return 0


def cmd_convergence(args) -> int:
    cfg = resolve_config(args)
    params = params_from_config(cfg)
    icfg = integrator_from_config(cfg)
    report = convergence_check(params, icfg)
    out = _out_dir(cfg)
    payload = {"photon_truncation_deviation": report.photon_truncation_deviation,
               "step_halving_deviation": report.step_halving_deviation,
               "photon_converged": report.photon_converged,
               "step_converged": report.step_converged,
               "passed": report.passed}
    write_json(out / "convergence.json", payload)
    print(f"photon truncation deviation: {report.photon_truncation_deviation:.3e} "
          f"[{'ok' if report.photon_converged else 'FAIL'}]")
    print(f"step halving deviation:      {report.step_halving_deviation:.3e} "
          f"[{'ok' if report.step_converged else 'FAIL'}]")
    return 0 if report.passed else 1


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file; flags override it")
    parser.add_argument("--q", type=float, help="cavity quality factor")
    parser.add_argument("--g-ghz", dest="g_ghz", type=float, help="g_cav/2pi [GHz]")
    parser.add_argument("--gamma-mhz", dest="gamma_mhz", type=float,
                        help="radiative rate per channel [MHz]")
    parser.add_argument("--gamma-angular", dest="gamma_angular", action="store_const",
                        const=True, help="read gamma as an angular frequency (2pi * value)")
    parser.add_argument("--omega-opt-thz", dest="omega_opt_thz", type=float,
                        help="optical transition frequency/2pi [THz]")
    parser.add_argument("--nmax", type=int, help="photon truncation")
    parser.add_argument("--dt-ns", dest="dt_ns", type=float, help="step upper bound [ns]")
    parser.add_argument("--t-end-ns", dest="t_end_ns", type=float, help="horizon [ns]")
    parser.add_argument("--record-every", dest="record_every", type=int,
                        help="steps between recorded samples")
    parser.add_argument("--method", choices=("rk4_fixed", "rk45_adaptive"))
    parser.add_argument("--ideal", action="store_const", const=True,
                        help="lossless case kappa = gamma = 0")
    parser.add_argument("--out-dir", dest="out_dir", help="output directory")
    parser.add_argument("--format", choices=("csv", "both"),
                        help="table output: csv, or both (adds JSON mirrors)")
    parser.add_argument("--jobs", type=int, help="worker processes for sweeps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinexchange",
        description="Cavity-mediated spin exchange between two three-level emitters: "
                    "dissipative dynamics, concurrence, and parameter sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="single trajectory from |0_A, 1_B, vacuum>")
    _add_common_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fig3", help="inversion/concurrence dynamics: lossless, Q=9800, Q=98000")
    _add_common_flags(p)
    p.set_defaults(func=cmd_fig3)

    p = sub.add_parser("fig4", help="detuning scans and common transition-shift scans")
    _add_common_flags(p)
    p.add_argument("--points", type=int, help="grid points per axis")
    p.set_defaults(func=cmd_fig4)

    p = sub.add_parser("fig5", help="inhomogeneous averaging plus Q scans per coupling")
    _add_common_flags(p)
    p.add_argument("--points-q", dest="points_q", type=int, help="Q-axis grid points")
    p.add_argument("--g-list", dest="g_list", help="comma list of g/2pi values [GHz]")
    p.add_argument("--gamma-inh-list", dest="gamma_inh_list",
                   help="comma list of inhomogeneous widths [GHz]")
    p.add_argument("--grid-points", dest="grid_points", type=int,
                   help="averaging grid points per axis (odd)")
    p.add_argument("--span-sigma", dest="span_sigma", type=float,
                   help="grid half-width in standard deviations")
    p.add_argument("--t-eval-ns", dest="t_eval_ns", type=float,
                   help="averaging evaluation time; defaults to the unshifted peak time")
    p.set_defaults(func=cmd_fig5)

    p = sub.add_parser("diffusion", help="single Gaussian-averaging run at one width")
    _add_common_flags(p)
    p.add_argument("--gamma-inh-ghz", dest="gamma_inh_ghz", type=float,
                   help="inhomogeneous FWHM/2pi [GHz]")
    p.add_argument("--grid-points", dest="grid_points", type=int,
                   help="averaging grid points per axis (odd)")
    p.add_argument("--span-sigma", dest="span_sigma", type=float,
                   help="grid half-width in standard deviations")
    p.add_argument("--t-eval-ns", dest="t_eval_ns", type=float,
                   help="evaluation time; defaults to the unshifted peak time")
    p.set_defaults(func=cmd_diffusion)

    p = sub.add_parser("conditions", help="dispersive-regime validity ratios")
    _add_common_flags(p)
    p.set_defaults(func=cmd_conditions)

    p = sub.add_parser("purcell", help="coherent coupling from measured Purcell enhancement")
    p.add_argument("purcell_factor", type=float)
    p.add_argument("q_meas", type=float, help="quality factor of the measured cavity")
    p.add_argument("tau_ns", type=float, help="excited-state lifetime [ns]")
    p.add_argument("debye_waller", type=float)
    p.add_argument("omega_thz", type=float, help="transition frequency/2pi [THz]")
    p.set_defaults(func=cmd_purcell)

    p = sub.add_parser("convergence", help="photon-truncation and step-size refinement check")
    _add_common_flags(p)
    p.set_defaults(func=cmd_convergence)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

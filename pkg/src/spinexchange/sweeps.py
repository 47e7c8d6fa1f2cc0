"""Parameter-sweep engine: axis scans, transition-shift scans, and inhomogeneous averaging.

Grid points are independent runs; the engine maps them over a process pool and
reassembles rows in grid order, so tables are deterministic for fixed inputs
regardless of worker count or scheduling.  Per-point failures are recorded in
the row instead of aborting the table.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import (IntegratorConfig, initial_state, propagate_to, simulate,
                       stable_dt)
from .entanglement import QubitState, concurrence, find_peak, reduce_to_qubits
from .hilbert import assert_density_matrix
from .model import (EffectiveCouplingError, SystemParams, build_collapse_operators,
                    build_rotating_hamiltonian, check_conditions, effective_coupling,
                    kappa_from_q)

MAX_WORKERS_ENV = "SPINEXCHANGE_MAX_WORKERS"

SWEEP_AXES = ("Q", "Delta_L_factor", "Delta_cav_factor", "delta_shift_common", "g_cav")

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
_MAX_OUTSIDE_MASS = 0.01


class DiffusionGridError(ValueError):
    """Raised when the averaging grid leaves too much Gaussian mass uncovered."""


def resolve_jobs(jobs: int | None, n_tasks: int) -> int:
    """Worker count: explicit argument, then the environment cap, then CPU count."""
    if jobs is None:
        env = os.environ.get(MAX_WORKERS_ENV)
        jobs = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(jobs, n_tasks))


def _parallel_map(func, tasks, jobs):
    if jobs <= 1:
        return [func(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: a base parameter set, an axis, and an ordered grid.

    `t_end=None` selects the automatic horizon 3*pi/(2|g_eff|) per point
    (scaled by `horizon_factor`/3), so slow-exchange points still cover their
    first concurrence peak.  `record_target` sets the approximate number of
    recorded samples per run.
    """

    base: SystemParams
    axis: str
    grid: tuple[float, ...]
    t_end: float | None = None
    dt: float = 2e-4
    record_target: int = 4000
    horizon_factor: float = 3.0

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        grid = tuple(float(v) for v in self.grid)
        if len(grid) == 0:
            raise ValueError("grid must be nonempty")
        diffs = np.diff(grid)
        if len(grid) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("grid must be strictly monotone")
        object.__setattr__(self, "grid", grid)
        if self.horizon_factor <= 0 or self.record_target < 8:
            raise ValueError("horizon_factor must be positive and record_target >= 8")


@dataclass(frozen=True)
class SweepRow:
    """One grid point: peak entanglement figures plus regime diagnostics."""

    axis_value: float
    c_max: float = math.nan
    t_max: float = math.nan
    min_inversion: float = math.nan
    weight_at_peak: float = math.nan
    g_eff: float = math.nan
    t_end: float = math.nan
    ratio1: float = math.nan
    ratio2: float = math.nan
    ratio3: float = math.nan
    status: str = "ok"
    error: str = ""
    wall_time_s: float = 0.0  # diagnostic only; excluded from serialized tables


@dataclass(frozen=True)
class SweepTable:
    axis: str
    rows: tuple[SweepRow, ...]

    @property
    def ok_rows(self) -> tuple[SweepRow, ...]:
        return tuple(r for r in self.rows if r.status == "ok")

    @property
    def all_ok(self) -> bool:
        return all(r.status == "ok" for r in self.rows)


def params_for_point(base: SystemParams, axis: str, value: float) -> SystemParams:
    """Substitute one axis value into the base parameters.

    Default retuning policy: a change of Q or g_cav recomputes the cavity
    detuning as 9 g + 2 kappa (and for g_cav also re-ties Omega_L = g_cav and
    Delta_L = 9 g); detuning factors scale one detuning with the other held at
    its base value; delta_shift_common shifts both transitions together.
    """
    if axis == "Q":
        kappa = kappa_from_q(base.omega_opt, value)
        return replace(base, q=value, kappa=None,
                       Delta_cav_A=9.0 * base.g_cav_A + 2.0 * kappa,
                       Delta_cav_B=9.0 * base.g_cav_B + 2.0 * kappa)
    if axis == "g_cav":
        return replace(base,
                       g_cav_A=value, g_cav_B=value,
                       Omega_L_A=value, Omega_L_B=value,
                       Delta_L_A=9.0 * value, Delta_L_B=9.0 * value,
                       Delta_cav_A=9.0 * value + 2.0 * base.kappa,
                       Delta_cav_B=9.0 * value + 2.0 * base.kappa)
    if axis == "Delta_L_factor":
        return replace(base, Delta_L_A=value * base.Delta_L_A,
                       Delta_L_B=value * base.Delta_L_B)
    if axis == "Delta_cav_factor":
        return replace(base, Delta_cav_A=value * base.Delta_cav_A,
                       Delta_cav_B=value * base.Delta_cav_B)
    if axis == "delta_shift_common":
        return replace(base, delta_shift_A=value, delta_shift_B=value)
    raise ValueError(f"unknown axis {axis!r}")


def _evaluate_point(task) -> SweepRow:
    spec, value = task
    started = time.perf_counter()
    try:
        params = params_for_point(spec.base, spec.axis, value)
        g_eff = effective_coupling(params)
        if spec.t_end is not None:
            t_end = spec.t_end
        else:
            t_end = spec.horizon_factor * math.pi / (2.0 * abs(g_eff))
        dt = min(spec.dt, stable_dt(build_rotating_hamiltonian(params),
                                    build_collapse_operators(params)))
        record_every = max(1, round(t_end / (spec.record_target * dt)))
        cfg = IntegratorConfig(dt=dt, t_end=t_end, record_every=record_every)
        traj = simulate(params, cfg)
        t_max, c_max = find_peak(traj.times, traj.concurrence)
        c_max = min(c_max, 1.0)  # parabolic refinement may overshoot a rippled peak
        peak_index = int(np.argmin(np.abs(traj.times - t_max)))
        report = check_conditions(params)
        return SweepRow(
            axis_value=value, c_max=c_max, t_max=t_max,
            min_inversion=float(traj.inversion.min()),
            weight_at_peak=float(traj.weight[peak_index]),
            g_eff=g_eff, t_end=t_end,
            ratio1=report.ratio1, ratio2=report.ratio2, ratio3=report.ratio3,
            wall_time_s=time.perf_counter() - started)
    except (EffectiveCouplingError, ValueError, RuntimeError) as exc:
        return SweepRow(axis_value=value, status="error",
                        error=f"{type(exc).__name__}: {exc}",
                        wall_time_s=time.perf_counter() - started)


def run_sweep(spec: SweepSpec, jobs: int | None = None) -> SweepTable:
    """Evaluate every grid point; rows come back in grid order."""
    tasks = [(spec, value) for value in spec.grid]
    jobs = resolve_jobs(jobs, len(tasks))
    rows = _parallel_map(_evaluate_point, tasks, jobs)
    return SweepTable(axis=spec.axis, rows=tuple(rows))


@dataclass(frozen=True)
class DetuningScanResult:
    table: SweepTable
    exponent: float
    fit_points: int


def run_detuning_scan(spec: SweepSpec, jobs: int | None = None) -> DetuningScanResult:
    """Detuning-factor sweep plus the scaling exponent of t_max over the upper half.

    The exponent is the log-log least-squares slope of t_max against the varied
    detuning, fitted over grid values at or above the median.
    """
    if spec.axis not in ("Delta_L_factor", "Delta_cav_factor"):
        raise ValueError("detuning scans use axis Delta_L_factor or Delta_cav_factor")
    table = run_sweep(spec, jobs=jobs)
    base_detuning = (spec.base.Delta_L_A if spec.axis == "Delta_L_factor"
                     else spec.base.Delta_cav_A)
    median = float(np.median(spec.grid))
    upper = [r for r in table.ok_rows
             if r.axis_value >= median and math.isfinite(r.t_max) and r.t_max > 0]
    if len(upper) < 2:
        return DetuningScanResult(table=table, exponent=math.nan, fit_points=len(upper))
    x = np.log([r.axis_value * base_detuning for r in upper])
    y = np.log([r.t_max for r in upper])
    exponent = float(np.polyfit(x, y, 1)[0])
    return DetuningScanResult(table=table, exponent=exponent, fit_points=len(upper))


def run_shift_scan(base: SystemParams, shifts, jobs: int | None = None,
                   t_end: float | None = None, dt: float = 2e-4,
                   record_target: int = 4000, horizon_factor: float = 3.0) -> SweepTable:
    """Common-mode transition-shift scan: both emitters move by the same offset."""
    spec = SweepSpec(base=base, axis="delta_shift_common", grid=tuple(shifts),
                     t_end=t_end, dt=dt, record_target=record_target,
                     horizon_factor=horizon_factor)
    return run_sweep(spec, jobs=jobs)


@dataclass(frozen=True)
class DiffusionSpec:
    """Gaussian averaging of quasi-static transition shifts on a 2-D grid.

    `gamma_inh` is the FWHM of the Gaussian envelope (angular, rad/ns) unless
    `width_is_sigma` is set.  The grid covers +-`span_sigma` standard
    deviations per axis with an odd number of points so the unshifted center is
    included.  `t_eval=None` evaluates at the concurrence-peak time of the
    unshifted run.
    """

    gamma_inh: float
    grid_points: int = 9
    span_sigma: float = 2.5
    t_eval: float | None = None
    width_is_sigma: bool = False
    dt: float = 2e-4

    def __post_init__(self):
        if self.gamma_inh < 0:
            raise ValueError("gamma_inh must be >= 0")
        if self.grid_points < 1 or self.grid_points % 2 == 0:
            raise ValueError("grid_points must be odd so the center point is included")
        if self.span_sigma <= 0:
            raise ValueError("span_sigma must be positive")

    @property
    def sigma(self) -> float:
        return self.gamma_inh if self.width_is_sigma else self.gamma_inh * _FWHM_TO_SIGMA


@dataclass
class DiffusionResult:
    """Averaged state and concurrence figures for one inhomogeneous width."""

    c_red: float
    c_pointwise: float
    c_ref: float
    qubit_state: QubitState
    rho_avg: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray
    point_concurrence: np.ndarray
    t_eval: float
    base_c_max: float
    base_t_max: float
    outside_mass: float


def gaussian_grid(spec: DiffusionSpec) -> tuple[np.ndarray, np.ndarray, float]:
    """Offsets [rad/ns], normalized 1-D weights, and the uncovered 2-D mass.

    Each grid point represents a cell of one grid spacing; the uncovered mass
    is the 2-D Gaussian probability beyond the outer cell edges.
    """
    n = spec.grid_points
    xs = np.linspace(-spec.span_sigma, spec.span_sigma, n) if n > 1 else np.zeros(1)
    weights = np.exp(-0.5 * xs ** 2)
    weights /= weights.sum()
    if spec.sigma == 0.0 or n == 1:
        return np.zeros(n), weights, 0.0
    half_cell = 0.5 * (xs[1] - xs[0])
    edge = spec.span_sigma + half_cell
    covered_1d = math.erf(edge / math.sqrt(2.0))
    outside = 1.0 - covered_1d ** 2
    return xs * spec.sigma, weights, outside


def _evaluate_shift_point(task):
    params, t_eval, dt = task
    hamiltonian = build_rotating_hamiltonian(params)
    jumps = build_collapse_operators(params)
    return propagate_to(initial_state(params), hamiltonian, jumps, t_eval, dt=dt)


def spectral_diffusion_average(base: SystemParams, spec: DiffusionSpec,
                               jobs: int | None = None) -> DiffusionResult:
    """Average the full density matrix over independent per-emitter shifts.

    Evaluates rho(shift_A, shift_B) at a single time on the weighted grid,
    averages the matrices, and reports the concurrence of the average (c_red).
    The weighted mean of per-point concurrences is returned alongside as
    c_pointwise; it discards inter-point phase randomization and is therefore
    an upper estimate.

    Every grid point is evolved explicitly: the |0_A, 1_B> starting state
    breaks the emitter exchange symmetry, so rho(x, y) cannot be obtained from
    rho(y, x) by relabeling.
    """
    offsets, weights_1d, outside = gaussian_grid(spec)
    if outside > _MAX_OUTSIDE_MASS:
        raise DiffusionGridError(
            f"{100 * outside:.2f}% of the Gaussian mass falls outside the grid; "
            "widen span_sigma or add grid points")
    n = spec.grid_points
    center = n // 2

    if spec.t_eval is not None:
        t_eval = spec.t_eval
        base_c_max = math.nan
        base_t_max = math.nan
    else:
        g_eff = effective_coupling(base)
        horizon = 3.0 * math.pi / (2.0 * abs(g_eff))
        dt = min(spec.dt, stable_dt(build_rotating_hamiltonian(base),
                                    build_collapse_operators(base)))
        record_every = max(1, round(horizon / (4000 * dt)))
        traj = simulate(base, IntegratorConfig(dt=dt, t_end=horizon,
                                               record_every=record_every))
        base_t_max, base_c_max = find_peak(traj.times, traj.concurrence)
        t_eval = base_t_max

    if spec.sigma == 0.0:
        keys = [(center, center)]  # all offsets identical: one evaluation suffices
    else:
        keys = [(i, j) for i in range(n) for j in range(n)]
    tasks = [(replace(base,
                      delta_shift_A=base.delta_shift_A + offsets[i],
                      delta_shift_B=base.delta_shift_B + offsets[j]),
              t_eval, spec.dt) for i, j in keys]
    jobs = resolve_jobs(jobs, len(tasks))
    states = _parallel_map(_evaluate_shift_point, tasks, jobs)
    state_by_key = dict(zip(keys, states))

    if spec.sigma == 0.0:
        # degenerate grid: every point is the unshifted state, so the average
        # is that state exactly (bitwise), not a weighted re-summation of it
        rho_avg = state_by_key[(center, center)].copy()
        c_center = concurrence(reduce_to_qubits(rho_avg, base.space))
        point_c = np.full((n, n), c_center)
        c_pointwise = c_center
    else:
        rho_avg = np.zeros_like(states[0])
        point_c = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                rho = state_by_key[(i, j)]
                rho_avg += (weights_1d[i] * weights_1d[j]) * rho
                point_c[i, j] = concurrence(reduce_to_qubits(rho, base.space))
        c_pointwise = float((np.outer(weights_1d, weights_1d) * point_c).sum())

    assert_density_matrix(rho_avg)
    qubit_avg = reduce_to_qubits(rho_avg, base.space)
    c_red = concurrence(qubit_avg)
    return DiffusionResult(
        c_red=c_red, c_pointwise=c_pointwise, c_ref=float(point_c[center, center]),
        qubit_state=qubit_avg, rho_avg=rho_avg, offsets=offsets,
        weights=np.outer(weights_1d, weights_1d), point_concurrence=point_c,
        t_eval=t_eval, base_c_max=base_c_max, base_t_max=base_t_max,
        outside_mass=outside)

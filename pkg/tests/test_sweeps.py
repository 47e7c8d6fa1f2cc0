import math
from dataclasses import replace

import numpy as np
import pytest

from spinexchange.dynamics import IntegratorConfig, initial_state, propagate_to, simulate
from spinexchange.entanglement import find_peak
from spinexchange.hilbert import assert_density_matrix
from spinexchange.model import (build_collapse_operators, build_rotating_hamiltonian,
                                default_params, effective_coupling, ghz, kappa_from_q)
from spinexchange.hilbert import swap_emitters
from spinexchange.sweeps import (DiffusionGridError, DiffusionSpec, SweepSpec,
                                 gaussian_grid, params_for_point, run_detuning_scan,
                                 run_shift_scan, run_sweep, spectral_diffusion_average)

BASE = default_params(9800.0)
FAST = dict(t_end=4.0, record_target=400)  # short horizons keep unit tests quick


class TestParamsForPoint:
    def test_q_axis_recomputes_cavity_detuning(self):
        p = params_for_point(BASE, "Q", 98000.0)
        kappa = kappa_from_q(BASE.omega_opt, 98000.0)
        assert math.isclose(p.kappa, kappa, rel_tol=1e-12)
        assert math.isclose(p.Delta_cav_A, 9.0 * BASE.g_cav_A + 2.0 * kappa, rel_tol=1e-12)
        assert p.Delta_L_A == BASE.Delta_L_A  # laser detuning untouched

    def test_g_axis_reties_working_point(self):
        g_new = ghz(1.0)
        p = params_for_point(BASE, "g_cav", g_new)
        assert p.g_cav_A == p.Omega_L_A == g_new
        assert math.isclose(p.Delta_L_A, 9.0 * g_new, rel_tol=1e-12)
        assert math.isclose(p.Delta_cav_A, 9.0 * g_new + 2.0 * BASE.kappa, rel_tol=1e-12)

    def test_detuning_factor_axes(self):
        p = params_for_point(BASE, "Delta_L_factor", 1.5)
        assert math.isclose(p.Delta_L_A, 1.5 * BASE.Delta_L_A, rel_tol=1e-12)
        assert p.Delta_cav_A == BASE.Delta_cav_A
        p = params_for_point(BASE, "Delta_cav_factor", 0.8)
        assert math.isclose(p.Delta_cav_A, 0.8 * BASE.Delta_cav_A, rel_tol=1e-12)
        assert p.Delta_L_A == BASE.Delta_L_A

    def test_shift_axis(self):
        p = params_for_point(BASE, "delta_shift_common", ghz(5.0))
        assert p.delta_shift_A == p.delta_shift_B == ghz(5.0)


class TestSweepSpec:
    def test_rejects_empty_or_nonmonotone_grid(self):
        with pytest.raises(ValueError):
            SweepSpec(base=BASE, axis="Q", grid=())
        with pytest.raises(ValueError):
            SweepSpec(base=BASE, axis="Q", grid=(1.0, 3.0, 2.0))

    def test_rejects_unknown_axis(self):
        with pytest.raises(ValueError):
            SweepSpec(base=BASE, axis="laser_power", grid=(1.0,))


class TestRunSweep:
    def test_single_point_matches_direct_run(self):
        spec = SweepSpec(base=BASE, axis="Q", grid=(9800.0,), **FAST)
        table = run_sweep(spec, jobs=1)
        assert table.all_ok and len(table.rows) == 1
        row = table.rows[0]

        params = params_for_point(BASE, "Q", 9800.0)
        from spinexchange.dynamics import stable_dt
        dt = min(2e-4, stable_dt(build_rotating_hamiltonian(params),
                                 build_collapse_operators(params)))
        record_every = max(1, round(FAST["t_end"] / (FAST["record_target"] * dt)))
        traj = simulate(params, IntegratorConfig(dt=dt, t_end=FAST["t_end"],
                                                 record_every=record_every))
        t_max, c_max = find_peak(traj.times, traj.concurrence)
        assert row.c_max == c_max
        assert row.t_max == t_max
        assert row.min_inversion == float(traj.inversion.min())

    def test_rows_keep_grid_order_and_failures_recorded(self):
        # the dressed-resonant point fails per-row without aborting the table
        ideal = default_params(ideal=True)
        resonant = (ideal.Delta_L_A + 2 * ideal.g_cav_A ** 2 / ideal.Delta_L_A) \
            / ideal.Delta_cav_A
        spec = SweepSpec(base=ideal, axis="Delta_cav_factor",
                         grid=(resonant, 2.0), **FAST)
        table = run_sweep(spec, jobs=1)
        assert [r.axis_value for r in table.rows] == [resonant, 2.0]
        assert table.rows[0].status == "error"
        assert "resonant" in table.rows[0].error
        assert table.rows[1].status == "ok"
        assert not table.all_ok

    def test_deterministic_across_worker_counts(self):
        spec = SweepSpec(base=BASE, axis="Q", grid=(9800.0, 98000.0), **FAST)
        serial = run_sweep(spec, jobs=1)
        parallel = run_sweep(spec, jobs=2)
        for a, b in zip(serial.rows, parallel.rows):
            assert (a.axis_value, a.c_max, a.t_max, a.min_inversion, a.weight_at_peak,
                    a.g_eff, a.ratio1, a.ratio2, a.ratio3, a.status) == \
                   (b.axis_value, b.c_max, b.t_max, b.min_inversion, b.weight_at_peak,
                    b.g_eff, b.ratio1, b.ratio2, b.ratio3, b.status)

    def test_auto_horizon_scales_with_coupling(self):
        spec = SweepSpec(base=BASE, axis="Q", grid=(9800.0, 98000.0), record_target=400)
        table = run_sweep(spec, jobs=1)
        g1 = abs(effective_coupling(params_for_point(BASE, "Q", 9800.0)))
        g2 = abs(effective_coupling(params_for_point(BASE, "Q", 98000.0)))
        assert math.isclose(table.rows[0].t_end, 3.0 * math.pi / (2 * g1), rel_tol=1e-12)
        assert math.isclose(table.rows[1].t_end, 3.0 * math.pi / (2 * g2), rel_tol=1e-12)


class TestDetuningScan:
    def test_factor_one_row_matches_base_run(self):
        spec = SweepSpec(base=BASE, axis="Delta_cav_factor", grid=(1.0, 1.2), **FAST)
        result = run_detuning_scan(spec, jobs=1)
        single = run_sweep(SweepSpec(base=BASE, axis="Delta_cav_factor",
                                     grid=(1.0,), **FAST), jobs=1)
        assert result.table.rows[0].c_max == single.rows[0].c_max

    def test_exponent_tracks_analytic_slope(self):
        # t_max follows the exchange period, so the fitted log-log slope of a
        # cavity-detuning scan must sit near the analytic value
        # d ln(t)/d ln(Dcav) = Dcav/(Dcav - DL - 2g^2/DL) over the fit window
        spec = SweepSpec(base=BASE, axis="Delta_cav_factor",
                         grid=tuple(np.linspace(1.0, 2.0, 5)),
                         record_target=800, horizon_factor=0.9)
        result = run_detuning_scan(spec, jobs=None)
        assert result.fit_points >= 2
        upper = result.table.rows[len(result.table.rows) // 2:]
        mid_ghz = 0.5 * (upper[0].axis_value + upper[-1].axis_value) * 123.1224489796
        expected = mid_ghz / (mid_ghz - 27.0 - 2.0 / 3.0)
        assert abs(result.exponent - expected) < 0.15

    def test_requires_detuning_axis(self):
        with pytest.raises(ValueError):
            run_detuning_scan(SweepSpec(base=BASE, axis="Q", grid=(9800.0,), **FAST))


class TestShiftScan:
    def test_zero_shift_matches_base(self):
        table = run_shift_scan(BASE, [0.0, ghz(2.0)], jobs=1, **FAST)
        single = run_sweep(SweepSpec(base=BASE, axis="Q", grid=(9800.0,), **FAST), jobs=1)
        assert table.rows[0].c_max == single.rows[0].c_max
        assert table.rows[0].axis_value == 0.0


class TestGaussianGrid:
    def test_weights_normalized_and_symmetric(self):
        spec = DiffusionSpec(gamma_inh=ghz(1.0))
        offsets, weights, outside = gaussian_grid(spec)
        assert abs(weights.sum() - 1.0) < 1e-12
        assert np.allclose(weights, weights[::-1])
        assert np.allclose(offsets, -offsets[::-1])
        assert outside <= 0.01

    def test_sigma_interpretation_flag(self):
        fwhm = DiffusionSpec(gamma_inh=ghz(1.0))
        direct = DiffusionSpec(gamma_inh=ghz(1.0), width_is_sigma=True)
        assert math.isclose(direct.sigma / fwhm.sigma, 2.0 * math.sqrt(2.0 * math.log(2.0)))

    def test_narrow_span_rejected_downstream(self):
        spec = DiffusionSpec(gamma_inh=ghz(1.0), span_sigma=1.5)
        _, _, outside = gaussian_grid(spec)
        assert outside > 0.01
        with pytest.raises(DiffusionGridError):
            spectral_diffusion_average(BASE, spec, jobs=1)

    def test_grid_points_must_be_odd(self):
        with pytest.raises(ValueError):
            DiffusionSpec(gamma_inh=0.0, grid_points=4)


class TestEmitterSwap:
    def test_swap_consistency(self):
        rng = np.random.default_rng(71)
        p = default_params(9800.0)
        d = p.space.dim
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        swapped = swap_emitters(rho, p.space)
        assert np.isclose(np.trace(swapped).real, 1.0)
        assert np.allclose(swap_emitters(swapped, p.space), rho)
        i = p.space.index(0, 2, 1)
        j = p.space.index(2, 0, 1)
        assert swapped[j, j] == rho[i, i]

    def test_swap_relates_mirrored_evolutions(self):
        # swapping emitters maps the |01>-start evolution with shifts (x, y)
        # onto the |10>-start evolution with shifts (y, x); the |01> start
        # itself is NOT exchange symmetric, which is why the averaging engine
        # evolves every (x, y) grid point explicitly
        t_eval = 2.0
        pa = replace(BASE, delta_shift_A=ghz(1.0), delta_shift_B=ghz(-0.5))
        pb = replace(BASE, delta_shift_A=ghz(-0.5), delta_shift_B=ghz(1.0))
        rho_a = propagate_to(initial_state(pa), build_rotating_hamiltonian(pa),
                             build_collapse_operators(pa), t_eval)
        rho_b01 = propagate_to(initial_state(pb), build_rotating_hamiltonian(pb),
                               build_collapse_operators(pb), t_eval)
        rho_b10 = propagate_to(pb.space.basis_state(1, 0, 0),
                               build_rotating_hamiltonian(pb),
                               build_collapse_operators(pb), t_eval)
        assert np.abs(swap_emitters(rho_a, pa.space) - rho_b10).max() < 1e-10
        assert np.abs(swap_emitters(rho_a, pa.space) - rho_b01).max() > 1e-3


class TestSpectralDiffusionAverage:
    def test_zero_width_reproduces_reference_exactly(self):
        spec = DiffusionSpec(gamma_inh=0.0, grid_points=9, t_eval=3.0)
        result = spectral_diffusion_average(BASE, spec, jobs=1)
        assert result.c_red == result.c_ref
        assert result.c_pointwise == result.c_ref
        assert np.allclose(result.weights.sum(), 1.0)

    def test_single_point_grid_reproduces_unshifted(self):
        spec1 = DiffusionSpec(gamma_inh=ghz(1.0), grid_points=1, t_eval=3.0)
        spec0 = DiffusionSpec(gamma_inh=0.0, grid_points=9, t_eval=3.0)
        r1 = spectral_diffusion_average(BASE, spec1, jobs=1)
        r0 = spectral_diffusion_average(BASE, spec0, jobs=1)
        assert r1.c_red == r0.c_red

    def test_averaged_state_is_valid_density_matrix(self):
        spec = DiffusionSpec(gamma_inh=ghz(0.5), grid_points=3, t_eval=3.0)
        result = spectral_diffusion_average(BASE, spec, jobs=1)
        assert_density_matrix(result.rho_avg)
        assert result.point_concurrence.shape == (3, 3)

    def test_matches_hand_assembled_average(self):
        # independent assembly: evolve each grid point directly and combine
        spec = DiffusionSpec(gamma_inh=ghz(0.5), grid_points=3, t_eval=2.0)
        result = spectral_diffusion_average(BASE, spec, jobs=1)
        offsets, w1, _ = gaussian_grid(spec)
        expected = np.zeros((BASE.space.dim, BASE.space.dim), dtype=complex)
        for i in range(3):
            for j in range(3):
                p = replace(BASE, delta_shift_A=offsets[i], delta_shift_B=offsets[j])
                rho = propagate_to(initial_state(p), build_rotating_hamiltonian(p),
                                   build_collapse_operators(p), 2.0, dt=spec.dt)
                expected += w1[i] * w1[j] * rho
        assert np.abs(result.rho_avg - expected).max() < 1e-14

    def test_auto_t_eval_uses_base_peak(self):
        spec = DiffusionSpec(gamma_inh=0.0, grid_points=3)
        result = spectral_diffusion_average(BASE, spec, jobs=1)
        assert result.t_eval == result.base_t_max
        assert result.base_c_max > 0.5  # working point entangles

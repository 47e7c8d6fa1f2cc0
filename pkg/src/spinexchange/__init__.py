"""Cavity-mediated Raman spin exchange between two three-level emitters.

Dense Lindblad dynamics of two Lambda-type emitters sharing a lossy cavity
mode, with concurrence/inversion observables, closed-form analytics for the
dispersive exchange, and a deterministic parameter-sweep engine.
"""

__version__ = "0.1.0"

from .dynamics import (ConvergenceReport, IntegratorConfig, IntegrationError, Trajectory,
                       convergence_check, initial_state, integrate, integrate_lab_frame,
                       lindblad_rhs, liouvillian, propagate_to, simulate, stable_dt)
from .entanglement import (BELL_TARGET, QubitState, QubitSubspaceError, bell_fidelity,
                           concurrence, extract_oscillation_frequency, find_peak,
                           inversion, reduce_to_qubits)
from .hilbert import (HilbertSpace, annihilation, assert_density_matrix, embed,
                      hermitian_eigenvalues, ketbra, number_operator,
                      partial_trace_cavity, swap_emitters, tensor_product)
from .model import (ConditionReport, EffectiveCouplingError, SystemParams,
                    build_collapse_operators, build_lab_hamiltonian,
                    build_rotating_hamiltonian, check_conditions, default_params,
                    effective_coupling, ghz, kappa_from_q, predicted_times,
                    purcell_coupling, to_ghz)
from .sweeps import (DiffusionGridError, DiffusionResult, DiffusionSpec,
                     DetuningScanResult, SweepRow, SweepSpec, SweepTable,
                     params_for_point, run_detuning_scan, run_shift_scan, run_sweep,
                     spectral_diffusion_average)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Two-qubit reduction, Wootters concurrence, inversion, and peak extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import GROUND_0, GROUND_1, HilbertSpace, partial_trace_cavity

# Qubit basis ordering |00>, |01>, |10>, |11> for the (A, B) spin ground states;
# in the 9-dimensional two-emitter space these are rows/columns 3*a + b.
_QUBIT_ROWS = [3 * a + b for a in (GROUND_0, GROUND_1) for b in (GROUND_0, GROUND_1)]

_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SPIN_FLIP = np.kron(_Y, _Y)

# Target of the entanglement operation: (|01> + i|10>)/sqrt(2).
BELL_TARGET = np.array([0.0, 1.0, 1.0j, 0.0]) / np.sqrt(2.0)

MIN_QUBIT_WEIGHT = 1e-6


class QubitSubspaceError(ValueError):
    """Raised when the state has (numerically) left the two-qubit ground manifold."""


@dataclass(frozen=True)
class QubitState:
    """4x4 state on the (A, B) spin ground manifold plus its pre-normalization weight."""

    rho4: np.ndarray
    weight: float


def qubit_block(rho: np.ndarray, space: HilbertSpace) -> tuple[np.ndarray, float]:
    """Raw 4x4 ground-manifold block (cavity traced out) and its probability weight."""
    reduced = partial_trace_cavity(rho, space)
    block = reduced[np.ix_(_QUBIT_ROWS, _QUBIT_ROWS)]
    return block, float(np.trace(block).real)


def reduce_to_qubits(rho: np.ndarray, space: HilbertSpace,
                     renormalize: bool = True) -> QubitState:
    """Project the full state onto the two-qubit ground manifold.

    Traces out the cavity, extracts the 4x4 block with both emitters in
    {|0>, |1>}, and reports the probability weight of that block.  By default
    the block is renormalized to unit trace (what spin-qubit tomography would
    measure); `renormalize=False` keeps the raw sub-trace block.
    """
    block, weight = qubit_block(rho, space)
    if weight < MIN_QUBIT_WEIGHT:
        raise QubitSubspaceError(
            f"qubit-subspace weight {weight:.3e} below {MIN_QUBIT_WEIGHT:.0e}; "
            "state has left the ground manifold")
    if renormalize:
        block = block / weight
    return QubitState(rho4=block, weight=weight)


def concurrence(state: QubitState | np.ndarray) -> float:
    """Wootters concurrence of a two-qubit state.

    c = max(0, l1 - l2 - l3 - l4) with l_i the descending square roots of the
    eigenvalues of rho (Y x Y) rho* (Y x Y).  Those eigenvalues are computed
    through the Hermitian equivalent sqrt(rho) rho_tilde sqrt(rho), which keeps
    the result accurate to machine precision where a direct non-Hermitian
    eigensolve loses digits.
    """
    rho4 = state.rho4 if isinstance(state, QubitState) else np.asarray(state)
    if rho4.shape != (4, 4):
        raise ValueError(f"expected a 4x4 state, got shape {rho4.shape}")
    rho4 = 0.5 * (rho4 + rho4.conj().T)
    w, v = np.linalg.eigh(rho4)
    w = np.clip(w, 0.0, None)
    # roundoff-level eigenvalues of rank-deficient states would pollute the
    # square root at the sqrt(eps) scale; zero them exactly
    w[w < w.max() * 1e-14] = 0.0
    sqrt_rho = (v * np.sqrt(w)) @ v.conj().T
    rho_tilde = SPIN_FLIP @ rho4.conj() @ SPIN_FLIP
    m = sqrt_rho @ rho_tilde @ sqrt_rho
    mu = np.clip(np.linalg.eigvalsh(m), 0.0, None)
    if mu[-1] > 0.0:
        mu[mu < mu[-1] * 1e-14] = 0.0
    lam = np.sqrt(mu)
    return float(max(0.0, lam[3] - lam[2] - lam[1] - lam[0]))


def bell_fidelity(state: QubitState | np.ndarray) -> float:
    """Overlap <Psi|rho|Psi> with the exchange target (|01> + i|10>)/sqrt(2)."""
    rho4 = state.rho4 if isinstance(state, QubitState) else np.asarray(state)
    return float(np.real(BELL_TARGET.conj() @ rho4 @ BELL_TARGET))


def inversion(trajectory) -> np.ndarray:
    """Population difference rho_01 - rho_10 along a trajectory.

    Uses the unnormalized full-space projector expectations recorded per sample,
    so the initial |01> state gives +1 and a full transfer approaches -1.
    """
    return np.asarray(trajectory.pop01) - np.asarray(trajectory.pop10)


def find_peak(times: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Global maximum of a sampled series with local parabolic refinement.

    Ties resolve to the earliest sample.  When the discrete maximum has two
    strictly lower neighbors, the quadratic through the three points refines
    both location and value; at the series boundary the sample itself is
    returned.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.size == 0:
        raise ValueError("times and values must be equal-length nonempty arrays")
    i = int(np.argmax(values))  # argmax returns the first occurrence on ties
    if i == 0 or i == len(values) - 1:
        return float(times[i]), float(values[i])
    t0, t1, t2 = times[i - 1], times[i], times[i + 1]
    y0, y1, y2 = values[i - 1], values[i], values[i + 1]
    # exact quadratic through three (t, y) points; vertex from the derivative
    denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
    a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
    b = (t2 ** 2 * (y0 - y1) + t1 ** 2 * (y2 - y0) + t0 ** 2 * (y1 - y2)) / denom
    if a >= 0:  # numerically flat or non-concave: keep the sample
        return float(t1), float(y1)
    t_vertex = -b / (2.0 * a)
    if not (t0 <= t_vertex <= t2):
        return float(t1), float(y1)
    c = (y0 - (a * t0 ** 2 + b * t0))
    y_vertex = a * t_vertex ** 2 + b * t_vertex + c
    return float(t_vertex), float(y_vertex)


def extract_oscillation_frequency(times: np.ndarray, values: np.ndarray) -> float:
    """Dominant oscillation angular frequency [rad/ns] of a uniformly sampled series.

    Detrends, applies a Hann window, zero-pads 8x, and refines the strongest
    spectral line parabolically.  Lines slower than ~1.5 cycles over the record
    are excluded along with the DC bin.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 8:
        raise ValueError("need at least 8 samples to extract a frequency")
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt, rtol=1e-6, atol=1e-12):
        raise ValueError("frequency extraction requires a uniform time grid")
    signal = values - values.mean()
    window = np.hanning(len(signal))
    n_fft = 8 * len(signal)
    spectrum = np.abs(np.fft.rfft(signal * window, n=n_fft))
    freqs = np.fft.rfftfreq(n_fft, d=dt)
    span = times[-1] - times[0]
    lo = int(np.searchsorted(freqs, 1.5 / span))
    i = lo + int(np.argmax(spectrum[lo:]))
    if 0 < i < len(spectrum) - 1:
        curve = spectrum[i - 1] - 2.0 * spectrum[i] + spectrum[i + 1]
        if curve < 0:
            shift = 0.5 * (spectrum[i - 1] - spectrum[i + 1]) / curve
            return 2.0 * np.pi * float(freqs[i] + shift * (freqs[1] - freqs[0]))
    return 2.0 * np.pi * float(freqs[i])

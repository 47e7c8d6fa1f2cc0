"""Dense linear algebra on the composite space of two 3-level emitters and a cavity mode.

Basis layout is fixed package-wide: factor order (emitter A, emitter B, cavity),
emitter levels 0, 1 (spin ground states) and 2 (optically excited), cavity Fock
states 0..n_max.  A basis vector |a, b, n> maps to the flat index
``(a*3 + b)*(n_max + 1) + n``, so all modules agree on index arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

# Emitter level indices in the fixed 3-level ordering.
GROUND_0 = 0
GROUND_1 = 1
EXCITED = 2

EMITTER_DIM = 3
SLOTS = ("A", "B", "cav")


@dataclass(frozen=True)
class HilbertSpace:
    """Composite space descriptor; single source of truth for dimensions and indices."""

    n_max: int = 2

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")

    @property
    def n_cav(self) -> int:
        return self.n_max + 1

    @property
    def dims(self) -> tuple[int, int, int]:
        return (EMITTER_DIM, EMITTER_DIM, self.n_cav)

    @property
    def dim(self) -> int:
        return EMITTER_DIM * EMITTER_DIM * self.n_cav

    def index(self, a: int, b: int, n: int) -> int:
        """Flat index of basis state |a>_A |b>_B |n>_cav."""
        if not (0 <= a < 3 and 0 <= b < 3 and 0 <= n < self.n_cav):
            raise ValueError(f"basis labels ({a}, {b}, {n}) outside layout {self.dims}")
        return (a * EMITTER_DIM + b) * self.n_cav + n

    def basis_state(self, a: int, b: int, n: int) -> np.ndarray:
        """Pure-state density matrix |a, b, n><a, b, n|."""
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        i = self.index(a, b, n)
        rho[i, i] = 1.0
        return rho

    def slot_dim(self, slot: str) -> int:
        if slot in ("A", "B"):
            return EMITTER_DIM
        if slot == "cav":
            return self.n_cav
        raise ValueError(f"unknown slot {slot!r}, expected one of {SLOTS}")


def ketbra(i: int, j: int, dim: int = EMITTER_DIM) -> np.ndarray:
    """Single-factor operator |i><j| on a dim-dimensional subspace."""
    op = np.zeros((dim, dim), dtype=complex)
    op[i, j] = 1.0
    return op


def annihilation(n_max: int) -> np.ndarray:
    """Cavity annihilation operator truncated at n_max photons: c[n-1, n] = sqrt(n)."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    n_cav = n_max + 1
    c = np.zeros((n_cav, n_cav), dtype=complex)
    for n in range(1, n_cav):
        c[n - 1, n] = np.sqrt(n)
    return c


def number_operator(n_max: int) -> np.ndarray:
    c = annihilation(n_max)
    return c.conj().T @ c


def tensor_product(factors: list[np.ndarray] | tuple[np.ndarray, ...]) -> np.ndarray:
    """Kronecker product of square factors in the fixed layout order (A, B, cav)."""
    if len(factors) == 0:
        raise ValueError("tensor_product needs at least one factor")
    for f in factors:
        f = np.asarray(f)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError(f"tensor factors must be square, got shape {f.shape}")
    return reduce(np.kron, [np.asarray(f, dtype=complex) for f in factors])


def embed(local: np.ndarray, slot: str, space: HilbertSpace) -> np.ndarray:
    """Extend a single-factor operator to the full space, identity on the other factors."""
    local = np.asarray(local, dtype=complex)
    d = space.slot_dim(slot)
    if local.shape != (d, d):
        raise ValueError(f"slot {slot!r} has dimension {d}, operator has shape {local.shape}")
    eye_em = np.eye(EMITTER_DIM, dtype=complex)
    eye_cav = np.eye(space.n_cav, dtype=complex)
    if slot == "A":
        return tensor_product([local, eye_em, eye_cav])
    if slot == "B":
        return tensor_product([eye_em, local, eye_cav])
    return tensor_product([eye_em, eye_em, local])


def partial_trace_cavity(rho: np.ndarray, space: HilbertSpace) -> np.ndarray:
    """Trace out the cavity factor, returning the 9x9 two-emitter state.

    Sums the photon-diagonal blocks of the fixed layout; trace is preserved for
    arbitrary (not necessarily physical) inputs.
    """
    rho = np.asarray(rho)
    d = space.dim
    if rho.shape != (d, d):
        raise ValueError(f"state has shape {rho.shape}, layout expects {(d, d)}")
    nc = space.n_cav
    blocks = rho.reshape(EMITTER_DIM, EMITTER_DIM, nc, EMITTER_DIM, EMITTER_DIM, nc)
    reduced = np.einsum("abncdn->abcd", blocks)
    return reduced.reshape(EMITTER_DIM * EMITTER_DIM, EMITTER_DIM * EMITTER_DIM)


def swap_emitters(rho: np.ndarray, space: HilbertSpace) -> np.ndarray:
    """Relabel the two emitter factors: |a, b, n> -> |b, a, n|."""
    d = space.dim
    if rho.shape != (d, d):
        raise ValueError(f"state has shape {rho.shape}, layout expects {(d, d)}")
    nc = space.n_cav
    blocks = rho.reshape(EMITTER_DIM, EMITTER_DIM, nc, EMITTER_DIM, EMITTER_DIM, nc)
    return np.ascontiguousarray(blocks.transpose(1, 0, 2, 4, 3, 5).reshape(d, d))


def hermitian_eigenvalues(matrix: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Ascending real eigenvalues of a Hermitian matrix.

    The input is symmetrized as (M + M^dag)/2 before solving so numerical drift
    cannot produce spurious complex parts; inputs non-Hermitian beyond `tol`
    (max entrywise deviation) are rejected.
    """
    matrix = np.asarray(matrix)
    drift = np.abs(matrix - matrix.conj().T).max()
    if drift > tol:
        raise ValueError(f"matrix is non-Hermitian beyond tolerance: |M - M^dag| = {drift:.3e}")
    sym = 0.5 * (matrix + matrix.conj().T)
    return np.linalg.eigvalsh(sym)


def hermiticity_defect(rho: np.ndarray) -> float:
    """Max entrywise |rho - rho^dag|."""
    return float(np.abs(rho - rho.conj().T).max())


def assert_density_matrix(rho: np.ndarray, herm_tol: float = 1e-10,
                          trace_tol: float = 1e-8, eig_tol: float = 1e-8) -> None:
    """Validate Hermiticity, unit trace, and positive semidefiniteness; raise on failure."""
    defect = hermiticity_defect(rho)
    if defect > herm_tol:
        raise ValueError(f"density matrix Hermiticity defect {defect:.3e} > {herm_tol:.1e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {tr!r} deviates from 1 beyond {trace_tol:.1e}")
    lam_min = hermitian_eigenvalues(rho, tol=max(herm_tol, 1e-8)).min()
    if lam_min < -eig_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam_min:.3e}")

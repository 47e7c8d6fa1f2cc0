"""Physical model: parameters, Hamiltonians, collapse operators, closed-form analytics.

Internal unit system: angular frequencies in rad/ns, plain rates in 1/ns, time in ns.
User-facing frequencies are quoted as value/(2*pi) in GHz throughout, so a coupling
"3 GHz" enters as 2*pi*3 rad/ns.  The interaction for each emitter j reads

    Omega_L^j (|E^j><0^j| + h.c.)  +  g_cav^j (c^dag |1^j><E^j| + h.c.)

and after removing the optical frequencies with the frame transformation
U = exp{ i t [omega_L |E><E| + (omega_L - omega_cav)|1><1|] } (per emitter, plus
omega_cav c^dag c once) the free part collapses to the detuning diagonal

    (Delta_L^j + dw^j)|E^j><E^j|  +  (Delta_L^j - Delta_cav^j)|1^j><1^j|,

where dw^j is a quasi-static shift of the optical transition.  Both detunings are
measured downward from their transitions (laser from |0>-|E>, cavity from |1>-|E>),
so a transition shift dw moves both by +dw and leaves Delta_L - Delta_cav intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .hilbert import (EXCITED, GROUND_0, GROUND_1, HilbertSpace, annihilation, embed,
                      ketbra, tensor_product)

TWO_PI = 2.0 * math.pi

# Optical transition 471 THz and ground-state splitting 2.87 GHz, both angular rad/ns.
DEFAULT_OMEGA_OPT = TWO_PI * 471e3
DEFAULT_OMEGA_01 = TWO_PI * 2.87
# Per-channel radiative rate, 50 MHz as a plain rate (total excited decay 2*gamma,
# consistent with a 14 ns excited-state lifetime; the angular reading 2*pi*50 MHz
# would imply 1.6 ns and is exposed only as an explicit conversion in the CLI).
DEFAULT_GAMMA = 0.05

_EFFECTIVE_COUPLING_SINGULAR = 1e-6  # rad/ns; below this the dressed denominator is resonant


class EffectiveCouplingError(ValueError):
    """Raised when the analytic exchange coupling is singular or ill-defined."""


def ghz(value: float) -> float:
    """Angular frequency [rad/ns] of a quoted frequency/(2*pi) in GHz."""
    return TWO_PI * value


def to_ghz(omega: float) -> float:
    """Quoted frequency/(2*pi) in GHz of an angular frequency [rad/ns]."""
    return omega / TWO_PI


def kappa_from_q(omega_opt: float, q: float) -> float:
    """Cavity photon loss rate kappa = omega_cav / Q [1/ns].

    The cavity detuning is parts-per-thousand of the optical frequency, so
    omega_cav is taken as the optical transition frequency.
    """
    if q <= 0:
        raise ValueError(f"quality factor must be positive, got {q}")
    return omega_opt / q


@dataclass(frozen=True)
class SystemParams:
    """All physical parameters of the two-emitter/cavity system, internal units.

    Exactly one of (q, kappa) is authoritative at construction; the other is
    derived via kappa = omega_opt / Q.  Passing a consistent pair (as produced
    by dataclasses.replace) is accepted.
    """

    g_cav_A: float
    g_cav_B: float
    Omega_L_A: float
    Omega_L_B: float
    Delta_L_A: float
    Delta_L_B: float
    Delta_cav_A: float
    Delta_cav_B: float
    delta_shift_A: float = 0.0
    delta_shift_B: float = 0.0
    omega_opt: float = DEFAULT_OMEGA_OPT
    omega_01: float = DEFAULT_OMEGA_01
    q: float | None = None
    kappa: float | None = None
    gamma: float = DEFAULT_GAMMA
    n_max: int = 2

    def __post_init__(self):
        if self.q is None and self.kappa is None:
            raise ValueError("one of q or kappa must be given")
        if self.q is None:
            q = math.inf if self.kappa == 0 else self.omega_opt / self.kappa
            object.__setattr__(self, "q", q)
        elif self.kappa is None:
            object.__setattr__(self, "kappa", self.omega_opt / self.q)
        else:
            expected = 0.0 if math.isinf(self.q) else self.omega_opt / self.q
            if not math.isclose(self.kappa, expected, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(
                    f"inconsistent q={self.q} and kappa={self.kappa}; give only one")
        for name in ("g_cav_A", "g_cav_B", "Omega_L_A", "Omega_L_B", "gamma", "kappa"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.q <= 0:
            raise ValueError(f"q must be positive, got {self.q}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace(self.n_max)

    def with_q(self, q: float) -> "SystemParams":
        return replace(self, q=q, kappa=None)

    def with_kappa(self, kappa: float) -> "SystemParams":
        return replace(self, q=None, kappa=kappa)

    def is_symmetric(self) -> bool:
        """True when both emitters share couplings, detunings, and shifts."""
        return (self.g_cav_A == self.g_cav_B and self.Omega_L_A == self.Omega_L_B
                and self.Delta_L_A == self.Delta_L_B
                and self.Delta_cav_A == self.Delta_cav_B
                and self.delta_shift_A == self.delta_shift_B)


def default_params(q: float = 9800.0, g_ghz: float = 3.0, *, ideal: bool = False,
                   gamma: float = DEFAULT_GAMMA, n_max: int = 2,
                   omega_opt: float = DEFAULT_OMEGA_OPT) -> SystemParams:
    """Working-point parameters: Omega_L = g_cav, Delta_L = 9 g, Delta_cav = 9 g + 2 kappa.

    With `ideal=True` all dissipation is switched off (kappa = gamma = 0), which
    collapses the detunings to Delta_cav = Delta_L = 9 g.
    """
    g = ghz(g_ghz)
    kappa = 0.0 if ideal else kappa_from_q(omega_opt, q)
    delta_l = 9.0 * g
    delta_cav = 9.0 * g + 2.0 * kappa
    return SystemParams(
        g_cav_A=g, g_cav_B=g,
        Omega_L_A=g, Omega_L_B=g,
        Delta_L_A=delta_l, Delta_L_B=delta_l,
        Delta_cav_A=delta_cav, Delta_cav_B=delta_cav,
        omega_opt=omega_opt,
        q=None if ideal else q,
        kappa=0.0 if ideal else None,
        gamma=0.0 if ideal else gamma,
        n_max=n_max,
    )


def build_rotating_hamiltonian(params: SystemParams) -> np.ndarray:
    """Time-independent Hamiltonian in the frame rotating with laser and cavity.

    H = sum_j [ (Delta_L^j + dw^j)|E^j><E^j| + (Delta_L^j - Delta_cav^j)|1^j><1^j|
                + Omega_L^j (|E^j><0^j| + h.c.) + g^j (c^dag |1^j><E^j| + h.c.) ]

    Hermitian by construction (assembled as diagonal + S + S^dag).
    """
    space = params.space
    eye_em = np.eye(3, dtype=complex)
    eye_cav = np.eye(space.n_cav, dtype=complex)
    c_dag = annihilation(params.n_max).conj().T

    def emitter_terms(delta_l, delta_cav, omega_l, g_cav, shift, slot):
        diag_local = ((delta_l + shift) * ketbra(EXCITED, EXCITED)
                      + (delta_l - delta_cav) * ketbra(GROUND_1, GROUND_1))
        lower_local = omega_l * ketbra(EXCITED, GROUND_0)
        if slot == "A":
            diag = tensor_product([diag_local, eye_em, eye_cav])
            lower = tensor_product([lower_local, eye_em, eye_cav])
            exchange = g_cav * tensor_product([ketbra(GROUND_1, EXCITED), eye_em, c_dag])
        else:
            diag = tensor_product([eye_em, diag_local, eye_cav])
            lower = tensor_product([eye_em, lower_local, eye_cav])
            exchange = g_cav * tensor_product([eye_em, ketbra(GROUND_1, EXCITED), c_dag])
        return diag, lower + exchange

    diag_a, s_a = emitter_terms(params.Delta_L_A, params.Delta_cav_A, params.Omega_L_A,
                                params.g_cav_A, params.delta_shift_A, "A")
    diag_b, s_b = emitter_terms(params.Delta_L_B, params.Delta_cav_B, params.Omega_L_B,
                                params.g_cav_B, params.delta_shift_B, "B")
    s = s_a + s_b
    return diag_a + diag_b + s + s.conj().T


def build_lab_hamiltonian(params: SystemParams, t: float) -> np.ndarray:
    """Explicitly time-dependent Hamiltonian with absolute optical energies.

    Serves as the frame-equivalence oracle for `build_rotating_hamiltonian`:
    energies omega_0 = 0, omega_1 = omega_01, omega_E = omega_opt + dw^j, the
    laser at omega_L^j = omega_opt - Delta_L^j drives |0>-|E> with phase
    exp(+i omega_L t) on |0><E|, and the shared cavity sits at
    omega_cav = omega_opt - omega_01 - Delta_cav^A (emitter A's detuning fixes
    the single physical mode).
    """
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    space = params.space
    eye_em = np.eye(3, dtype=complex)
    eye_cav = np.eye(space.n_cav, dtype=complex)
    c = annihilation(params.n_max)
    c_dag = c.conj().T
    omega_cav = params.omega_opt - params.omega_01 - params.Delta_cav_A

    h = embed(omega_cav * (c_dag @ c), "cav", space)

    for slot, delta_l, omega_l_coupling, g_cav, shift in (
            ("A", params.Delta_L_A, params.Omega_L_A, params.g_cav_A, params.delta_shift_A),
            ("B", params.Delta_L_B, params.Omega_L_B, params.g_cav_B, params.delta_shift_B)):
        omega_laser = params.omega_opt - delta_l
        diag_local = (params.omega_01 * ketbra(GROUND_1, GROUND_1)
                      + (params.omega_opt + shift) * ketbra(EXCITED, EXCITED))
        drive_local = omega_l_coupling * np.exp(1j * omega_laser * t) * ketbra(GROUND_0, EXCITED)
        h += embed(diag_local, slot, space)
        drive = embed(drive_local, slot, space)
        h += drive + drive.conj().T
        if slot == "A":
            exchange = g_cav * tensor_product([ketbra(GROUND_1, EXCITED), eye_em, c_dag])
        else:
            exchange = g_cav * tensor_product([eye_em, ketbra(GROUND_1, EXCITED), c_dag])
        h += exchange + exchange.conj().T
    return h


def build_collapse_operators(params: SystemParams) -> list[np.ndarray]:
    """Rate-scaled jump operators: four radiative channels and the cavity loss.

    Returns [sqrt(gamma)|0_A><E_A|, sqrt(gamma)|1_A><E_A|, same for B, sqrt(kappa) c],
    each embedded on the full space.  Zero rates give zero operators.
    """
    space = params.space
    root_gamma = math.sqrt(params.gamma)
    root_kappa = math.sqrt(params.kappa)
    ops = []
    for slot in ("A", "B"):
        for target in (GROUND_0, GROUND_1):
            ops.append(root_gamma * embed(ketbra(target, EXCITED), slot, space))
    ops.append(root_kappa * embed(annihilation(params.n_max), "cav", space))
    return ops


def _symmetric_effective_inputs(params: SystemParams):
    if not params.is_symmetric():
        raise EffectiveCouplingError(
            "analytic exchange coupling assumes equal emitter parameters; "
            "got asymmetric A/B values")
    delta_l = params.Delta_L_A + params.delta_shift_A
    delta_cav = params.Delta_cav_A + params.delta_shift_A
    return params.Omega_L_A, params.g_cav_A, delta_l, delta_cav


def effective_coupling(params: SystemParams) -> float:
    """Second-order exchange coupling [rad/ns] between |01> and |10>.

        g_eff = |Omega_L|^2 |g_cav|^2 / ( Delta_L^2 (Delta_cav - Delta_L - 2|g_cav|^2/Delta_L) )

    Quasi-static transition shifts enter through both detunings.  The sign is
    retained; a dressed-resonant denominator (|.| < 1e-6 rad/ns) is an error
    rather than a clamped value, since the formula is invalid there.
    """
    omega_l, g_cav, delta_l, delta_cav = _symmetric_effective_inputs(params)
    if delta_l == 0:
        raise EffectiveCouplingError("Delta_L must be nonzero")
    bracket = delta_cav - delta_l - 2.0 * abs(g_cav) ** 2 / delta_l
    if abs(bracket) < _EFFECTIVE_COUPLING_SINGULAR:
        raise EffectiveCouplingError(
            f"dressed denominator {bracket:.3e} rad/ns is resonant; "
            "exchange coupling is undefined at this working point")
    return abs(omega_l) ** 2 * abs(g_cav) ** 2 / (delta_l ** 2 * bracket)


def predicted_times(g_eff: float) -> tuple[float, float]:
    """(t_bell, t_transfer) [ns] for exchange coupling g_eff [rad/ns].

    Under the pure exchange the |10> population evolves as sin^2(g_eff t), so a
    full transfer takes pi/(2|g_eff|) and the maximally entangled state is
    reached at half that.
    """
    if g_eff == 0:
        raise ValueError("exchange coupling must be nonzero")
    t_transfer = math.pi / (2.0 * abs(g_eff))
    return 0.5 * t_transfer, t_transfer


@dataclass(frozen=True)
class ConditionReport:
    """Validity ratios for the dispersive exchange regime with pass flags.

    ratio1 = Delta_L / Omega_L                  (want >> 1)
    ratio2 = |Delta_cav - Delta_L| / max(g_cav, Omega_L, kappa)   (want >> 1)
    ratio3 = Delta_L^2 |Delta_cav - Delta_L| gamma_rad / (g_cav^2 Omega_L^2)  (want << 1)

    gamma_rad is the total excited-state decay 2*gamma.  Flags use a
    configurable threshold for the first two ratios and ratio3 < 1 for the third.
    """

    ratio1: float
    ratio2: float
    ratio3: float
    threshold: float = 3.0
    satisfied_1: bool = field(init=False)
    satisfied_2: bool = field(init=False)
    satisfied_3: bool = field(init=False)

    def __post_init__(self):
        for name in ("ratio1", "ratio2", "ratio3"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        object.__setattr__(self, "satisfied_1", self.ratio1 > self.threshold)
        object.__setattr__(self, "satisfied_2", self.ratio2 > self.threshold)
        object.__setattr__(self, "satisfied_3", self.ratio3 < 1.0)

    @property
    def all_satisfied(self) -> bool:
        return self.satisfied_1 and self.satisfied_2 and self.satisfied_3


def check_conditions(params: SystemParams, threshold: float = 3.0) -> ConditionReport:
    """Evaluate the dispersive-regime ratios; worst case over the two emitters."""
    gamma_rad = 2.0 * params.gamma
    ratio1 = math.inf
    ratio2 = math.inf
    ratio3 = 0.0
    for delta_l, delta_cav, omega_l, g_cav in (
            (params.Delta_L_A, params.Delta_cav_A, params.Omega_L_A, params.g_cav_A),
            (params.Delta_L_B, params.Delta_cav_B, params.Omega_L_B, params.g_cav_B)):
        split = abs(delta_cav - delta_l)
        scale = max(g_cav, omega_l, params.kappa)
        ratio1 = min(ratio1, abs(delta_l) / omega_l if omega_l > 0 else math.inf)
        ratio2 = min(ratio2, split / scale if scale > 0 else math.inf)
        denom = g_cav ** 2 * omega_l ** 2
        ratio3 = max(ratio3,
                     delta_l ** 2 * split * gamma_rad / denom if denom > 0 else math.inf)
    # infinite ratios (zero couplings) are reported as a large finite sentinel
    big = 1e30
    ratio1 = min(ratio1, big)
    ratio2 = min(ratio2, big)
    ratio3 = min(ratio3, big)
    return ConditionReport(ratio1=ratio1, ratio2=ratio2, ratio3=ratio3, threshold=threshold)


def purcell_coupling(purcell_factor: float, q: float, lifetime_ns: float,
                     debye_waller: float, omega: float) -> float:
    """Coherent cavity coupling [rad/ns] from measured Purcell enhancement.

        g = sqrt( d * omega * F / (4 Q tau) )

    with F the Purcell factor, Q the quality factor of the measured cavity,
    tau the excited-state lifetime [ns], d the Debye-Waller factor, and omega
    the optical transition angular frequency [rad/ns].
    """
    for name, value in (("purcell_factor", purcell_factor), ("q", q),
                        ("lifetime_ns", lifetime_ns), ("debye_waller", debye_waller),
                        ("omega", omega)):
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")
    return math.sqrt(debye_waller * omega * purcell_factor / (4.0 * q * lifetime_ns))

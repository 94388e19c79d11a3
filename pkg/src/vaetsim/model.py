"""Domain types and Hamiltonian builders for the three-site chain coupled to
two bosonic modes.

Three coupling layouts are supported:

* ``CouplingTopology.transverse(zeta=1)`` -- each mode couples to one site
  through a sigma_z-type operator; projecting to the single-excitation
  subspace generates cross couplings of size ``-zeta`` on the other sites.
* ``CouplingTopology.transverse(zeta=0)`` -- conventional excited-state-only
  coupling (no cross terms).  ``zeta`` interpolates linearly in between.
* ``CouplingTopology.longitudinal()`` -- normal-mode (stretch) couplings:
  mode c couples through ``|1><1| - |3><3|`` (it annihilates the bridge
  excited state), mode d through ``|1><1| - 2|2><2| + |3><3|``, both with a
  factor-2 coupling prefactor, site energies carry a factor 1/2, and a
  direct 1<->3 hop ``j13`` is allowed.

The composite basis is ordered (site, fock_a, fock_b) row-major:
``flat = s*N_a*N_b + n*N_b + m`` with ``s in {0, 1, 2}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fock import fock_operators

#: Refuse to build dense operators above this dimension.
DEFAULT_DIM_CAP = 20_000

_SYMMETRY_TOL = 1e-12


class HamiltonianSizeError(ValueError):
    """Raised when the requested product space exceeds the dense-size cap."""


@dataclass(frozen=True)
class TrimerParams:
    """Site energies and hopping amplitudes of the electronic three-level system.

    ``omega_tilde`` are the projected single-excitation site energies in
    rad/ms; ``j12``/``j23`` the nearest-neighbour hops; ``j13`` a direct
    donor-acceptor hop that is only meaningful for the longitudinal layout.
    """

    omega_tilde: tuple[float, float, float]
    j12: float
    j23: float
    j13: float = 0.0

    def __post_init__(self):
        vals = (*self.omega_tilde, self.j12, self.j23, self.j13)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"TrimerParams fields must be finite, got {vals}")

    @property
    def is_symmetric(self) -> bool:
        """True iff j12 == j23 and the two site-energy gaps are equal (to 1e-12)."""
        w1, w2, w3 = self.omega_tilde
        return abs(self.j12 - self.j23) <= _SYMMETRY_TOL and abs((w2 - w1) - (w3 - w2)) <= _SYMMETRY_TOL

    @property
    def delta(self) -> float:
        """Site-energy gap of the symmetric model."""
        if not self.is_symmetric:
            raise ValueError("delta is only defined for symmetric parameters")
        return self.omega_tilde[1] - self.omega_tilde[0]

    @property
    def j(self) -> float:
        """Common hop amplitude of the symmetric model."""
        if not self.is_symmetric:
            raise ValueError("j is only defined for symmetric parameters")
        return self.j12

    def electronic_matrix(self, half_site_energies: bool = False) -> np.ndarray:
        """Bare 3x3 electronic Hamiltonian (optionally with the /2 energy convention)."""
        scale = 0.5 if half_site_energies else 1.0
        h = np.diag([scale * w for w in self.omega_tilde])
        h[0, 1] = h[1, 0] = self.j12
        h[1, 2] = h[2, 1] = self.j23
        h[0, 2] = h[2, 0] = self.j13
        return h

    def eigen_gap_31(self, half_site_energies: bool = False) -> float:
        """Spectral span lambda_3 - lambda_1 of the electronic Hamiltonian."""
        evals = np.linalg.eigvalsh(self.electronic_matrix(half_site_energies))
        return float(evals[2] - evals[0])


@dataclass(frozen=True)
class VibrationalModeSpec:
    """One bosonic mode: frequency, site coupling, temperature, truncation."""

    nu: float
    kappa: float
    kbt: float
    n_fock: int

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"nu must be a finite positive number, got {self.nu}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not (math.isfinite(self.kbt) and self.kbt >= 0):
            raise ValueError(f"kbt must be >= 0, got {self.kbt}")
        if self.n_fock < 2:
            raise ValueError(f"n_fock must be >= 2, got {self.n_fock}")

    def with_nu(self, nu: float) -> "VibrationalModeSpec":
        return VibrationalModeSpec(nu=nu, kappa=self.kappa, kbt=self.kbt, n_fock=self.n_fock)

    def with_n_fock(self, n_fock: int) -> "VibrationalModeSpec":
        return VibrationalModeSpec(nu=self.nu, kappa=self.kappa, kbt=self.kbt, n_fock=n_fock)


@dataclass(frozen=True)
class CouplingTopology:
    """Which coupling layout to build; see the module docstring."""

    variant: str  # "transverse" | "longitudinal"
    zeta: float = 1.0

    def __post_init__(self):
        if self.variant not in ("transverse", "longitudinal"):
            raise ValueError(f"unknown topology variant {self.variant!r}")
        if self.variant == "transverse" and not (0.0 <= self.zeta <= 1.0):
            raise ValueError(f"zeta must lie in [0, 1], got {self.zeta}")

    @classmethod
    def transverse(cls, zeta: float = 1.0) -> "CouplingTopology":
        return cls(variant="transverse", zeta=zeta)

    @classmethod
    def longitudinal(cls) -> "CouplingTopology":
        return cls(variant="longitudinal")


@dataclass(frozen=True)
class DissipationSpec:
    """Per-site decay rates; an all-zero triple means Hermitian dynamics."""

    gamma: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if any(not math.isfinite(g) or g < 0 for g in self.gamma):
            raise ValueError(f"decay rates must be >= 0, got {self.gamma}")

    @property
    def is_zero(self) -> bool:
        return all(g == 0.0 for g in self.gamma)


@dataclass(frozen=True)
class ProductBasis:
    """Index bookkeeping for the (site, fock_a, fock_b) product space."""

    n_fock_a: int
    n_fock_b: int

    @property
    def dim(self) -> int:
        return 3 * self.n_fock_a * self.n_fock_b

    def flat_index(self, site: int, n: int, m: int) -> int:
        """Flat index of |site, n, m> with site in {0, 1, 2}."""
        if not (0 <= site < 3 and 0 <= n < self.n_fock_a and 0 <= m < self.n_fock_b):
            raise IndexError(f"basis label ({site}, {n}, {m}) out of range")
        return (site * self.n_fock_a + n) * self.n_fock_b + m

    def labels(self) -> list[tuple[int, int, int]]:
        return [
            (s, n, m)
            for s in range(3)
            for n in range(self.n_fock_a)
            for m in range(self.n_fock_b)
        ]

    def site_slice(self, site: int) -> slice:
        """Rows of one electronic site block."""
        block = self.n_fock_a * self.n_fock_b
        return slice(site * block, (site + 1) * block)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Dense operator on the 3 * N_a * N_b product space.

    ``matrix`` is complex; with nonzero dissipation it acquires the
    anti-Hermitian part ``-(i/2) sum_j gamma_j |j><j| (x) 1 (x) 1`` and
    ``is_hermitian`` is False.
    """

    matrix: np.ndarray
    basis: ProductBasis
    is_hermitian: bool
    gamma: tuple[float, float, float] = (0.0, 0.0, 0.0)
    zeta: float | None = None

    @property
    def dim(self) -> int:
        return self.basis.dim


def _coupling_patterns(topology: CouplingTopology) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Site patterns and coupling prefactors for both modes."""
    if topology.variant == "transverse":
        z = topology.zeta
        pattern_a = np.diag([-z, 1.0, -z])
        pattern_b = np.diag([-z, -z, 1.0])
        return pattern_a, pattern_b, 1.0, 1.0
    # longitudinal: symmetric stretch on (1,3), asymmetric stretch on all sites
    pattern_c = np.diag([1.0, 0.0, -1.0])
    pattern_d = np.diag([1.0, -2.0, 1.0])
    return pattern_c, pattern_d, 2.0, 2.0


def build_effective_hamiltonian(
    trimer: TrimerParams,
    mode_a: VibrationalModeSpec,
    mode_b: VibrationalModeSpec,
    topology: CouplingTopology = CouplingTopology.transverse(),
    dissipation: DissipationSpec = DissipationSpec(),
    dim_cap: int = DEFAULT_DIM_CAP,
) -> EffectiveHamiltonian:
    """Assemble the dense composite Hamiltonian for the requested layout.

    The matrix is built in the (site, fock_a, fock_b) row-major basis.  Every
    entry is affine in ``zeta`` for the transverse layout, which downstream
    code exploits for interpolation checks.
    """
    basis = ProductBasis(n_fock_a=mode_a.n_fock, n_fock_b=mode_b.n_fock)
    if basis.dim > dim_cap:
        raise HamiltonianSizeError(
            f"product dimension {basis.dim} exceeds the cap {dim_cap}; "
            "reduce n_fock or raise dim_cap"
        )

    ops_a = fock_operators(mode_a.n_fock)
    ops_b = fock_operators(mode_b.n_fock)
    eye3 = np.eye(3)
    eye_a = np.eye(mode_a.n_fock)
    eye_b = np.eye(mode_b.n_fock)

    half = topology.variant == "longitudinal"
    h_el = trimer.electronic_matrix(half_site_energies=half)
    pattern_a, pattern_b, pref_a, pref_b = _coupling_patterns(topology)

    h = np.kron(np.kron(h_el, eye_a), eye_b)
    h += mode_a.nu * np.kron(np.kron(eye3, ops_a.number), eye_b)
    h += mode_b.nu * np.kron(np.kron(eye3, eye_a), ops_b.number)
    h += pref_a * mode_a.kappa * np.kron(np.kron(pattern_a, ops_a.displacement_coupling), eye_b)
    h += pref_b * mode_b.kappa * np.kron(np.kron(pattern_b, eye_a), ops_b.displacement_coupling)

    matrix = h.astype(complex)
    if not dissipation.is_zero:
        decay = np.kron(np.kron(np.diag(dissipation.gamma), eye_a), eye_b)
        matrix = matrix - 0.5j * decay

    return EffectiveHamiltonian(
        matrix=matrix,
        basis=basis,
        is_hermitian=dissipation.is_zero,
        gamma=dissipation.gamma,
        zeta=topology.zeta if topology.variant == "transverse" else None,
    )


@dataclass(frozen=True)
class Preset:
    """One parameter row of the reference table, tagged with its unit system."""

    trimer: TrimerParams
    mode_a: VibrationalModeSpec
    mode_b: VibrationalModeSpec
    units: str  # "rad/ms" or "cm^-1"
    note: str = ""


#: Default Fock truncation attached to presets; a simulation knob, not part
#: of the parameter table itself.
_PRESET_N_FOCK = 15

_PRESETS = {
    "IonTrapLine1": Preset(
        trimer=TrimerParams(omega_tilde=(-0.5, 0.0, 0.5), j12=0.1, j23=0.1),
        mode_a=VibrationalModeSpec(nu=0.52, kappa=0.1, kbt=0.72, n_fock=_PRESET_N_FOCK),
        mode_b=VibrationalModeSpec(nu=0.52, kappa=0.1, kbt=0.72, n_fock=_PRESET_N_FOCK),
        units="rad/ms",
        note="ion-trap emulator scale; numerically identical to kHz values",
    ),
    "ScaleUpLine2": Preset(
        trimer=TrimerParams(omega_tilde=(-138.6, 0.0, 138.6), j12=27.72, j23=27.72),
        mode_a=VibrationalModeSpec(nu=144.0, kappa=27.72, kbt=200.0, n_fock=_PRESET_N_FOCK),
        mode_b=VibrationalModeSpec(nu=144.0, kappa=27.72, kbt=200.0, n_fock=_PRESET_N_FOCK),
        units="cm^-1",
        note="line 1 scaled up to natural-system magnitudes; values kept in "
        "native cm^-1, no silent conversion (1 cm^-1 = 0.18836 rad/ps)",
    ),
    "FmoLine3": Preset(
        trimer=TrimerParams(omega_tilde=(-138.6, 0.0, 138.6), j12=-5.9, j23=-13.7),
        mode_a=VibrationalModeSpec(nu=180.0, kappa=42.2, kbt=200.0, n_fock=_PRESET_N_FOCK),
        mode_b=VibrationalModeSpec(nu=180.0, kappa=42.2, kbt=200.0, n_fock=_PRESET_N_FOCK),
        units="cm^-1",
        note="typical light-harvesting-complex values; native cm^-1, no "
        "silent conversion",
    ),
}


def preset(name: str) -> Preset:
    """Return one of the three reference parameter rows.

    ``IonTrapLine1`` is in rad/ms; ``ScaleUpLine2`` and ``FmoLine3`` are in
    their native cm^-1 and carry the unit tag -- callers must convert
    explicitly before mixing unit systems.
    """
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}") from None


def preset_names() -> list[str]:
    return sorted(_PRESETS)

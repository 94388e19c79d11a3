"""Vibronic energy spectra: eigenvalues swept over the first mode frequency,
avoided-crossing detection and hybrid-state labelling.

Labels refer to the excitonic product basis |i, j, k> = |e_i> (x) |j>_a (x)
|k>_b with i the electronic eigenstate index (1-based) and j, k Fock
occupations, which is the basis in which crossings between e.g. |1,1,0> and
|3,0,0> open into hybridization gaps once the site-vibration coupling is
switched on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CouplingTopology,
    DissipationSpec,
    TrimerParams,
    VibrationalModeSpec,
    build_effective_hamiltonian,
)


@dataclass(frozen=True)
class VibronicSweep:
    """Sorted eigenvalues per sweep point; ``levels[p, l]`` is level l at nu_a_values[p]."""

    nu_a_values: np.ndarray
    levels: np.ndarray
    n_levels_kept: int
    n_fock: int
    trimer: TrimerParams
    mode_b_nu: float
    kappas: tuple[float, float]


@dataclass(frozen=True)
class AvoidedCrossing:
    """A local gap minimum between two adjacent sorted levels."""

    level_pair: tuple[int, int]
    nu_a: float
    min_gap: float
    labels_lower: tuple[tuple[int, int, int], ...]
    labels_upper: tuple[tuple[int, int, int], ...]

    @property
    def hybrid_labels(self) -> set[tuple[int, int, int]]:
        return set(self.labels_lower) | set(self.labels_upper)


def _build(trimer, nu_a, mode_b, kappas, n_fock):
    mode_a = VibrationalModeSpec(nu=nu_a, kappa=kappas[0], kbt=0.0, n_fock=n_fock)
    mb = VibrationalModeSpec(nu=mode_b.nu, kappa=kappas[1], kbt=0.0, n_fock=n_fock)
    return build_effective_hamiltonian(
        trimer, mode_a, mb, CouplingTopology.transverse(), DissipationSpec()
    )


def sweep_spectrum(
    trimer: TrimerParams,
    mode_b: VibrationalModeSpec,
    kappas: tuple[float, float],
    nu_a_values: np.ndarray,
    n_fock: int = 3,
) -> VibronicSweep:
    """Eigenvalues of the Hermitian composite Hamiltonian over a nu_a sweep.

    ``n_fock`` applies to both modes (dim = 3 * n_fock^2); the sweep keeps
    all levels and leaves any row selection to presentation.
    """
    nu_a_values = np.asarray(nu_a_values, dtype=float)
    if nu_a_values.ndim != 1 or nu_a_values.size < 2:
        raise ValueError("nu_a_values must be a 1-d array with at least two points")
    if np.any(nu_a_values <= 0) or np.any(np.diff(nu_a_values) <= 0):
        raise ValueError("nu_a_values must be positive and increasing")

    dim = 3 * n_fock * n_fock
    levels = np.empty((nu_a_values.size, dim))
    for idx, nu_a in enumerate(nu_a_values):
        ham = _build(trimer, nu_a, mode_b, kappas, n_fock)
        levels[idx] = np.linalg.eigvalsh(ham.matrix.real)
    return VibronicSweep(
        nu_a_values=nu_a_values,
        levels=levels,
        n_levels_kept=dim,
        n_fock=n_fock,
        trimer=trimer,
        mode_b_nu=mode_b.nu,
        kappas=kappas,
    )


def _excitonic_product_transform(trimer: TrimerParams, n_fock: int) -> np.ndarray:
    """Columns are |e_i, j, k> expressed in the site product basis."""
    _, evecs = np.linalg.eigh(trimer.electronic_matrix())
    return np.kron(np.kron(evecs, np.eye(n_fock)), np.eye(n_fock))


def _top_labels(state: np.ndarray, n_fock: int, count: int = 2) -> tuple[tuple[int, int, int], ...]:
    probs = np.abs(state) ** 2
    order = np.argsort(probs)[::-1][:count]
    labels = []
    for flat in order:
        s, rem = divmod(int(flat), n_fock * n_fock)
        j, k = divmod(rem, n_fock)
        labels.append((s + 1, j, k))
    return tuple(labels)


def find_avoided_crossings(
    sweep: VibronicSweep,
    window: int = 3,
    max_gap: float = 0.05,
) -> list[AvoidedCrossing]:
    """Locate local gap minima between adjacent sorted levels.

    A minimum at sweep index p must be the smallest gap within ``window``
    points on both sides and not exceed ``max_gap``.  The two eigenvectors
    at the minimum are labelled by their top-2 excitonic-product components.
    """
    nu = sweep.nu_a_values
    levels = sweep.levels
    n_points, dim = levels.shape
    transform = _excitonic_product_transform(sweep.trimer, sweep.n_fock)
    mode_b = VibrationalModeSpec(nu=sweep.mode_b_nu, kappa=sweep.kappas[1], kbt=0.0, n_fock=sweep.n_fock)

    crossings: list[AvoidedCrossing] = []
    for lvl in range(dim - 1):
        gaps = levels[:, lvl + 1] - levels[:, lvl]
        for p in range(1, n_points - 1):
            lo = max(0, p - window)
            hi = min(n_points, p + window + 1)
            if gaps[p] > max_gap or gaps[p] > np.min(gaps[lo:hi]):
                continue
            if not (gaps[p] <= gaps[p - 1] and gaps[p] < gaps[p + 1]):
                continue
            ham = _build(sweep.trimer, nu[p], mode_b, sweep.kappas, sweep.n_fock)
            _, vecs = np.linalg.eigh(ham.matrix.real)
            in_exc_basis_lo = transform.T @ vecs[:, lvl]
            in_exc_basis_hi = transform.T @ vecs[:, lvl + 1]
            crossings.append(
                AvoidedCrossing(
                    level_pair=(lvl, lvl + 1),
                    nu_a=float(nu[p]),
                    min_gap=float(gaps[p]),
                    labels_lower=_top_labels(in_exc_basis_lo, sweep.n_fock),
                    labels_upper=_top_labels(in_exc_basis_hi, sweep.n_fock),
                )
            )
    crossings.sort(key=lambda c: (c.nu_a, c.level_pair))
    return crossings

"""Truncated bosonic operators, thermal mode states and occupancy formulas."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FockOperators:
    """Ladder operators on a Fock space truncated to ``n_fock`` levels.

    ``annihilate[n-1, n] = sqrt(n)``; ``number`` is exactly
    ``annihilate.T @ annihilate``.  The truncation defect lives entirely in
    the top corner: ``[a, a^dag]`` equals the identity except for the
    ``(N-1, N-1)`` entry, which is ``-(N-1)``.
    """

    n_fock: int
    annihilate: np.ndarray
    number: np.ndarray

    @property
    def create(self) -> np.ndarray:
        return self.annihilate.T

    @property
    def displacement_coupling(self) -> np.ndarray:
        """The Hermitian combination a + a^dag."""
        return self.annihilate + self.annihilate.T


def fock_operators(n_fock: int) -> FockOperators:
    if n_fock < 2:
        raise ValueError(f"n_fock must be >= 2, got {n_fock}")
    a = np.zeros((n_fock, n_fock))
    ns = np.arange(1, n_fock)
    a[ns - 1, ns] = np.sqrt(ns)
    return FockOperators(n_fock=n_fock, annihilate=a, number=a.T @ a)


@dataclass(frozen=True)
class ThermalState:
    """Diagonal thermal occupation probabilities on a truncated Fock space."""

    n_fock: int
    probabilities: np.ndarray

    @property
    def mean_occupancy(self) -> float:
        return float(np.arange(self.n_fock) @ self.probabilities)


def thermal_state(nu: float, kbt: float, n_fock: int) -> ThermalState:
    """Boltzmann distribution over ``n_fock`` levels, renormalized after truncation.

    ``probabilities[n]`` is proportional to ``exp(-n*nu/kbt)``; ``kbt = 0``
    gives the ground state (1, 0, ...).  Renormalization keeps the total
    probability exactly 1 so that populations computed downstream stay
    bounded by 1.
    """
    if nu <= 0:
        raise ValueError(f"nu must be > 0, got {nu}")
    if kbt < 0:
        raise ValueError(f"kbt must be >= 0, got {kbt}")
    if n_fock < 2:
        raise ValueError(f"n_fock must be >= 2, got {n_fock}")
    p = np.zeros(n_fock)
    if kbt == 0.0:
        p[0] = 1.0
    else:
        p = np.exp(-np.arange(n_fock) * (nu / kbt))
        p /= p.sum()
    return ThermalState(n_fock=n_fock, probabilities=p)


def mean_occupancy(nu: float, kbt: float) -> float:
    """Bose-Einstein occupancy 1/(exp(nu/kbt) - 1) of the untruncated mode.

    The ``kbt = 0`` limit returns 0.
    """
    if nu <= 0:
        raise ValueError(f"nu must be > 0, got {nu}")
    if kbt < 0:
        raise ValueError(f"kbt must be >= 0, got {kbt}")
    if kbt == 0.0:
        return 0.0
    return 1.0 / np.expm1(nu / kbt)


def initial_density(trimer_site: int, state_a: ThermalState, state_b: ThermalState) -> np.ndarray:
    """Diagonal weights of |site><site| x rho_a x rho_b over the product basis.

    Returns an array of shape ``(3, n_fock_a, n_fock_b)`` whose ``(s, n, m)``
    entry is ``delta_{s,site-1} * p_a[n] * p_b[m]``; the weights sum to 1.
    Sites are numbered 1..3 (donor, bridge, acceptor).
    """
    if trimer_site not in (1, 2, 3):
        raise ValueError(f"trimer_site must be 1, 2 or 3, got {trimer_site}")
    w = np.zeros((3, state_a.n_fock, state_b.n_fock))
    w[trimer_site - 1] = np.outer(state_a.probabilities, state_b.probabilities)
    return w

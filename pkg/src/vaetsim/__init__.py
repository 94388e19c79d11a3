"""Exact and perturbative dynamics of a three-site excitonic chain coupled to
two bosonic vibrational modes, with 2D transfer spectra, vibronic level sweeps
and non-Hermitian site decay.

Units: all energies and frequencies are angular frequencies in rad/ms, times
are in ms, and hbar = 1 (so phases are E*t directly).  A frequency of
0.52 rad/ms corresponds to an oscillation period of 2*pi/0.52 ~ 12 ms.
"""

__version__ = "0.1.0"

from .model import (
    TrimerParams,
    VibrationalModeSpec,
    CouplingTopology,
    DissipationSpec,
    EffectiveHamiltonian,
    HamiltonianSizeError,
    build_effective_hamiltonian,
    preset,
)
from .fock import FockOperators, ThermalState, thermal_state, mean_occupancy, initial_density
from .dynamics import TransferTrace, propagate_trace, trace_norm_series, convergence_sweep
from .spectra import ScanConfig, SpectrumGrid, Feature, FeatureSet, scan_2d, take_slice, classify_features
from .perturb import (
    SymmetricEigenSystem,
    CouplingCoefficients,
    symmetric_eigensystem,
    coupling_coefficients,
    amplitude,
    p3_perturbative,
)
from .vibronic import VibronicSweep, AvoidedCrossing, sweep_spectrum, find_avoided_crossings

__all__ = [
    "TrimerParams",
    "VibrationalModeSpec",
    "CouplingTopology",
    "DissipationSpec",
    "EffectiveHamiltonian",
    "HamiltonianSizeError",
    "build_effective_hamiltonian",
    "preset",
    "FockOperators",
    "ThermalState",
    "thermal_state",
    "mean_occupancy",
    "initial_density",
    "TransferTrace",
    "propagate_trace",
    "trace_norm_series",
    "convergence_sweep",
    "ScanConfig",
    "SpectrumGrid",
    "Feature",
    "FeatureSet",
    "scan_2d",
    "take_slice",
    "classify_features",
    "SymmetricEigenSystem",
    "CouplingCoefficients",
    "symmetric_eigensystem",
    "coupling_coefficients",
    "amplitude",
    "p3_perturbative",
    "VibronicSweep",
    "AvoidedCrossing",
    "sweep_spectrum",
    "find_avoided_crossings",
]

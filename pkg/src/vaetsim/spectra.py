"""2D transfer-probability scans over the two mode frequencies and
classification of the resulting spectral lines.

Grid points are independent work items evaluated through a parallel map with
deterministic aggregation (results are placed by index, never by completion
order), so grids are bitwise reproducible for any worker count.
"""

from __future__ import annotations

import dataclasses
import multiprocessing
import os
from dataclasses import dataclass, field

import numpy as np

from .dynamics import propagate_trace
from .fock import initial_density, thermal_state
from .model import (
    CouplingTopology,
    DissipationSpec,
    TrimerParams,
    VibrationalModeSpec,
    build_effective_hamiltonian,
)

DEFAULT_WORKERS_ENV = "VAETSIM_WORKERS"


def default_workers() -> int:
    value = os.environ.get(DEFAULT_WORKERS_ENV)
    if value:
        return max(1, int(value))
    return 1


def axis_values(rng: tuple[float, float, float]) -> np.ndarray:
    """Inclusive (start, stop, step) axis; stop is included up to fp slack."""
    start, stop, step = rng
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    if stop < start:
        raise ValueError(f"empty range {rng}")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


@dataclass(frozen=True)
class ScanConfig:
    """Rectangular frequency scan: ranges are (start, stop, step) in rad/ms.

    ``mode_a``/``mode_b`` act as templates; their ``nu`` is replaced at each
    grid point.
    """

    trimer: TrimerParams
    mode_a: VibrationalModeSpec
    mode_b: VibrationalModeSpec
    nu_a_range: tuple[float, float, float]
    nu_b_range: tuple[float, float, float]
    topology: CouplingTopology = CouplingTopology.transverse()
    dissipation: DissipationSpec = DissipationSpec()
    t_final: float = 400.0
    sample_step: float = 0.5
    workers: int = 1

    def __post_init__(self):
        for rng in (self.nu_a_range, self.nu_b_range):
            vals = axis_values(rng)
            if vals.size == 0 or vals[0] <= 0:
                raise ValueError(f"frequencies must be positive, got range {rng}")
        if self.t_final <= 0 or self.sample_step <= 0:
            raise ValueError("t_final and sample_step must be positive")

    def times(self) -> np.ndarray:
        n = int(round(self.t_final / self.sample_step))
        return np.linspace(0.0, n * self.sample_step, n + 1)

    def delta31(self) -> float:
        half = self.topology.variant == "longitudinal"
        return self.trimer.eigen_gap_31(half_site_energies=half)


@dataclass(frozen=True)
class SpectrumGrid:
    """Max/Int transfer metrics over the (nu_a, nu_b) grid.

    ``max_p3[i, j]`` belongs to ``(nu_a[i], nu_b[j])``.  Axes are stored raw;
    normalization by the excitonic span ``delta31`` is presentation only.
    """

    nu_a: np.ndarray
    nu_b: np.ndarray
    max_p3: np.ndarray
    int_p3: np.ndarray
    delta31: float

    @property
    def nu_a_over_d31(self) -> np.ndarray:
        return self.nu_a / self.delta31

    @property
    def nu_b_over_d31(self) -> np.ndarray:
        return self.nu_b / self.delta31

    def transposed(self) -> "SpectrumGrid":
        return SpectrumGrid(
            nu_a=self.nu_b.copy(),
            nu_b=self.nu_a.copy(),
            max_p3=self.max_p3.T.copy(),
            int_p3=self.int_p3.T.copy(),
            delta31=self.delta31,
        )


def _scan_point(task) -> tuple[float, float]:
    config, nu_a, nu_b = task
    try:
        mode_a = config.mode_a.with_nu(nu_a)
        mode_b = config.mode_b.with_nu(nu_b)
        ham = build_effective_hamiltonian(
            config.trimer, mode_a, mode_b, config.topology, config.dissipation
        )
        init = initial_density(
            1,
            thermal_state(mode_a.nu, mode_a.kbt, mode_a.n_fock),
            thermal_state(mode_b.nu, mode_b.kbt, mode_b.n_fock),
        )
        trace = propagate_trace(ham, init, config.times())
        return trace.max_p3, trace.int_p3
    except Exception as exc:
        raise RuntimeError(f"scan point (nu_a={nu_a}, nu_b={nu_b}) failed: {exc}") from exc


def _parallel_map(fn, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunk = max(1, len(items) // (workers * 8))
    with multiprocessing.get_context("fork").Pool(workers) as pool:
        return pool.map(fn, items, chunksize=chunk)


def scan_2d(config: ScanConfig, workers: int | None = None) -> SpectrumGrid:
    """Evaluate Max[P3] and Int[P3] on every grid point.

    Results are identical for any worker count; per-point failures abort the
    scan annotated with the offending frequencies.
    """
    if workers is None:
        workers = config.workers
    nu_a = axis_values(config.nu_a_range)
    nu_b = axis_values(config.nu_b_range)
    tasks = [(config, va, vb) for va in nu_a for vb in nu_b]
    results = _parallel_map(_scan_point, tasks, workers)
    max_p3 = np.array([r[0] for r in results]).reshape(nu_a.size, nu_b.size)
    int_p3 = np.array([r[1] for r in results]).reshape(nu_a.size, nu_b.size)
    return SpectrumGrid(
        nu_a=nu_a, nu_b=nu_b, max_p3=max_p3, int_p3=int_p3, delta31=config.delta31()
    )


@dataclass(frozen=True)
class SliceProfile:
    """1D cut of a grid at the nearest line of the fixed axis."""

    fixed_axis: str
    at_requested: float
    at_actual: float
    axis: np.ndarray
    max_p3: np.ndarray
    int_p3: np.ndarray


def take_slice(grid: SpectrumGrid, axis: str, at: float) -> SliceProfile:
    """Profile along the free axis with ``axis`` ('nu_a' | 'nu_b') fixed near ``at``."""
    if axis == "nu_b":
        values = grid.nu_b
    elif axis == "nu_a":
        values = grid.nu_a
    else:
        raise ValueError(f"axis must be 'nu_a' or 'nu_b', got {axis!r}")
    if not (values[0] - 1e-12 <= at <= values[-1] + 1e-12):
        raise ValueError(f"at={at} outside {axis} range [{values[0]}, {values[-1]}]")
    idx = int(np.argmin(np.abs(values - at)))
    if axis == "nu_b":
        return SliceProfile("nu_b", at, float(values[idx]), grid.nu_a, grid.max_p3[:, idx], grid.int_p3[:, idx])
    return SliceProfile("nu_a", at, float(values[idx]), grid.nu_b, grid.max_p3[idx, :], grid.int_p3[idx, :])


# ---------------------------------------------------------------------------
# Feature classification
# ---------------------------------------------------------------------------

KIND_SINGLE_A = "single_mode_a"
KIND_SINGLE_B = "single_mode_b"
KIND_COOP_SUM = "cooperative_sum"
KIND_HETERO_AB = "hetero_diff_ab"
KIND_HETERO_BA = "hetero_diff_ba"


@dataclass(frozen=True)
class Feature:
    """One candidate spectral line with its detection verdict.

    ``order`` is the phonon count k for single-mode lines and the divisor m
    for sum/difference lines (locus at delta31/m).
    """

    kind: str
    order: int
    locus: str
    target: float
    prominence: float
    detected: bool
    n_cells: int


@dataclass(frozen=True)
class FeatureSet:
    features: list[Feature]
    threshold: float
    band: float
    delta31: float

    def detected(self) -> list[Feature]:
        return [f for f in self.features if f.detected]

    def find(self, kind: str, order: int) -> Feature:
        for f in self.features:
            if f.kind == kind and f.order == order:
                return f
        raise KeyError(f"no candidate {kind}({order})")

    def is_detected(self, kind: str, order: int) -> bool:
        return self.find(kind, order).detected


def _candidate_exprs(grid: SpectrumGrid, orders: int):
    a = grid.nu_a[:, None]
    b = grid.nu_b[None, :]
    d31 = grid.delta31
    cands = []
    for k in range(1, orders + 1):
        cands.append((KIND_SINGLE_A, k, f"nu_a = d31/{k}", d31 / k, a - d31 / k + 0.0 * b))
        cands.append((KIND_SINGLE_B, k, f"nu_b = d31/{k}", d31 / k, b - d31 / k + 0.0 * a))
    for m in range(1, orders // 2 + 1):
        cands.append((KIND_COOP_SUM, m, f"nu_a + nu_b = d31/{m}", d31 / m, a + b - d31 / m))
        cands.append((KIND_HETERO_AB, m, f"nu_a - nu_b = d31/{m}", d31 / m, a - b - d31 / m))
        cands.append((KIND_HETERO_BA, m, f"nu_b - nu_a = d31/{m}", d31 / m, b - a - d31 / m))
    return cands


def classify_features(
    grid: SpectrumGrid,
    orders: int = 4,
    band: float = 0.02,
    threshold: float = 1.5,
    min_cells: int = 3,
    neighborhood: float = 6.0,
) -> FeatureSet:
    """Score every candidate locus against a local off-locus background.

    A candidate's signal is the mean Max[P3] over cells within ``band`` of
    its locus (cells shared with other loci excluded); the background is the
    median over cells within ``neighborhood * band`` of the locus but away
    from every candidate locus.  Detection thresholds are reported with the
    result and are tunable; they are presentation defaults, not physics.
    """
    cands = _candidate_exprs(grid, orders)
    on_masks = [np.abs(expr) <= band for *_unused, expr in cands]
    guard_masks = [np.abs(expr) <= 1.5 * band for *_unused, expr in cands]
    any_guard = np.logical_or.reduce(guard_masks)

    features = []
    for idx, (kind, order, locus, target, expr) in enumerate(cands):
        others = [m for j, m in enumerate(on_masks) if j != idx]
        on = on_masks[idx] & ~np.logical_or.reduce(others) if others else on_masks[idx]
        near = (np.abs(expr) <= neighborhood * band) & ~any_guard
        if not near.any():
            near = ~any_guard
        n_cells = int(on.sum())
        if n_cells == 0 or not near.any():
            features.append(Feature(kind, order, locus, target, float("nan"), False, n_cells))
            continue
        signal = float(grid.max_p3[on].mean())
        background = float(np.median(grid.max_p3[near]))
        prominence = signal / background if background > 0 else float("inf")
        detected = bool(prominence >= threshold and n_cells >= min_cells)
        features.append(Feature(kind, order, locus, target, prominence, detected, n_cells))
    return FeatureSet(features=features, threshold=threshold, band=band, delta31=grid.delta31)

"""Command-line front end: config ingestion, run orchestration, persistence.

Subcommands: spectrum2d, trace, vibronic, perturb, convergence, presets.
Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O
failure.  Worker count resolution order: --workers flag, output.workers in
the config, the VAETSIM_WORKERS environment variable, then 1.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, trace_variant
from .dynamics import PropagatorError, convergence_sweep, propagate_trace, trace_norm_series
from .fock import initial_density, thermal_state
from .model import (
    HamiltonianSizeError,
    build_effective_hamiltonian,
    preset,
    preset_names,
)
from .output import write_csv, write_heatmap_svg, write_json, write_meta
from .perturb import coupling_coefficients, p3_perturbative, symmetric_eigensystem, _parse_legs, amplitude
from .spectra import ScanConfig, classify_features, default_workers, scan_2d
from .vibronic import find_avoided_crossings, sweep_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _times(cfg: RunConfig) -> np.ndarray:
    n = int(round(cfg.t_final / cfg.sample_step))
    return np.linspace(0.0, n * cfg.sample_step, n + 1)


def _workers(cfg: RunConfig, args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    if cfg.workers is not None:
        return max(1, cfg.workers)
    return default_workers()


def _thermal_init(mode_a, mode_b):
    return initial_density(
        1,
        thermal_state(mode_a.nu, mode_a.kbt, mode_a.n_fock),
        thermal_state(mode_b.nu, mode_b.kbt, mode_b.n_fock),
    )


def cmd_spectrum2d(cfg: RunConfig, args, outdir: str) -> int:
    raw = cfg.raw
    if "scan" not in raw:
        raise ConfigError("spectrum2d requires a 'scan' block with nu_a and nu_b ranges")
    scan_block = raw["scan"]
    for key in ("nu_a", "nu_b"):
        rng = scan_block.get(key)
        if not (isinstance(rng, list) and len(rng) == 3):
            raise ConfigError(f"scan.{key} must be [start, stop, step]")
    config = ScanConfig(
        trimer=cfg.trimer,
        mode_a=cfg.mode_a,
        mode_b=cfg.mode_b,
        nu_a_range=tuple(float(v) for v in scan_block["nu_a"]),
        nu_b_range=tuple(float(v) for v in scan_block["nu_b"]),
        topology=cfg.topology,
        dissipation=cfg.dissipation,
        t_final=cfg.t_final,
        sample_step=cfg.sample_step,
    )
    grid = scan_2d(config, workers=_workers(cfg, args))

    fblock = raw.get("features", {})
    features = classify_features(
        grid,
        orders=int(fblock.get("orders", 4)),
        band=float(fblock.get("band", 0.02)),
        threshold=float(fblock.get("threshold", 1.5)),
    )

    rows = []
    for i, va in enumerate(grid.nu_a):
        for jj, vb in enumerate(grid.nu_b):
            rows.append(
                (va, vb, va / grid.delta31, vb / grid.delta31, grid.max_p3[i, jj], grid.int_p3[i, jj])
            )
    csv_path = os.path.join(outdir, "spectrum.csv")
    write_csv(csv_path, ("nu_a", "nu_b", "nu_a_over_d31", "nu_b_over_d31", "max_p3", "int_p3"), rows)
    write_json(
        os.path.join(outdir, "features.json"),
        {
            "delta31": grid.delta31,
            "band": features.band,
            "threshold": features.threshold,
            "features": features.features,
        },
    )
    outputs = ["spectrum.csv", "features.json"]
    if cfg.svg:
        write_heatmap_svg(
            os.path.join(outdir, "spectrum.svg"),
            grid.nu_a,
            grid.nu_b,
            grid.max_p3,
            grid.delta31,
            "Max[P3] transfer spectrum",
        )
        outputs.append("spectrum.svg")
    write_meta(outdir, "spectrum2d", raw, {"outputs": outputs, "delta31": grid.delta31,
                                           "grid_shape": [int(grid.nu_a.size), int(grid.nu_b.size)]}, __version__)
    print(f"spectrum2d: {grid.nu_a.size}x{grid.nu_b.size} grid -> {outdir}")
    return EXIT_OK


def cmd_trace(cfg: RunConfig, args, outdir: str) -> int:
    raw = cfg.raw
    entries = raw.get("traces") or [{}]
    times = _times(cfg)
    summary = []
    outputs = []
    for index, entry in enumerate(entries):
        label, mode_a, mode_b, topology, dissipation = trace_variant(cfg, entry, index)
        ham = build_effective_hamiltonian(cfg.trimer, mode_a, mode_b, topology, dissipation)
        init = _thermal_init(mode_a, mode_b)
        trace = propagate_trace(ham, init, times)
        norm = trace_norm_series(ham, init, times)
        name = "trace.csv" if len(entries) == 1 else f"trace_{label}.csv"
        write_csv(os.path.join(outdir, name), ("t_ms", "p3", "trace_norm"), zip(times, trace.p3, norm))
        outputs.append(name)
        summary.append({"label": label, "file": name, "max_p3": trace.max_p3, "int_p3": trace.int_p3})
        print(f"trace[{label}]: max_p3={trace.max_p3:.6g} int_p3={trace.int_p3:.6g}")
    write_meta(outdir, "trace", raw, {"outputs": outputs, "traces": summary}, __version__)
    return EXIT_OK


def cmd_vibronic(cfg: RunConfig, args, outdir: str) -> int:
    raw = cfg.raw
    if "sweep" not in raw:
        raise ConfigError("vibronic requires a 'sweep' block with a nu_a range")
    rng = raw["sweep"].get("nu_a")
    if not (isinstance(rng, list) and len(rng) == 3):
        raise ConfigError("sweep.nu_a must be [start, stop, step]")
    start, stop, step = (float(v) for v in rng)
    n_fock = int(raw["sweep"].get("n_fock", 3))
    nu_a_values = np.arange(start, stop + step * 1e-9, step)
    sweep = sweep_spectrum(
        cfg.trimer, cfg.mode_b, (cfg.mode_a.kappa, cfg.mode_b.kappa), nu_a_values, n_fock=n_fock
    )
    crossings = find_avoided_crossings(sweep)

    header = ["nu_a"] + [f"level_{k}" for k in range(sweep.n_levels_kept)]
    rows = [(nu, *sweep.levels[i]) for i, nu in enumerate(sweep.nu_a_values)]
    write_csv(os.path.join(outdir, "levels.csv"), header, rows)
    write_json(
        os.path.join(outdir, "crossings.json"),
        {
            "n_fock": n_fock,
            "nu_b": cfg.mode_b.nu,
            "kappas": [cfg.mode_a.kappa, cfg.mode_b.kappa],
            "crossings": [
                {
                    "level_pair": list(c.level_pair),
                    "nu_a": c.nu_a,
                    "min_gap": c.min_gap,
                    "labels_lower": [list(l) for l in c.labels_lower],
                    "labels_upper": [list(l) for l in c.labels_upper],
                }
                for c in crossings
            ],
        },
    )
    write_meta(outdir, "vibronic", raw, {"outputs": ["levels.csv", "crossings.json"],
                                         "n_crossings": len(crossings)}, __version__)
    print(f"vibronic: {sweep.nu_a_values.size} sweep points, {len(crossings)} avoided crossings")
    return EXIT_OK


def cmd_perturb(cfg: RunConfig, args, outdir: str) -> int:
    raw = cfg.raw
    block = raw.get("perturb", {})
    regime = block.get("regime", "weak_j")
    if not cfg.trimer.is_symmetric:
        raise ConfigError("perturb requires symmetric trimer parameters")
    sys_ = symmetric_eigensystem(cfg.trimer.delta, cfg.trimer.j)
    coeffs = coupling_coefficients(sys_)
    times = _times(cfg)

    import warnings as _warnings

    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        result = p3_perturbative(
            sys_,
            coeffs,
            (cfg.mode_a, cfg.mode_b),
            times,
            regime=regime,
            include_nonconserving=bool(block.get("include_nonconserving", False)),
        )
    regime_warnings = [str(w.message) for w in caught]

    columns = {"t_ms": times, "p3_perturb": result.trace.p3}
    if block.get("compare_exact", True):
        ham = build_effective_hamiltonian(cfg.trimer, cfg.mode_a, cfg.mode_b, cfg.topology, cfg.dissipation)
        exact = propagate_trace(ham, _thermal_init(cfg.mode_a, cfg.mode_b), times)
        columns["p3_exact"] = exact.p3
    for name, series in result.terms.items():
        columns[f"term_{name}"] = series
    write_csv(os.path.join(outdir, "perturb_terms.csv"), list(columns), zip(*columns.values()))

    # elementary pathway amplitudes at the end of the window
    t_final = float(times[-1])
    kappas = (cfg.mode_a.kappa, cfg.mode_b.kappa)
    nus = (cfg.mode_a.nu, cfg.mode_b.nu)
    pathway_rows = []
    for spec, path in _elementary_pathways():
        value = amplitude(_parse_legs(spec, path), t_final, sys_, coeffs, kappas, nus)
        pathway_rows.append((f"W[{spec}]{'-'.join(map(str, path))}", len(spec) // 2, value.real, value.imag, abs(value) ** 2))
    write_csv(
        os.path.join(outdir, "perturb_pathways.csv"),
        ("pathway", "order", "amplitude_re", "amplitude_im", "amplitude_abs2"),
        pathway_rows,
    )
    write_meta(
        outdir,
        "perturb",
        raw,
        {
            "outputs": ["perturb_terms.csv", "perturb_pathways.csv"],
            "regime": regime,
            "regime_warnings": regime_warnings + result.notes,
        },
        __version__,
    )
    print(f"perturb[{regime}]: max_p3={result.trace.max_p3:.6g} terms={len(result.terms)}")
    return EXIT_OK


def _elementary_pathways():
    for mode in "ab":
        yield f"-{mode}", (3, 1)
        yield f"+{mode}", (1, 3)
        yield f"-{mode}-{mode}", (3, 2, 1)
    yield "-a-b", (3, 2, 1)
    yield "-b-a", (3, 2, 1)


def cmd_convergence(cfg: RunConfig, args, outdir: str) -> int:
    raw = cfg.raw
    if "convergence" not in raw or "n_values" not in raw["convergence"]:
        raise ConfigError("convergence requires convergence.n_values")
    n_values = [int(v) for v in raw["convergence"]["n_values"]]
    times = _times(cfg)
    result = convergence_sweep(
        cfg.trimer,
        cfg.mode_a,
        cfg.mode_b,
        n_values,
        (cfg.mode_a.nu, cfg.mode_b.nu, times),
        topology=cfg.topology,
        dissipation=cfg.dissipation,
    )
    header = ["t_ms"] + [f"p3_N{n}" for n in n_values]
    rows = zip(times, *(result.traces[n].p3 for n in n_values))
    write_csv(os.path.join(outdir, "convergence.csv"), header, rows)
    write_csv(
        os.path.join(outdir, "deviations.csv"),
        ("n_small", "n_large", "max_abs_deviation"),
        [(str(a), str(b), d) for (a, b), d in sorted(result.deviations.items())],
    )
    write_meta(outdir, "convergence", raw, {"outputs": ["convergence.csv", "deviations.csv"]}, __version__)
    for (a, b), d in sorted(result.deviations.items()):
        print(f"convergence: N={a} vs N={b}: max deviation {d:.3e}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in preset_names():
        row = preset(name)
        print(f"{name} [{row.units}]")
        print(f"  omega_tilde = {row.trimer.omega_tilde}, j12 = {row.trimer.j12}, j23 = {row.trimer.j23}")
        print(
            f"  mode_a: nu = {row.mode_a.nu}, kappa = {row.mode_a.kappa}, kbt = {row.mode_a.kbt}; "
            f"mode_b: nu = {row.mode_b.nu}, kappa = {row.mode_b.kappa}, kbt = {row.mode_b.kbt}"
        )
        if row.note:
            print(f"  note: {row.note}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vaetsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vaetsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                       help="override a scalar config key, e.g. --set mode_a.nu=0.52")
        p.add_argument("--workers", type=int, default=None, help="parallel worker count")
        return p

    add_run_command("spectrum2d", "2D (nu_a, nu_b) transfer spectrum with feature classification")
    add_run_command("trace", "time traces of the acceptor population (batch capable)")
    add_run_command("vibronic", "eigenvalue sweep over nu_a with avoided-crossing detection")
    add_run_command("perturb", "order-by-order perturbative transfer probability")
    add_run_command("convergence", "Fock-truncation convergence study")
    sub.add_parser("presets", help="print the reference parameter table")
    return parser


_COMMANDS = {
    "spectrum2d": cmd_spectrum2d,
    "trace": cmd_trace,
    "vibronic": cmd_vibronic,
    "perturb": cmd_perturb,
    "convergence": cmd_convergence,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        return cmd_presets(args)
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return _COMMANDS[args.command](cfg, args, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HamiltonianSizeError, PropagatorError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())

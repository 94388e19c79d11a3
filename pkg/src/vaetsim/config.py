"""Strict JSON run-configuration loading for the command-line tool.

The schema is a nested key-value structure (see README for the full listing);
unknown keys are rejected with their path so typos cannot silently fall back
to defaults.  Scalar values can be overridden from the command line with
``--set dotted.path=value``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .model import CouplingTopology, DissipationSpec, TrimerParams, VibrationalModeSpec


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


_TRACE_OVERRIDE_KEYS = {
    "label",
    "nu_a",
    "nu_b",
    "kappa_a",
    "kappa_b",
    "kbt_a",
    "kbt_b",
    "n_fock",
    "gamma",
    "zeta",
}

_SCHEMA: dict[str, Any] = {
    "trimer": {"omega_tilde": list, "j12": float, "j23": float, "j13": float},
    "mode_a": {"nu": float, "kappa": float, "kbt": float, "n_fock": int},
    "mode_b": {"nu": float, "kappa": float, "kbt": float, "n_fock": int},
    "topology": {"variant": str, "zeta": float},
    "dissipation": {"gamma": list},
    "time": {"t_final": float, "sample_step": float},
    "scan": {"nu_a": list, "nu_b": list},
    "features": {"orders": int, "band": float, "threshold": float},
    "sweep": {"nu_a": list, "n_fock": int},
    "perturb": {"regime": str, "include_nonconserving": bool, "compare_exact": bool},
    "convergence": {"n_values": list},
    "traces": list,
    "output": {"svg": bool, "workers": int, "seed": int},
}


def _check_keys(data: dict, schema: dict, path: str) -> None:
    for key, value in data.items():
        if key not in schema:
            raise ConfigError(f"unknown key {path}{key!r} (allowed: {sorted(schema)})")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}{key} must be an object")
            _check_keys(value, expected, f"{path}{key}.")
        elif expected is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{path}{key} must be a number, got {value!r}")
        elif expected is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{path}{key} must be an integer, got {value!r}")
        elif expected is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{path}{key} must be a boolean, got {value!r}")
        elif expected is str:
            if not isinstance(value, str):
                raise ConfigError(f"{path}{key} must be a string, got {value!r}")
        elif expected is list:
            if not isinstance(value, list):
                raise ConfigError(f"{path}{key} must be a list, got {value!r}")


def _triple(value, path: str) -> tuple[float, float, float]:
    if not (isinstance(value, list) and len(value) == 3):
        raise ConfigError(f"{path} must be a list of three numbers")
    return tuple(float(v) for v in value)


@dataclass
class RunConfig:
    """Validated parameter blocks shared by all subcommands."""

    raw: dict
    trimer: TrimerParams
    mode_a: VibrationalModeSpec
    mode_b: VibrationalModeSpec
    topology: CouplingTopology
    dissipation: DissipationSpec
    t_final: float = 400.0
    sample_step: float = 0.5
    svg: bool = False
    workers: int | None = None
    seed: int = 0  # reserved; the physics is deterministic


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``--set dotted.path=value`` assignments onto the raw dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects path=value, got {item!r}")
        path, _, raw_value = item.partition("=")
        keys = path.strip().split(".")
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set path {path!r} descends into a non-object")
        node[keys[-1]] = value
    return data


def _mode(block: dict, path: str) -> VibrationalModeSpec:
    for req in ("nu", "kappa", "kbt", "n_fock"):
        if req not in block:
            raise ConfigError(f"{path}.{req} is required")
    try:
        return VibrationalModeSpec(
            nu=float(block["nu"]),
            kappa=float(block["kappa"]),
            kbt=float(block["kbt"]),
            n_fock=int(block["n_fock"]),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be an object")
    _check_keys(data, _SCHEMA, "")
    for block in ("trimer", "mode_a", "mode_b"):
        if block not in data:
            raise ConfigError(f"missing required block {block!r}")

    tr = data["trimer"]
    if "omega_tilde" not in tr or "j12" not in tr or "j23" not in tr:
        raise ConfigError("trimer requires omega_tilde, j12, j23")
    try:
        trimer = TrimerParams(
            omega_tilde=_triple(tr["omega_tilde"], "trimer.omega_tilde"),
            j12=float(tr["j12"]),
            j23=float(tr["j23"]),
            j13=float(tr.get("j13", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"trimer: {exc}") from exc

    topo_block = data.get("topology", {})
    variant = topo_block.get("variant", "transverse")
    try:
        topology = CouplingTopology(variant=variant, zeta=float(topo_block.get("zeta", 1.0)))
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from exc

    diss_block = data.get("dissipation", {})
    try:
        dissipation = DissipationSpec(gamma=_triple(diss_block.get("gamma", [0, 0, 0]), "dissipation.gamma"))
    except ValueError as exc:
        raise ConfigError(f"dissipation: {exc}") from exc

    time_block = data.get("time", {})
    out_block = data.get("output", {})
    for entry in data.get("traces", []):
        if not isinstance(entry, dict):
            raise ConfigError("traces entries must be objects")
        unknown = set(entry) - _TRACE_OVERRIDE_KEYS
        if unknown:
            raise ConfigError(f"traces entry has unknown keys {sorted(unknown)}")

    cfg = RunConfig(
        raw=data,
        trimer=trimer,
        mode_a=_mode(data["mode_a"], "mode_a"),
        mode_b=_mode(data["mode_b"], "mode_b"),
        topology=topology,
        dissipation=dissipation,
        t_final=float(time_block.get("t_final", 400.0)),
        sample_step=float(time_block.get("sample_step", 0.5)),
        svg=bool(out_block.get("svg", False)),
        workers=out_block.get("workers"),
        seed=int(out_block.get("seed", 0)),
    )
    if cfg.t_final <= 0 or cfg.sample_step <= 0:
        raise ConfigError("time.t_final and time.sample_step must be positive")
    return cfg


def load_config(path: str, overrides: list[str] | None = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if overrides:
        data = apply_overrides(data, overrides)
    return parse_config(data)


def trace_variant(cfg: RunConfig, entry: dict, index: int):
    """Materialize one batch-trace entry: (label, mode_a, mode_b, topology, dissipation)."""
    label = str(entry.get("label", f"set{index:03d}"))
    mode_a = cfg.mode_a
    mode_b = cfg.mode_b
    if "nu_a" in entry:
        mode_a = mode_a.with_nu(float(entry["nu_a"]))
    if "nu_b" in entry:
        mode_b = mode_b.with_nu(float(entry["nu_b"]))
    if "kappa_a" in entry:
        mode_a = VibrationalModeSpec(mode_a.nu, float(entry["kappa_a"]), mode_a.kbt, mode_a.n_fock)
    if "kappa_b" in entry:
        mode_b = VibrationalModeSpec(mode_b.nu, float(entry["kappa_b"]), mode_b.kbt, mode_b.n_fock)
    if "kbt_a" in entry:
        mode_a = VibrationalModeSpec(mode_a.nu, mode_a.kappa, float(entry["kbt_a"]), mode_a.n_fock)
    if "kbt_b" in entry:
        mode_b = VibrationalModeSpec(mode_b.nu, mode_b.kappa, float(entry["kbt_b"]), mode_b.n_fock)
    if "n_fock" in entry:
        mode_a = mode_a.with_n_fock(int(entry["n_fock"]))
        mode_b = mode_b.with_n_fock(int(entry["n_fock"]))
    topology = cfg.topology
    if "zeta" in entry:
        topology = CouplingTopology(variant=cfg.topology.variant, zeta=float(entry["zeta"]))
    dissipation = cfg.dissipation
    if "gamma" in entry:
        dissipation = DissipationSpec(gamma=_triple(entry["gamma"], "traces.gamma"))
    return label, mode_a, mode_b, topology, dissipation

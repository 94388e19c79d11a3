"""File emitters: byte-stable CSV, structured JSON, and a dependency-free SVG
heatmap for quick inspection (presentation only, never parsed by tests)."""

from __future__ import annotations

import dataclasses
import json
import os
from typing import Iterable, Sequence

import numpy as np

#: 17 significant digits round-trip IEEE doubles exactly.
_FMT = "%.17g"


def fmt(value: float) -> str:
    return _FMT % value


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[float | str]]) -> None:
    """Locale-independent CSV with LF endings and full-precision floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def write_json(path: str, payload) -> None:
    def default(obj):
        if dataclasses.is_dataclass(obj):
            return dataclasses.asdict(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        raise TypeError(f"not JSON-serializable: {type(obj)}")

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")


def write_meta(outdir: str, subcommand: str, config_raw: dict, extra: dict, version: str) -> str:
    """Every run emits a self-describing record of its resolved inputs."""
    path = os.path.join(outdir, "meta.json")
    write_json(path, {"tool": "vaetsim", "version": version, "subcommand": subcommand, "config": config_raw, **extra})
    return path


# ---------------------------------------------------------------------------
# SVG heatmap
# ---------------------------------------------------------------------------

_STOPS = [
    (0.267, 0.005, 0.329),
    (0.283, 0.141, 0.458),
    (0.254, 0.265, 0.530),
    (0.164, 0.471, 0.558),
    (0.128, 0.567, 0.551),
    (0.135, 0.659, 0.518),
    (0.267, 0.749, 0.441),
    (0.478, 0.821, 0.318),
    (0.741, 0.873, 0.150),
    (0.993, 0.906, 0.144),
]


def _color(x: float) -> str:
    x = min(max(x, 0.0), 1.0)
    pos = x * (len(_STOPS) - 1)
    i = min(int(pos), len(_STOPS) - 2)
    frac = pos - i
    rgb = [(1 - frac) * _STOPS[i][c] + frac * _STOPS[i + 1][c] for c in range(3)]
    return "#%02x%02x%02x" % tuple(int(round(255 * v)) for v in rgb)


def write_heatmap_svg(
    path: str,
    nu_a: np.ndarray,
    nu_b: np.ndarray,
    values: np.ndarray,
    delta31: float,
    title: str,
) -> None:
    """Linear-scale heatmap of values[i, j] at (nu_a[i], nu_b[j]).

    Axes are drawn normalized by delta31 with tick marks on the 1/k loci.
    """
    size, margin, bar_w = 560, 70, 18
    vmin, vmax = float(values.min()), float(values.max())
    span = vmax - vmin if vmax > vmin else 1.0
    cell_w = size / len(nu_a)
    cell_h = size / len(nu_b)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 2 * margin + 60}" '
        f'height="{size + 2 * margin}" font-family="sans-serif" font-size="12">',
        f'<text x="{margin}" y="{margin - 30}" font-size="14">{title}</text>',
    ]
    for i in range(len(nu_a)):
        for jj in range(len(nu_b)):
            x = margin + i * cell_w
            y = margin + size - (jj + 1) * cell_h
            color = _color((values[i, jj] - vmin) / span)
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell_w + 0.5:.2f}" '
                f'height="{cell_h + 0.5:.2f}" fill="{color}"/>'
            )
    # frame and axis ticks at the 1/k loci
    parts.append(
        f'<rect x="{margin}" y="{margin}" width="{size}" height="{size}" fill="none" stroke="black"/>'
    )
    lo_a, hi_a = nu_a[0], nu_a[-1]
    lo_b, hi_b = nu_b[0], nu_b[-1]
    for k in range(1, 7):
        locus = delta31 / k
        if lo_a <= locus <= hi_a:
            x = margin + (locus - lo_a) / (hi_a - lo_a) * size
            parts.append(f'<line x1="{x:.1f}" y1="{margin + size}" x2="{x:.1f}" y2="{margin + size + 6}" stroke="black"/>')
            parts.append(f'<text x="{x:.1f}" y="{margin + size + 20}" text-anchor="middle">1/{k}</text>')
        if lo_b <= locus <= hi_b:
            y = margin + size - (locus - lo_b) / (hi_b - lo_b) * size
            parts.append(f'<line x1="{margin - 6}" y1="{y:.1f}" x2="{margin}" y2="{y:.1f}" stroke="black"/>')
            parts.append(f'<text x="{margin - 10}" y="{y + 4:.1f}" text-anchor="end">1/{k}</text>')
    parts.append(
        f'<text x="{margin + size / 2}" y="{margin + size + 42}" text-anchor="middle">nu_a / d31</text>'
    )
    parts.append(
        f'<text x="{margin - 46}" y="{margin + size / 2}" text-anchor="middle" '
        f'transform="rotate(-90 {margin - 46} {margin + size / 2})">nu_b / d31</text>'
    )
    # colorbar
    bx = margin + size + 20
    steps = 64
    for s in range(steps):
        y = margin + size - (s + 1) * size / steps
        parts.append(
            f'<rect x="{bx}" y="{y:.2f}" width="{bar_w}" height="{size / steps + 0.5:.2f}" '
            f'fill="{_color((s + 0.5) / steps)}"/>'
        )
    parts.append(f'<rect x="{bx}" y="{margin}" width="{bar_w}" height="{size}" fill="none" stroke="black"/>')
    parts.append(f'<text x="{bx + bar_w + 4}" y="{margin + 10}">{vmax:.3g}</text>')
    parts.append(f'<text x="{bx + bar_w + 4}" y="{margin + size}">{vmin:.3g}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")

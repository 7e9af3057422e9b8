"""CSV and SVG reporting for executed round streams.

The CSV is the canonical data artifact (one row per round: index, windowed
failure rate, basket membership).  The SVG plot is written directly -- pass
rate polyline, threshold line, shaded basket ranges -- with no timestamps,
so reports are byte-reproducible.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .mitigate import Basket


def write_phi_csv(
    path: str | Path,
    phi: np.ndarray,
    baskets: Sequence[Basket],
) -> None:
    in_basket = np.zeros(len(phi), dtype=bool)
    for b in baskets:
        in_basket[b.start : b.end] = True
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round_index", "phi", "in_basket"])
        for i, value in enumerate(phi):
            writer.writerow([i, f"{value:.6f}", int(in_basket[i])])


def _downsample(values: np.ndarray, max_points: int = 2000) -> tuple[np.ndarray, np.ndarray]:
    n = len(values)
    stride = max(1, n // max_points)
    idx = np.arange(0, n, stride)
    return idx, values[idx]


def write_pass_rate_svg(
    path: str | Path,
    phi: np.ndarray,
    baskets: Sequence[Basket],
    p_tilde: float,
    width: int = 900,
    height: int = 360,
) -> None:
    """Pass rate (1 - phi) over rounds with the acceptance threshold line
    and the identified baskets shaded."""
    margin = 50.0
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    n = max(len(phi), 1)
    y_lo, y_hi = 0.5, 1.0

    def x_of(i: float) -> float:
        return margin + plot_w * (i / max(n - 1, 1))

    def y_of(rate: float) -> float:
        clipped = min(max(rate, y_lo), y_hi)
        return margin + plot_h * (1.0 - (clipped - y_lo) / (y_hi - y_lo))

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    parts.append('<rect width="100%" height="100%" fill="white"/>')
    for b in baskets:
        x0, x1 = x_of(b.start), x_of(b.end - 1)
        parts.append(
            f'<rect x="{x0:.1f}" y="{margin:.1f}" width="{max(x1 - x0, 1.0):.1f}" '
            f'height="{plot_h:.1f}" fill="#cfe8cf" stroke="none"/>'
        )
    # axes
    parts.append(
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{margin + plot_h}" '
        'stroke="black" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{margin}" y1="{margin + plot_h}" x2="{margin + plot_w}" '
        f'y2="{margin + plot_h}" stroke="black" stroke-width="1"/>'
    )
    for tick in (0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
        y = y_of(tick)
        parts.append(
            f'<line x1="{margin - 4}" y1="{y:.1f}" x2="{margin}" y2="{y:.1f}" '
            'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{y + 4:.1f}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{tick:.1f}</text>'
        )
    threshold = 1.0 - p_tilde
    y_thr = y_of(threshold)
    parts.append(
        f'<line x1="{margin}" y1="{y_thr:.1f}" x2="{margin + plot_w}" y2="{y_thr:.1f}" '
        'stroke="#c04040" stroke-width="1" stroke-dasharray="6,4"/>'
    )
    parts.append(
        f'<text x="{margin + plot_w - 4}" y="{y_thr - 6:.1f}" font-size="11" '
        f'fill="#c04040" text-anchor="end" font-family="sans-serif">'
        f"threshold {threshold:.2f}</text>"
    )
    if len(phi):
        idx, vals = _downsample(np.asarray(phi))
        points = " ".join(
            f"{x_of(float(i)):.1f},{y_of(1.0 - float(v)):.1f}" for i, v in zip(idx, vals)
        )
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="#3050a0" stroke-width="1.2"/>'
        )
    parts.append(
        f'<text x="{width / 2:.0f}" y="{height - 10}" font-size="12" '
        'text-anchor="middle" font-family="sans-serif">round index</text>'
    )
    parts.append(
        f'<text x="14" y="{height / 2:.0f}" font-size="12" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 14 {height / 2:.0f})">'
        "test round pass rate</text>"
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")

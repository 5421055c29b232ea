"""Minimal deterministic scatter plots as SVG text."""

from __future__ import annotations

import numpy as np


def scatter_svg(points: np.ndarray, title: str = "", size: int = 480, radius: float = 1.0) -> str:
    """One circle per point of the unit square, y axis pointing up."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pad = 24
    span = size - 2 * pad
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + pad}" '
        f'viewBox="0 0 {size} {size + pad}">',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="white" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{size / 2:.1f}" y="{pad - 8}" text-anchor="middle" font-size="13">{title}</text>')
    out.append('<g fill="black">')
    for x1, x2 in pts:
        cx = pad + x1 * span
        cy = pad + (1.0 - x2) * span
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"

"""Persistence diagram plots as hand-written SVG.

The output is plain text with fixed-precision coordinates, so identical
inputs give byte-identical files.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .diagram import SignificanceBand
from .persistence import PersistenceDiagram, read_diagram_csv

SIZE = 480
MARGIN = 60
DIM_COLORS = {0: "#2ca02c", 1: "#1f77b4", 2: "#d62728"}
BAND_COLORS = ("#e377c2", "#000000", "#c71585", "#8c564b")


def _load(diagrams) -> list:
    """Accept diagrams, a dim->diagram mapping, or CSV paths."""
    if isinstance(diagrams, dict):
        diagrams = list(diagrams.values())
    out = []
    for d in diagrams:
        if isinstance(d, PersistenceDiagram):
            out.append(d)
        else:
            out.extend(read_diagram_csv(d).values())
    return sorted(out, key=lambda d: d.dim)


def _ticks(hi: float, count: int = 5) -> list:
    raw = hi / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    return [k * step for k in range(int(hi / step) + 1)]


def render_diagram_svg(diagrams, bands: Sequence = (), selected=None,
                       title: Optional[str] = None) -> str:
    dgms = _load(diagrams)
    bands = [b if isinstance(b, SignificanceBand) else SignificanceBand(float(b)) for b in bands]
    sel = _load([selected] if isinstance(selected, PersistenceDiagram) else selected or [])

    hi = max([float(d.pairs.max()) for d in dgms if len(d)] + [0.0])
    hi = hi * 1.05 if hi > 0 else 1.0
    lo = min([float(d.births.min()) for d in dgms if len(d)] + [0.0])
    span = hi - lo
    inner = SIZE - 2 * MARGIN

    def px(v):
        return MARGIN + (v - lo) / span * inner

    def py(v):
        return SIZE - MARGIN - (v - lo) / span * inner

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
           f'viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="#ffffff"/>']
    if title:
        out.append(f'<text x="{SIZE / 2:.2f}" y="24" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')

    # axes and ticks
    x0, y0, x1, y1 = px(lo), py(lo), px(hi), py(hi)
    out.append(f'<g stroke="#333333" stroke-width="1">'
               f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}"/>'
               f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}"/></g>')
    for t in _ticks(span):
        v = lo + t
        out.append(f'<text x="{px(v):.2f}" y="{y0 + 16:.2f}" text-anchor="middle">{v:.3g}</text>')
        out.append(f'<text x="{x0 - 6:.2f}" y="{py(v) + 4:.2f}" text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{SIZE / 2:.2f}" y="{SIZE - 20}" text-anchor="middle">birth</text>')
    out.append(f'<text x="18" y="{SIZE / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {SIZE / 2:.2f})">death</text>')

    # diagonal and delta bands
    out.append(f'<line class="diagonal" x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
               f'stroke="#777777" stroke-width="1"/>')
    for k, band in enumerate(bands):
        if band.delta >= span:
            continue
        color = BAND_COLORS[k % len(BAND_COLORS)]
        out.append(f'<line class="band" data-delta="{band.delta!r}" x1="{px(lo):.2f}" '
                   f'y1="{py(lo + band.delta):.2f}" x2="{px(hi - band.delta):.2f}" y2="{y1:.2f}" '
                   f'stroke="{color}" stroke-width="1.2" stroke-dasharray="2,3"/>')

    # points
    for d in dgms:
        color = DIM_COLORS.get(d.dim, "#7f7f7f")
        out.append(f'<g class="h{d.dim}" fill="{color}">')
        for b, dd in d.pairs.tolist():
            out.append(f'<circle cx="{px(b):.2f}" cy="{py(dd):.2f}" r="3"/>')
        out.append("</g>")
    if sel:
        out.append('<g class="selected" fill="none" stroke="#000000" stroke-width="1.2">')
        for d in sel:
            for b, dd in d.pairs.tolist():
                out.append(f'<circle cx="{px(b):.2f}" cy="{py(dd):.2f}" r="6.5"/>')
        out.append("</g>")

    # legend
    ly = MARGIN
    for d in dgms:
        color = DIM_COLORS.get(d.dim, "#7f7f7f")
        out.append(f'<circle cx="{SIZE - MARGIN - 70}" cy="{ly}" r="3" fill="{color}"/>'
                   f'<text x="{SIZE - MARGIN - 62}" y="{ly + 4}">H{d.dim} ({len(d)})</text>')
        ly += 16
    for k, band in enumerate(bands):
        color = BAND_COLORS[k % len(BAND_COLORS)]
        out.append(f'<line x1="{SIZE - MARGIN - 76}" y1="{ly}" x2="{SIZE - MARGIN - 64}" y2="{ly}" '
                   f'stroke="{color}" stroke-dasharray="2,3"/>'
                   f'<text x="{SIZE - MARGIN - 62}" y="{ly + 4}">{escape(band.method)} '
                   f'{band.delta:.3g}</text>')
        ly += 16
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_diagram(diagrams, bands: Sequence = (), selected=None, output_svg=None,
                 title: Optional[str] = None) -> str:
    """Render diagrams (objects or CSV paths) and optionally write the SVG."""
    svg = render_diagram_svg(diagrams, bands, selected, title)
    if output_svg is not None:
        Path(output_svg).write_text(svg, encoding="utf-8")
    return svg

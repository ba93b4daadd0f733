"""Dependency-free SVG forest plots.

One row per table entry (point marker + interval line), a vertical
reference line at no effect, and a log-scaled axis for ratio measures.
Layout constants are fixed so output is byte-reproducible.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

from .standardize import RATIO_SCALES

__all__ = ["render_forest_svg"]

_ROW_H = 26
_TOP = 56
_LABEL_W = 230
_PLOT_W = 420
_RIGHT_W = 170
_MARKER = 4.5


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def render_forest_svg(rows, title: str = "Subgroup treatment effects") -> str:
    """Render a forest table (SubgroupEffect / FrequentistEstimate rows) to SVG."""
    if not rows:
        raise ValueError("no rows to plot")
    scale = rows[0].scale
    log_axis = scale in RATIO_SCALES
    ref = 1.0 if log_axis else 0.0

    def coord(v):
        return math.log(v) if log_axis else v

    finite = [
        (coord(r.lower), coord(r.upper), coord(r.point))
        for r in rows
        if all(map(math.isfinite, (coord(r.lower), coord(r.upper))))
    ]
    los = [t[0] for t in finite] + [coord(ref)]
    his = [t[1] for t in finite] + [coord(ref)]
    lo, hi = min(los), max(his)
    span = (hi - lo) or 1.0
    lo -= 0.08 * span
    hi += 0.08 * span

    def x_of(v):
        return _LABEL_W + (coord(v) - lo) / (hi - lo) * _PLOT_W

    n = len(rows)
    height = _TOP + _ROW_H * n + 46
    width = _LABEL_W + _PLOT_W + _RIGHT_W
    es = []
    es.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="Helvetica, Arial, sans-serif" font-size="12">'
    )
    es.append(f'<text x="{_LABEL_W}" y="22" font-size="15" font-weight="bold">{escape(title)}</text>')
    es.append(
        f'<text x="{_LABEL_W + _PLOT_W + 12}" y="{_TOP - 12}" font-size="11">'
        f'{escape(scale)} (95% interval)</text>'
    )
    # reference line at no effect
    y0, y1 = _TOP - 6, _TOP + _ROW_H * n + 6
    xr = x_of(ref)
    es.append(f'<line x1="{xr:.1f}" y1="{y0}" x2="{xr:.1f}" y2="{y1}" stroke="#888" stroke-dasharray="4,3"/>')

    for i, r in enumerate(rows):
        y = _TOP + _ROW_H * i + _ROW_H / 2
        label = r.label
        es.append(f'<g class="row" data-subgroup="{escape(label)}">')
        es.append(f'<text x="10" y="{y + 4:.1f}">{escape(label)} (n={r.n_subjects})</text>')
        if math.isfinite(coord(r.lower)) and math.isfinite(coord(r.upper)):
            es.append(
                f'<line x1="{x_of(r.lower):.1f}" y1="{y:.1f}" x2="{x_of(r.upper):.1f}" y2="{y:.1f}" '
                f'stroke="#1f4e79" stroke-width="1.6"/>'
            )
        if math.isfinite(coord(r.point)):
            xp = x_of(r.point)
            es.append(
                f'<rect x="{xp - _MARKER:.1f}" y="{y - _MARKER:.1f}" width="{2 * _MARKER}" '
                f'height="{2 * _MARKER}" fill="#1f4e79"/>'
            )
        txt = f"{_fmt(r.point)} ({_fmt(r.lower)}, {_fmt(r.upper)})"
        es.append(f'<text x="{_LABEL_W + _PLOT_W + 12}" y="{y + 4:.1f}">{escape(txt)}</text>')
        es.append("</g>")

    # axis ticks: reference plus the plot edges
    yax = _TOP + _ROW_H * n + 22
    for v_plot, anchor in ((lo + 0.02 * span, "start"), (coord(ref), "middle"), (hi - 0.02 * span, "end")):
        val = math.exp(v_plot) if log_axis else v_plot
        x = _LABEL_W + (v_plot - lo) / (hi - lo) * _PLOT_W
        es.append(f'<text x="{x:.1f}" y="{yax}" text-anchor="{anchor}" font-size="11">{_fmt(val)}</text>')
    axis_name = "ratio scale (log axis)" if log_axis else "difference scale"
    es.append(f'<text x="{_LABEL_W}" y="{yax + 18}" font-size="10" fill="#555">{axis_name}</text>')
    es.append("</svg>")
    return "\n".join(es) + "\n"

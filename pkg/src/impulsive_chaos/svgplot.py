"""A small dependency-free SVG time-series plotter.

Each series gets its own panel. A series is a list of (t, value) points in
which ``None`` marks a break: no line is drawn across it, which is how jumps
at impulse moments are shown.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .errors import ParameterError

COLORS = ("#1f5fa8", "#b5432b", "#2e7d32", "#6a3d9a", "#8c6d1f")


@dataclass
class PlotOptions:
    width: int = 900
    panel_height: int = 260
    margin_left: int = 70
    margin_right: int = 20
    margin_top: int = 30
    margin_bottom: int = 45
    title: str = ""
    x_label: str = "t"
    ticks: int = 6
    stroke_width: float = 1.0


def nice_ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(count - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        step = mult * mag
        if step >= raw:
            break
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _fmt_tick(v: float) -> str:
    return f"{v:.6g}"


def _pieces(points):
    piece = []
    for p in points:
        if p is None:
            if piece:
                yield piece
            piece = []
        else:
            piece.append(p)
    if piece:
        yield piece


def _decimate(piece, width_px: float):
    """Keep first/last and the min and max of every pixel column so long
    pieces stay visually identical while the file stays small."""
    if len(piece) <= 4 * max(int(width_px), 1):
        return piece
    t0, t1 = piece[0][0], piece[-1][0]
    span = (t1 - t0) or 1.0
    cols: dict[int, list] = {}
    for pt in piece:
        c = int((pt[0] - t0) / span * width_px)
        cols.setdefault(c, []).append(pt)
    out = []
    for c in sorted(cols):
        col = cols[c]
        lo = min(col, key=lambda q: q[1])
        hi = max(col, key=lambda q: q[1])
        keep = sorted({id(col[0]): col[0], id(lo): lo, id(hi): hi, id(col[-1]): col[-1]}.values(),
                      key=lambda q: q[0])
        out.extend(keep)
    return out


def render_svg(series, options: PlotOptions | None = None) -> str:
    """SVG document with one panel per (label, points) series."""
    opt = options or PlotOptions()
    if not series:
        raise ParameterError("nothing to plot")
    panels = []
    for label, points in series:
        pts = [p for p in points if p is not None]
        if not pts:
            raise ParameterError(f"series {label!r} has no points")
        for t, v in pts:
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ParameterError(f"series {label!r} contains a non-finite value")
        panels.append((label, points, pts))

    all_t = [t for _, _, pts in panels for t, _ in pts]
    tmin, tmax = min(all_t), max(all_t)
    if tmax == tmin:
        tmin, tmax = tmin - 0.5, tmax + 0.5
    plot_w = opt.width - opt.margin_left - opt.margin_right
    title_h = 24 if opt.title else 0
    panel_total = opt.margin_top + opt.panel_height + opt.margin_bottom
    height = title_h + panel_total * len(panels)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{opt.width}" height="{height}" '
        f'viewBox="0 0 {opt.width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{opt.width}" height="{height}" fill="white"/>',
    ]
    if opt.title:
        out.append(f'<text x="{opt.width / 2:.1f}" y="18" text-anchor="middle" font-size="15">'
                   f'{escape(opt.title)}</text>')

    def sx(t):
        return opt.margin_left + (t - tmin) / (tmax - tmin) * plot_w

    for i, (label, points, pts) in enumerate(panels):
        top = title_h + i * panel_total + opt.margin_top
        bottom = top + opt.panel_height
        vals = [v for _, v in pts]
        vmin, vmax = min(vals), max(vals)
        pad = 0.1 * (vmax - vmin) if vmax > vmin else 0.1 * (abs(vmax) or 1.0)
        ylo, yhi = vmin - pad, vmax + pad

        def sy(v, ylo=ylo, yhi=yhi, bottom=bottom):
            return bottom - (v - ylo) / (yhi - ylo) * opt.panel_height

        color = COLORS[i % len(COLORS)]
        out.append(f'<g class="panel" id="panel-{i}">')
        out.append(f'<rect x="{opt.margin_left}" y="{top}" width="{plot_w}" height="{opt.panel_height}" '
                   f'fill="none" stroke="#444"/>')
        for tv in nice_ticks(ylo, yhi, opt.ticks):
            y = sy(tv)
            out.append(f'<line x1="{opt.margin_left - 4}" y1="{y:.2f}" x2="{opt.margin_left}" y2="{y:.2f}" stroke="#444"/>')
            out.append(f'<line x1="{opt.margin_left}" y1="{y:.2f}" x2="{opt.margin_left + plot_w}" y2="{y:.2f}" '
                       f'stroke="#ddd" stroke-width="0.5"/>')
            out.append(f'<text x="{opt.margin_left - 7}" y="{y + 4:.2f}" text-anchor="end">{_fmt_tick(tv)}</text>')
        for tt in nice_ticks(tmin, tmax, opt.ticks + 4):
            x = sx(tt)
            out.append(f'<line x1="{x:.2f}" y1="{bottom}" x2="{x:.2f}" y2="{bottom + 4}" stroke="#444"/>')
            out.append(f'<text x="{x:.2f}" y="{bottom + 17}" text-anchor="middle">{_fmt_tick(tt)}</text>')
        out.append(f'<text x="{opt.margin_left + plot_w / 2:.1f}" y="{bottom + 35}" text-anchor="middle">'
                   f'{escape(opt.x_label)}</text>')
        out.append(f'<text x="16" y="{(top + bottom) / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {(top + bottom) / 2:.1f})">{escape(label)}</text>')
        if len(pts) == 1:
            t, v = pts[0]
            out.append(f'<circle class="marker" cx="{sx(t):.2f}" cy="{sy(v):.2f}" r="3" fill="{color}"/>')
        else:
            for piece in _pieces(points):
                span_px = (piece[-1][0] - piece[0][0]) / (tmax - tmin) * plot_w
                piece = _decimate(piece, span_px)
                if len(piece) == 1:
                    t, v = piece[0]
                    out.append(f'<circle class="marker" cx="{sx(t):.2f}" cy="{sy(v):.2f}" r="1.5" fill="{color}"/>')
                    continue
                coords = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in piece)
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="{opt.stroke_width}" '
                           f'points="{coords}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def series_from_table(table) -> list:
    """(label, points) per state component with breaks at jump rows."""
    series = []
    for j, name in enumerate(table.names):
        points = []
        for lo, hi in table.pieces():
            if points:
                points.append(None)
            points.extend((float(table.t[i]), float(table.x[i, j])) for i in range(lo, hi))
        series.append((name, points))
    return series

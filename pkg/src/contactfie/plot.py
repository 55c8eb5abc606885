"""Self-contained SVG line plots with fixed layout and no timestamps."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH = 760
PANEL_H = 220
MARGIN = dict(left=70, right=150, top=34, bottom=34)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f")


def _fmt(x):
    return format(float(x), ".2f")


def _label(x):
    return format(float(x), ".6g")


def _range(values):
    finite = [v[np.isfinite(v)] for v in values]
    finite = [f for f in finite if f.size]
    if not finite:
        return 0.0, 1.0
    lo = min(float(f.min()) for f in finite)
    hi = max(float(f.max()) for f in finite)
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        pad = max(abs(hi) * 0.05, 1e-9)
        return lo - pad, hi + pad
    return lo, hi


def _segments(t, y):
    """Consecutive finite runs of a series."""
    ok = np.isfinite(t) & np.isfinite(y)
    runs, cur = [], []
    for i in range(len(t)):
        if ok[i]:
            cur.append((t[i], y[i]))
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def line_plot(panels, title=""):
    """SVG text for stacked panels.

    ``panels`` is a list of ``(name, [(label, t, y), ...])``; each panel gets
    its own axes, range annotations and legend.
    """
    iw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ih = PANEL_H - MARGIN["top"] - MARGIN["bottom"]
    height = PANEL_H * len(panels) + (24 if title else 0)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
           f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>']
    y0 = 0
    if title:
        out.append(f'<text x="{WIDTH // 2}" y="16" text-anchor="middle" font-size="13">'
                   f'{escape(title)}</text>')
        y0 = 24
    for p, (name, series) in enumerate(panels):
        top = y0 + p * PANEL_H + MARGIN["top"]
        left = MARGIN["left"]
        ts = [np.asarray(s[1], dtype=float) for s in series]
        ys = [np.asarray(s[2], dtype=float) for s in series]
        tlo, thi = _range(ts)
        ylo, yhi = _range(ys)
        sx = lambda t: left + (t - tlo) / (thi - tlo) * iw
        sy = lambda y: top + ih - (y - ylo) / (yhi - ylo) * ih
        out.append(f'<g class="panel" id="panel-{p}">')
        out.append(f'<text x="{left}" y="{top - 10}" font-size="12">{escape(name)}</text>')
        out.append(f'<rect x="{left}" y="{top}" width="{iw}" height="{ih}" fill="none" '
                   f'stroke="#444"/>')
        out.append(f'<text x="{left - 4}" y="{top + 4}" text-anchor="end">{_label(yhi)}</text>')
        out.append(f'<text x="{left - 4}" y="{top + ih}" text-anchor="end">{_label(ylo)}</text>')
        out.append(f'<text x="{left}" y="{top + ih + 14}">{_label(tlo)}</text>')
        out.append(f'<text x="{left + iw}" y="{top + ih + 14}" text-anchor="end">'
                   f'{_label(thi)}</text>')
        if ylo < 0 < yhi:
            out.append(f'<line x1="{left}" y1="{_fmt(sy(0.0))}" x2="{left + iw}" '
                       f'y2="{_fmt(sy(0.0))}" stroke="#bbb" stroke-dasharray="3,3"/>')
        for i, (label, t, y) in enumerate(zip([s[0] for s in series], ts, ys)):
            color = PALETTE[i % len(PALETTE)]
            for run in _segments(t, y):
                pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in run)
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.4" '
                           f'points="{pts}"/>')
            ly = top + 12 + 16 * i
            lx = left + iw + 12
            out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 24}" y="{ly}">{escape(label)}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def state_channel_names(nv, n_contacts):
    """Channel names for a planar state of size ``2 nv`` plus contact impulses."""
    q = ["base_x", "base_y", "base_angle"] + [f"joint{i}" for i in range(nv - 3)]
    names = q + [f"v_{n}" for n in q]
    names += [f"lambda_n{c}" for c in range(n_contacts)]
    names += [f"lambda_t{c}" for c in range(n_contacts)]
    return names


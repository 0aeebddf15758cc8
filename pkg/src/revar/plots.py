"""Minimal static SVG charts (scatter + fitted line, line curves)."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

W, H, PAD = 480, 320, 48
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _frame(title, xlabel, ylabel, x0, x1, y0, y1):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
        f'<text x="{PAD}" y="{H - PAD + 14}" font-size="10">{x0:.3g}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 14}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    return parts


def scatter_with_line(path, xs, ys, slope, intercept, xlabel="", ylabel="", title="") -> Path:
    xs, ys = list(map(float, xs)), list(map(float, ys))
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    fit = [slope * x0 + intercept, slope * x1 + intercept]
    y0, y1 = min(ys + fit) if ys else 0.0, max(ys + fit) if ys else 1.0
    sx, sy = _scale(x0, x1, PAD, W - PAD), _scale(y0, y1, H - PAD, PAD)
    parts = _frame(title, xlabel, ylabel, x0, x1, y0, y1)
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{PALETTE[0]}"/>')
    parts.append(f'<line x1="{sx(x0):.2f}" y1="{sy(fit[0]):.2f}" x2="{sx(x1):.2f}" y2="{sy(fit[1]):.2f}" '
                 f'stroke="{PALETTE[1]}" stroke-width="1.5"/>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


def line_chart(path, series: dict, xlabel="epoch", ylabel="", title="") -> Path:
    """``series`` maps a legend label to a list of y values indexed from 1."""
    ys_all = [float(v) for ys in series.values() for v in ys]
    n = max((len(ys) for ys in series.values()), default=1)
    y0, y1 = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    sx, sy = _scale(1, max(n, 2), PAD, W - PAD), _scale(y0, y1, H - PAD, PAD)
    parts = _frame(title, xlabel, ylabel, 1, n, y0, y1)
    for i, (label, ys) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(j + 1):.2f},{sy(float(v)):.2f}" for j, v in enumerate(ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        parts.append(f'<text x="{W - PAD}" y="{PAD + 14 * (i + 1)}" font-size="10" text-anchor="end" '
                     f'fill="{color}">{escape(label)}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path

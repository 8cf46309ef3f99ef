"""Minimal SVG line plots for run time series.

Three stacked panels (path loss, SNR, throughput) against time, with dashed
vertical lines wherever the ground-truth LoS state flips.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PANELS = (("pl_db", "Path loss (dB)"), ("snr_db", "SNR (dB)"), ("thr_bps", "Throughput (Mbit/s)"))
COLORS = {"static": "#1f77b4", "controlled": "#d62728"}

W, PANEL_H, LEFT, RIGHT, TOP, GAP = 720, 170, 70, 20, 40, 40


def _transitions(los) -> list[int]:
    los = np.asarray(los)
    return [i for i in range(1, len(los)) if los[i] != los[i - 1]]


def _scale(values, lo, hi, out_lo, out_hi):
    if hi == lo:
        hi = lo + 1.0
    return out_lo + (np.asarray(values, dtype=float) - lo) * (out_hi - out_lo) / (hi - lo)


def _panel(y0, t, series, label, transitions, t_max):
    """series: list of (name, values, color). Returns svg fragments."""
    parts = []
    x0, x1 = LEFT, W - RIGHT
    y1 = y0 + PANEL_H
    allv = np.concatenate([np.asarray(v, dtype=float) for _, v, _ in series])
    lo, hi = float(allv.min()), float(allv.max())
    pad = 0.05 * (hi - lo if hi > lo else 1.0)
    lo, hi = lo - pad, hi + pad
    parts.append(f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{PANEL_H}" fill="none" stroke="#333"/>')
    for frac in (0.0, 0.5, 1.0):
        val = lo + frac * (hi - lo)
        yy = y1 - frac * PANEL_H
        parts.append(f'<text x="{x0 - 6}" y="{yy + 4:.1f}" font-size="10" text-anchor="end">{val:.1f}</text>')
    parts.append(f'<text x="14" y="{y0 + PANEL_H / 2:.1f}" font-size="11" '
                 f'transform="rotate(-90 14 {y0 + PANEL_H / 2:.1f})" text-anchor="middle">{escape(label)}</text>')
    for name, trans, color in transitions:
        for i in trans:
            xx = float(_scale(t[i], 0.0, t_max, x0, x1))
            parts.append(f'<line x1="{xx:.2f}" y1="{y0}" x2="{xx:.2f}" y2="{y1}" stroke="{color}" '
                         f'stroke-dasharray="4,3" stroke-width="0.8" data-series="{escape(name)}"/>')
    for name, values, color in series:
        xs = _scale(t, 0.0, t_max, x0, x1)
        ys = _scale(values, lo, hi, y1, y0)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{pts}" '
                     f'data-series="{escape(name)}"/>')
    return parts


def _document(title, runs) -> str:
    t = runs[0].column("t_s")
    t_max = float(t[-1]) if len(t) else 1.0
    height = TOP + len(PANELS) * (PANEL_H + GAP) + 10
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" '
             f'viewBox="0 0 {W} {height}" font-family="sans-serif">',
             f'<title>{escape(title)}</title>',
             f'<text x="{W / 2}" y="22" font-size="14" text-anchor="middle">{escape(title)}</text>']
    transitions = [(r.mode, _transitions(r.column("L_status")), COLORS.get(r.mode, "#555")) for r in runs]
    for k, (col, label) in enumerate(PANELS):
        y0 = TOP + k * (PANEL_H + GAP)
        scale = 1e-6 if col == "thr_bps" else 1.0
        series = [(f"{r.mode}:{col}", r.column(col) * scale, COLORS.get(r.mode, "#555")) for r in runs]
        parts += _panel(y0, t, series, label, transitions, t_max)
    y_axis = TOP + len(PANELS) * (PANEL_H + GAP) - GAP + 28
    parts.append(f'<text x="{W / 2}" y="{y_axis}" font-size="11" text-anchor="middle">time (s)</text>')
    for i, r in enumerate(runs):
        parts.append(f'<text x="{W - RIGHT - 5}" y="{22 + 14 * i}" font-size="11" text-anchor="end" '
                     f'fill="{COLORS.get(r.mode, "#555")}">{escape(r.mode)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def run_svg(run, title: str = "") -> str:
    return _document(title or run.mode, [run])


def compare_svg(static, ctrl) -> str:
    return _document("static vs VisionApp-controlled gNB", [static, ctrl])

"""Minimal SVG plotting for metric CSV files.

Draws the across-seed mean as a line with a min/max band, no third-party
plotting dependency. Output is a standalone, well-formed SVG document.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

from .metrics import read_metrics

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 30, 45


def collect_series(csv_paths, kind: str = "eval", column: str = "reward"):
    """Align one metric column across runs on the steps common to all files.

    Returns (steps, values) where values has shape (n_runs, n_steps) as
    nested lists.
    """
    if not csv_paths:
        raise ValueError("no CSV files given")
    per_run = []
    for path in csv_paths:
        rows = read_metrics(path)
        series = {int(r["step"]): float(r[column]) for r in rows if r["kind"] == kind}
        if not series:
            raise ValueError(f"{path}: no rows of kind {kind!r}")
        per_run.append(series)
    steps = sorted(set.intersection(*(set(s) for s in per_run)))
    if not steps:
        raise ValueError("runs share no common steps")
    values = [[s[t] for t in steps] for s in per_run]
    return steps, values


def _scale(v, lo, hi, out_lo, out_hi):
    if hi == lo:
        return 0.5 * (out_lo + out_hi)
    return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)


def write_svg(path: str, steps, mean, band_lo, band_hi, title: str,
              ylabel: str = "reward"):
    """Render a mean line with a [band_lo, band_hi] envelope to an SVG file."""
    x_lo, x_hi = min(steps), max(steps)
    y_lo = min(min(band_lo), min(mean))
    y_hi = max(max(band_hi), max(mean))
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    px_l, px_r = MARGIN_L, WIDTH - MARGIN_R
    py_t, py_b = MARGIN_T, HEIGHT - MARGIN_B

    def xy(step, value):
        return (_scale(step, x_lo, x_hi, px_l, px_r),
                _scale(value, y_lo, y_hi, py_b, py_t))

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                     width=str(WIDTH), height=str(HEIGHT),
                     viewBox=f"0 0 {WIDTH} {HEIGHT}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT),
                  fill="white")
    band_pts = ([xy(t, v) for t, v in zip(steps, band_hi)] +
                [xy(t, v) for t, v in zip(reversed(steps), reversed(band_lo))])
    ET.SubElement(svg, "polygon",
                  points=" ".join(f"{x:.2f},{y:.2f}" for x, y in band_pts),
                  fill="#9ecae1", stroke="none", opacity="0.6")
    line_pts = [xy(t, v) for t, v in zip(steps, mean)]
    if len(line_pts) == 1:
        line_pts = line_pts * 2
    ET.SubElement(svg, "polyline",
                  points=" ".join(f"{x:.2f},{y:.2f}" for x, y in line_pts),
                  fill="none", stroke="#08519c", attrib={"stroke-width": "2"})
    # axes
    ET.SubElement(svg, "line", x1=str(px_l), y1=str(py_b), x2=str(px_r), y2=str(py_b),
                  stroke="black")
    ET.SubElement(svg, "line", x1=str(px_l), y1=str(py_t), x2=str(px_l), y2=str(py_b),
                  stroke="black")
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        xt = ET.SubElement(svg, "text", x=f"{_scale(xv, x_lo, x_hi, px_l, px_r):.1f}",
                           y=str(py_b + 18), attrib={"text-anchor": "middle",
                                                     "font-size": "12"})
        xt.text = f"{xv:g}"
        yt = ET.SubElement(svg, "text", x=str(px_l - 8),
                           y=f"{_scale(yv, y_lo, y_hi, py_b, py_t) + 4:.1f}",
                           attrib={"text-anchor": "end", "font-size": "12"})
        yt.text = f"{yv:.3g}"
    tt = ET.SubElement(svg, "text", x=str(WIDTH // 2), y="20",
                       attrib={"text-anchor": "middle", "font-size": "14"})
    tt.text = title
    xl = ET.SubElement(svg, "text", x=str((px_l + px_r) // 2), y=str(HEIGHT - 8),
                       attrib={"text-anchor": "middle", "font-size": "12"})
    xl.text = "environment step"
    yl = ET.SubElement(svg, "text", x="16", y=str((py_t + py_b) // 2),
                       attrib={"text-anchor": "middle", "font-size": "12",
                               "transform": f"rotate(-90 16 {(py_t + py_b) // 2})"})
    yl.text = ylabel
    ET.ElementTree(svg).write(path, encoding="unicode", xml_declaration=True)


def plot_reward_curves(csv_paths, out_svg: str, kind: str = "eval",
                       column: str = "reward", title: str = "evaluation reward"):
    """Mean reward curve with min/max band over one or more metric files."""
    steps, values = collect_series(csv_paths, kind=kind, column=column)
    n = len(values)
    mean = [sum(v[i] for v in values) / n for i in range(len(steps))]
    lo = [min(v[i] for v in values) for i in range(len(steps))]
    hi = [max(v[i] for v in values) for i in range(len(steps))]
    write_svg(out_svg, steps, mean, lo, hi, title, ylabel=column)
    return steps, mean, lo, hi

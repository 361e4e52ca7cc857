"""Deterministic SVG emission for sweep panels and posterior contours.

Hand-rolled SVG keeps the byte output a pure function of the inputs (no
renderer state, fonts, or timestamps), which the harness guarantees to
downstream tooling. Coordinates are formatted at fixed precision.
"""

import math
import os

import numpy as np

from . import harness

PANEL_W, PANEL_H = 420, 320
MARGIN = 56

_BASE_COLORS = {"gengamma": "#b2182b", "gaussian": "#2166ac"}
_SHADES = ["", "cc", "99", "66"]  # alpha suffixes per flow config


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Svg:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]

    def line(self, x1, y1, x2, y2, color="#000000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{width}"{d}/>'
        )

    def polyline(self, pts, color="#000000", width=1.5, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{d}/>'
        )

    def circle(self, x, y, r, color="#000000"):
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{r}" fill="{color}"/>'
        )

    def text(self, x, y, s, size=11, color="#000000", anchor="start"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="monospace" fill="{color}" text-anchor="{anchor}">{s}</text>'
        )

    def diamond(self, x, y, r, color="white", stroke="#000000"):
        pts = f"{_fmt(x)},{_fmt(y - r)} {_fmt(x + r)},{_fmt(y)} " \
              f"{_fmt(x)},{_fmt(y + r)} {_fmt(x - r)},{_fmt(y)}"
        self.parts.append(
            f'<polygon points="{pts}" fill="{color}" stroke="{stroke}"/>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


class _Axes:
    """Linear map from data coordinates to one panel's pixel box."""

    def __init__(self, x0, x1, y0, y1, px, py):
        pad_x = 0.05 * (x1 - x0) if x1 > x0 else 1.0
        pad_y = 0.05 * (y1 - y0) if y1 > y0 else 1.0
        self.x0, self.x1 = x0 - pad_x, x1 + pad_x
        self.y0, self.y1 = y0 - pad_y, y1 + pad_y
        self.px, self.py = px, py

    def x(self, v):
        frac = (v - self.x0) / (self.x1 - self.x0)
        return self.px + MARGIN + frac * (PANEL_W - 2 * MARGIN)

    def y(self, v):
        frac = (v - self.y0) / (self.y1 - self.y0)
        return self.py + PANEL_H - MARGIN - frac * (PANEL_H - 2 * MARGIN)

    def frame(self, svg, xlabel, ylabel):
        svg.line(self.x(self.x0), self.y(self.y0), self.x(self.x1), self.y(self.y0))
        svg.line(self.x(self.x0), self.y(self.y0), self.x(self.x0), self.y(self.y1))
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = self.x0 + frac * (self.x1 - self.x0)
            yv = self.y0 + frac * (self.y1 - self.y0)
            svg.line(self.x(xv), self.y(self.y0), self.x(xv), self.y(self.y0) + 4)
            svg.text(self.x(xv), self.y(self.y0) + 16, f"{xv:.3g}", size=9,
                     anchor="middle")
            svg.line(self.x(self.x0) - 4, self.y(yv), self.x(self.x0), self.y(yv))
            svg.text(self.x(self.x0) - 6, self.y(yv) + 3, f"{yv:.4g}", size=9,
                     anchor="end")
        svg.text(self.px + PANEL_W / 2, self.py + PANEL_H - 12, xlabel,
                 anchor="middle")
        svg.text(self.px + 14, self.py + 16, ylabel)


def _series_stats(rows, column, transform):
    """Per-n (x, mean, lo, hi) tuples over seeds for one group."""
    by_n = {}
    for row in rows:
        if row["status"] == "ok" and math.isfinite(row[column]):
            by_n.setdefault(row["n"], []).append(row[column])
    out = []
    for n in sorted(by_n):
        vals = by_n[n]
        out.append((transform(n), float(np.mean(vals)), min(vals), max(vals)))
    return out


def _placeholder(path: str, message: str) -> str:
    svg = _Svg(2 * PANEL_W, PANEL_H)
    svg.text(PANEL_W, PANEL_H / 2, message, size=14, anchor="middle")
    with open(path, "w") as fh:
        fh.write(svg.render())
    return path


def emit_plots(results_csv: str, summary_csv: str, out_dir: str) -> list[str]:
    """Per (triplet, H): one SVG with MVFE-vs-log n and VGE-vs-1/n panels.

    Each series shows per-seed min/mean/max whiskers plus the fitted dashed
    line from the summary; output bytes depend only on the two CSVs.
    """
    os.makedirs(out_dir, exist_ok=True)
    rows = harness.read_results(results_csv)
    summary = {("%s" % e["triplet"], e["H"], e["base"], e["coupling_pairs"],
                e["hidden"]): e for e in harness.read_summary(summary_csv)}
    paths = []
    if not rows:
        path = os.path.join(out_dir, "empty.svg")
        paths.append(_placeholder(path, "no results to plot"))
        return paths

    panels = {}
    for row in rows:
        panels.setdefault((row["triplet"], row["H"]), []).append(row)

    for (triplet_kind, h), panel_rows in sorted(panels.items()):
        groups = {}
        for row in panel_rows:
            groups.setdefault((row["base"], row["coupling_pairs"],
                               row["hidden"]), []).append(row)
        svg = _Svg(2 * PANEL_W, PANEL_H)
        svg.text(8, 14, f"{triplet_kind} H={h}", size=12)

        specs = [("mvfe", math.log, "log n", "MVFE", 0),
                 ("vge", lambda n: 1.0 / n, "1/n", "VGE", PANEL_W)]
        for column, transform, xlabel, ylabel, px in specs:
            series = {k: _series_stats(v, column, transform)
                      for k, v in sorted(groups.items())}
            series = {k: v for k, v in series.items() if v}
            if not series:
                svg.text(px + PANEL_W / 2, PANEL_H / 2,
                         f"no {ylabel} data", anchor="middle")
                continue
            xs = [p[0] for pts in series.values() for p in pts]
            ys = [v for pts in series.values() for p in pts for v in p[1:]]
            axes = _Axes(min(xs), max(xs), min(ys), max(ys), px, 0)
            axes.frame(svg, xlabel, ylabel)
            for gi, (gkey, pts) in enumerate(sorted(series.items())):
                base, pairs, hidden = gkey
                color = _BASE_COLORS.get(base, "#333333") + \
                    _SHADES[gi % len(_SHADES)]
                svg.polyline([(axes.x(x), axes.y(m)) for x, m, _, _ in pts],
                             color=color)
                for x, m, lo, hi in pts:
                    svg.line(axes.x(x), axes.y(lo), axes.x(x), axes.y(hi),
                             color=color)
                    svg.circle(axes.x(x), axes.y(m), 2.0, color=color)
                fit = summary.get((triplet_kind, h, base, pairs, hidden))
                label = f"{base}_{pairs}_{hidden}"
                if fit and fit["note"] == "ok":
                    if column == "mvfe":
                        slope, icept, r2 = (fit["lambda_vfe"],
                                            fit["intercept_vfe"], fit["r2_vfe"])
                        line_pts = [(axes.x(x), axes.y(slope * x + icept))
                                    for x in (min(xs), max(xs))]
                    else:
                        slope, r2 = fit["lambda_vge"], fit["r2_vge"]
                        line_pts = [(axes.x(x), axes.y(slope * x))
                                    for x in (min(xs), max(xs))]
                    svg.polyline(line_pts, color=color, width=1.0, dash="5,3")
                    label += f" slope={slope:.3g} R2={r2:.3f}"
                svg.text(px + MARGIN, 28 + 12 * gi, label, size=9, color=color)
        path = os.path.join(out_dir, f"{triplet_kind}_H{h}.svg")
        with open(path, "w") as fh:
            fh.write(svg.render())
        paths.append(path)
    return paths


# --- contour rendering -------------------------------------------------------

def _marching_squares(density, a_axis, b_axis, level):
    """Line segments of one iso-level on the (b, a) grid."""
    segments = []
    nb, na = density.shape
    for i in range(nb - 1):
        for j in range(na - 1):
            corners = [
                (density[i, j], a_axis[j], b_axis[i]),
                (density[i, j + 1], a_axis[j + 1], b_axis[i]),
                (density[i + 1, j + 1], a_axis[j + 1], b_axis[i + 1]),
                (density[i + 1, j], a_axis[j], b_axis[i + 1]),
            ]
            crossings = []
            for k in range(4):
                v0, a0, b0 = corners[k]
                v1, a1, b1 = corners[(k + 1) % 4]
                if (v0 - level) * (v1 - level) < 0.0:
                    t = (level - v0) / (v1 - v0)
                    crossings.append((a0 + t * (a1 - a0), b0 + t * (b1 - b0)))
            if len(crossings) >= 2:
                segments.append((crossings[0], crossings[1]))
                if len(crossings) == 4:
                    segments.append((crossings[2], crossings[3]))
    return segments


def write_contour_svg(a_axis, b_axis, density, truth, path: str) -> str:
    """Iso-density contours with the generating parameter as a white diamond."""
    svg = _Svg(PANEL_W, PANEL_H)
    axes = _Axes(float(a_axis[0]), float(a_axis[-1]),
                 float(b_axis[0]), float(b_axis[-1]), 0, 0)
    axes.frame(svg, "a", "b")
    peak = float(density.max())
    levels = [peak * f for f in (0.03, 0.1, 0.3, 0.5, 0.7, 0.9)]
    shades = ["#d1e5f0", "#92c5de", "#4393c3", "#2166ac", "#b2182b", "#67001f"]
    for level, color in zip(levels, shades):
        for (a0, b0), (a1, b1) in _marching_squares(density, a_axis, b_axis,
                                                    level):
            svg.line(axes.x(a0), axes.y(b0), axes.x(a1), axes.y(b1),
                     color=color, width=1.0)
    svg.diamond(axes.x(truth[0]), axes.y(truth[1]), 5)
    with open(path, "w") as fh:
        fh.write(svg.render())
    return path


def write_grid_csv(a_axis, b_axis, density, path: str) -> str:
    """Grid export, one (a, b, density) row per point."""
    with open(path, "w", newline="") as fh:
        fh.write("a,b,density\n")
        for i, b in enumerate(b_axis):
            for j, a in enumerate(a_axis):
                fh.write(f"{a!r},{b!r},{density[i, j]!r}\n")
    return path

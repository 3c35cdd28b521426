"""CSV tables and hand-written SVG figures for power studies.

CSV files are the numeric record and read back into identical tables. The
SVG writers emit fixed-precision coordinates and no timestamps, so equal
input gives equal bytes.

Heatmap colormap: a linear ramp in RGB from white ``#ffffff`` (frequency 0)
to dark blue ``#08306b`` (frequency 1). Missing cells are grey ``#d9d9d9``.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .study import DiscoveryHeatmap, PowerRow, PowerTable

LOW = (0xFF, 0xFF, 0xFF)
HIGH = (0x08, 0x30, 0x6B)
MISSING = "#d9d9d9"
METHOD_COLORS = {"ggee": "#d62728", "pca": "#1f77b4", "pls": "#2ca02c"}
FALLBACK_COLORS = ("#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

POWER_FIELDS = ["setting", "name", "phenotype_model", "method", "r2", "power", "detected", "iterations",
                "failures", "mean_p_I", "mean_p_M", "status"]
HEATMAP_FIELDS = ["setting", "name", "phenotype_model", "r2", "variable", "method", "frequency", "iterations"]


def _num(x: float) -> str:
    return repr(float(x))


def color(value: float) -> str:
    """Hex color of a frequency in [0, 1]."""
    if value is None or not math.isfinite(value):
        return MISSING
    t = min(max(float(value), 0.0), 1.0)
    rgb = [round(lo + t * (hi - lo)) for lo, hi in zip(LOW, HIGH)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


# --------------------------------------------------------------------------
# CSV


def write_power_csv(table: PowerTable, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POWER_FIELDS)
        for r in table.rows:
            w.writerow([r.setting, r.name, r.phenotype_model, r.method, _num(r.r2), _num(r.power), r.detected,
                        r.iterations, r.failures, _num(r.mean_p_I), _num(r.mean_p_M), r.status])
    return path


def read_power_csv(path) -> PowerTable:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for d in csv.DictReader(fh):
            rows.append(PowerRow(int(d["setting"]), d["name"], d["phenotype_model"], d["method"], float(d["r2"]),
                                 float(d["power"]), int(d["detected"]), int(d["iterations"]), int(d["failures"]),
                                 float(d["mean_p_I"]), float(d["mean_p_M"]), d["status"]))
    return PowerTable(rows)


def write_heatmap_csv(maps: list[DiscoveryHeatmap], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEATMAP_FIELDS)
        for h in maps:
            for i, v in enumerate(h.variables):
                for j, m in enumerate(h.methods):
                    w.writerow([h.setting, h.name, h.phenotype_model, _num(h.r2), v, m, _num(h.frequency[i, j]),
                                h.iterations[j]])
    return path


def read_heatmap_csv(path) -> list[DiscoveryHeatmap]:
    groups: dict[tuple, dict] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for d in csv.DictReader(fh):
            key = (int(d["setting"]), d["name"], d["phenotype_model"], float(d["r2"]))
            g = groups.setdefault(key, {"vars": [], "methods": [], "vals": {}, "iters": {}})
            if d["variable"] not in g["vars"]:
                g["vars"].append(d["variable"])
            if d["method"] not in g["methods"]:
                g["methods"].append(d["method"])
            g["vals"][(d["variable"], d["method"])] = float(d["frequency"])
            g["iters"][d["method"]] = int(d["iterations"])
    out = []
    for (setting, name, model, r2), g in groups.items():
        freq = np.array([[g["vals"][(v, m)] for m in g["methods"]] for v in g["vars"]], dtype=float)
        out.append(DiscoveryHeatmap(setting, name, model, r2, g["vars"], g["methods"], freq,
                                    [g["iters"][m] for m in g["methods"]]))
    return out


# --------------------------------------------------------------------------
# SVG


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Svg:
    def __init__(self, width: float, height: float):
        self.w, self.h = width, height
        self.parts: list[str] = []

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.parts.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" '
                          f'fill="{fill}" stroke="{stroke}"/>')

    def line(self, x1, y1, x2, y2, stroke="#000000", width=1.0, dash=None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
                          f'stroke="{stroke}" stroke-width="{_f(width)}"{extra}/>')

    def text(self, x, y, s, size=11, anchor="start", rotate=None, weight=None):
        tr = f' transform="rotate({_f(rotate)} {_f(x)} {_f(y)})"' if rotate is not None else ""
        fw = f' font-weight="{weight}"' if weight else ""
        self.parts.append(f'<text x="{_f(x)}" y="{_f(y)}" font-family="sans-serif" font-size="{size}" '
                          f'text-anchor="{anchor}"{fw}{tr}>{escape(str(s))}</text>')

    def polyline(self, pts, stroke, width=2.0):
        p = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.parts.append(f'<polyline points="{p}" fill="none" stroke="{stroke}" stroke-width="{_f(width)}"/>')

    def circle(self, x, y, r, fill):
        self.parts.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(r)}" fill="{fill}"/>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(self.w)}" height="{_f(self.h)}" '
                f'viewBox="0 0 {_f(self.w)} {_f(self.h)}">')
        return "\n".join([head, f'<rect width="100%" height="100%" fill="#ffffff"/>', *self.parts, "</svg>"]) + "\n"


def heatmap_svg(h: DiscoveryHeatmap | None, title: str | None = None) -> str:
    """Variables (rows) by methods (columns), shaded by significance frequency."""
    variables = list(h.variables) if h is not None else []
    methods = list(h.methods) if h is not None else []
    cell, left, top = 26.0, 120.0, 60.0
    ncol, nrow = max(len(methods), 1), max(len(variables), 1)
    width = left + ncol * cell + 110.0
    height = top + nrow * cell + 40.0
    svg = _Svg(width, height)
    if title is None and h is not None:
        title = f"setting {h.name}, R2 = {h.r2:g}"
    svg.text(width / 2, 20, title or "discovery frequency", size=13, anchor="middle", weight="bold")
    # axes frame
    svg.rect(left, top, ncol * cell, nrow * cell, "none", stroke="#000000")
    if not variables or not methods:
        svg.text(left + ncol * cell / 2, top + nrow * cell / 2 + 4, "no data", anchor="middle")
    else:
        for j, m in enumerate(methods):
            svg.text(left + (j + 0.5) * cell, top - 8, m.upper(), size=10, anchor="middle")
        for i, v in enumerate(variables):
            svg.text(left - 6, top + (i + 0.5) * cell + 4, v, size=10, anchor="end")
            for j in range(len(methods)):
                svg.rect(left + j * cell, top + i * cell, cell, cell, color(h.frequency[i, j]), stroke="#ffffff")
    # legend
    lx, ly, lh = left + ncol * cell + 30.0, top, 120.0
    steps = 20
    for k in range(steps):
        v = 1.0 - k / (steps - 1)
        svg.rect(lx, ly + k * lh / steps, 14, lh / steps + 0.5, color(v))
    svg.rect(lx, ly, 14, lh, "none", stroke="#000000")
    svg.text(lx + 20, ly + 8, "1.0", size=10)
    svg.text(lx + 20, ly + lh, "0.0", size=10)
    return svg.render()


def power_curve_svg(rows: list[PowerRow], title: str) -> str:
    """Power against target R^2, one line per method, y axis fixed to [0, 1]."""
    left, top, pw, ph = 60.0, 40.0, 320.0, 220.0
    width, height = left + pw + 110.0, top + ph + 60.0
    svg = _Svg(width, height)
    svg.text(width / 2, 20, title, size=13, anchor="middle", weight="bold")
    svg.line(left, top + ph, left + pw, top + ph)
    svg.line(left, top, left, top + ph)
    for k in range(6):
        v = k / 5
        y = top + ph * (1 - v)
        svg.line(left - 4, y, left, y)
        svg.line(left, y, left + pw, y, stroke="#e0e0e0", width=0.5)
        svg.text(left - 8, y + 4, f"{v:.1f}", size=10, anchor="end")
    svg.text(left + pw / 2, top + ph + 40, "R2", anchor="middle")
    svg.text(16, top + ph / 2, "power", anchor="middle", rotate=-90)
    good = [r for r in rows if math.isfinite(r.power)]
    if not good:
        svg.text(left + pw / 2, top + ph / 2, "no data", anchor="middle")
        return svg.render()
    xs = sorted({r.r2 for r in good})
    lo, hi = (xs[0] - 0.05, xs[-1] + 0.05) if len(xs) > 1 else (xs[0] - 0.5, xs[0] + 0.5)
    lo, hi = max(lo, 0.0), min(hi, 1.0)

    def px(x):
        return left + pw * (x - lo) / (hi - lo)

    for x in xs:
        svg.line(px(x), top + ph, px(x), top + ph + 4)
        svg.text(px(x), top + ph + 18, f"{x:g}", size=10, anchor="middle")
    methods = list(dict.fromkeys(r.method for r in good))
    for k, m in enumerate(methods):
        col = METHOD_COLORS.get(m, FALLBACK_COLORS[k % len(FALLBACK_COLORS)])
        pts = [(px(r.r2), top + ph * (1 - r.power)) for r in sorted(good, key=lambda r: r.r2) if r.method == m]
        if len(pts) > 1:
            svg.polyline(pts, col)
        for x, y in pts:
            svg.circle(x, y, 3.5, col)
        ly = top + 10 + 18 * k
        svg.line(left + pw + 15, ly, left + pw + 35, ly, stroke=col, width=2)
        svg.text(left + pw + 40, ly + 4, m.upper(), size=10)
    return svg.render()


def emit_heatmap(h: DiscoveryHeatmap, directory) -> dict[str, Path]:
    directory = Path(directory)
    stem = f"heatmap_{h.name}_{h.phenotype_model}_r{h.r2:g}"
    svg = directory / f"{stem}.svg"
    svg.write_text(heatmap_svg(h), encoding="utf-8")
    csv_path = write_heatmap_csv([h], directory / f"{stem}.csv")
    return {"svg": svg, "csv": csv_path}


def emit_power_curves(table: PowerTable, directory) -> dict[str, Path]:
    """One SVG per (setting, model) plus the full table as CSV."""
    directory = Path(directory)
    out = {"csv": write_power_csv(table, directory / "power.csv")}
    keys = list(dict.fromkeys((r.setting, r.name, r.phenotype_model) for r in table.rows))
    for setting, name, model in keys:
        rows = [r for r in table.rows if (r.setting, r.phenotype_model) == (setting, model)]
        path = directory / f"power_{name}_{model}.svg"
        path.write_text(power_curve_svg(rows, f"setting {name} ({model})"), encoding="utf-8")
        out[f"power_{name}_{model}"] = path
    if not keys:
        path = directory / "power_empty.svg"
        path.write_text(power_curve_svg([], "power"), encoding="utf-8")
        out["power_empty"] = path
    return out


def write_outputs(table: PowerTable, maps: list[DiscoveryHeatmap], directory) -> dict[str, Path]:
    """All tables and figures of a study under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = emit_power_curves(table, directory)
    out["heatmaps_csv"] = write_heatmap_csv(maps, directory / "heatmaps.csv")
    for h in maps:
        out[f"heatmap_{h.name}_{h.phenotype_model}_r{h.r2:g}"] = emit_heatmap(h, directory)["svg"]
    return out

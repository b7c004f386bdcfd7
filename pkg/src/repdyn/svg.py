"""Deterministic SVG line charts rendered from the experiment CSV files.

Every plot here reads only CSV files, so figures can be regenerated offline
from saved results. Coordinates are printed with two decimals, which keeps
the bytes stable across platforms.
"""

import csv
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
Z95 = 1.959963984540054


@dataclass
class Series:
    label: str
    x: list
    y: list
    lo: list = None
    hi: list = None
    dashed: bool = False
    markers: bool = False
    line: bool = True


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    xlog: bool = False
    ylim: tuple = None
    notes: list = field(default_factory=list)


def _f(v):
    return f"{v:.2f}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step - 1e-9) * step
    out, t = [], start
    while t <= hi + 1e-9 * step:
        out.append(round(t, 12))
        t += step
    return out


def _label(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.0e}"
    return f"{v:g}"


def _render_panel(panel, ox, oy, w, h):
    parts = []
    left, right, top, bottom = 60, 150, 30, 45
    pw, ph = w - left - right, h - top - bottom
    xs = [x for s in panel.series for x in s.x]
    ys = [y for s in panel.series for y in (s.y + (s.lo or []) + (s.hi or []))]
    xs = [x for x in xs if math.isfinite(x) and (x > 0 or not panel.xlog)]
    ys = [y for y in ys if math.isfinite(y)]
    if not xs:
        xs = [1.0, 2.0] if panel.xlog else [0.0, 1.0]
    if not ys:
        ys = [0.0, 1.0]
    tx = (lambda v: math.log2(v)) if panel.xlog else (lambda v: v)
    x0, x1 = tx(min(xs)), tx(max(xs))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = panel.ylim if panel.ylim else (min(ys), max(ys))
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    if not panel.ylim:
        y0, y1 = y0 - pad, y1 + pad

    def X(v):
        return ox + left + (tx(v) - x0) / (x1 - x0) * pw

    def Y(v):
        v = min(max(v, y0), y1)
        return oy + top + (1 - (v - y0) / (y1 - y0)) * ph

    parts.append(f'<rect x="{_f(ox + left)}" y="{_f(oy + top)}" width="{_f(pw)}" height="{_f(ph)}" fill="none" stroke="#333"/>')
    parts.append(f'<text x="{_f(ox + left + pw / 2)}" y="{_f(oy + 18)}" text-anchor="middle" font-size="13">{escape(panel.title)}</text>')
    parts.append(f'<text x="{_f(ox + left + pw / 2)}" y="{_f(oy + h - 8)}" text-anchor="middle" font-size="11">{escape(panel.xlabel)}</text>')
    cy = oy + top + ph / 2
    parts.append(f'<text x="{_f(ox + 14)}" y="{_f(cy)}" text-anchor="middle" font-size="11" transform="rotate(-90 {_f(ox + 14)} {_f(cy)})">{escape(panel.ylabel)}</text>')
    xticks = sorted(set(xs)) if panel.xlog else _ticks(x0, x1)
    for t in xticks:
        px = X(t)
        parts.append(f'<line x1="{_f(px)}" y1="{_f(oy + top + ph)}" x2="{_f(px)}" y2="{_f(oy + top + ph + 4)}" stroke="#333"/>')
        parts.append(f'<text x="{_f(px)}" y="{_f(oy + top + ph + 16)}" text-anchor="middle" font-size="10">{_label(t)}</text>')
    for t in _ticks(y0, y1):
        py = Y(t)
        parts.append(f'<line x1="{_f(ox + left - 4)}" y1="{_f(py)}" x2="{_f(ox + left)}" y2="{_f(py)}" stroke="#333"/>')
        parts.append(f'<text x="{_f(ox + left - 6)}" y="{_f(py + 3)}" text-anchor="end" font-size="10">{_label(t)}</text>')
    for i, s in enumerate(panel.series):
        color = PALETTE[i % len(PALETTE)]
        pts = [(x, y) for x, y in zip(s.x, s.y) if math.isfinite(y) and (x > 0 or not panel.xlog)]
        if s.lo is not None and s.hi is not None:
            band = [(x, lo, hi) for x, lo, hi in zip(s.x, s.lo, s.hi) if math.isfinite(lo) and math.isfinite(hi)]
            if len(band) > 1:
                upper = " ".join(f"{_f(X(x))},{_f(Y(hi))}" for x, _, hi in band)
                lower = " ".join(f"{_f(X(x))},{_f(Y(lo))}" for x, lo, _ in reversed(band))
                parts.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        if pts and s.line:
            dash = ' stroke-dasharray="5,3"' if s.dashed else ""
            path = " ".join(f"{_f(X(x))},{_f(Y(y))}" for x, y in pts)
            parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        if s.markers:
            for x, y in pts:
                parts.append(f'<circle cx="{_f(X(x))}" cy="{_f(Y(y))}" r="2.5" fill="{color}"/>')
        ly = oy + top + 12 + 16 * i
        lx = ox + left + pw + 10
        parts.append(f'<line x1="{_f(lx)}" y1="{_f(ly - 4)}" x2="{_f(lx + 18)}" y2="{_f(ly - 4)}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_f(lx + 22)}" y="{_f(ly)}" font-size="10">{escape(s.label)}</text>')
    for j, note in enumerate(panel.notes):
        parts.append(f'<text x="{_f(ox + left + 6)}" y="{_f(oy + top + 14 + 13 * j)}" font-size="10" fill="#555">{escape(note)}</text>')
    return parts


def render(panels, panel_width=560, panel_height=340):
    width = panel_width * len(panels)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{panel_height}" viewBox="0 0 {width} {panel_height}" font-family="sans-serif">',
        f'<rect width="{width}" height="{panel_height}" fill="white"/>',
    ]
    for i, p in enumerate(panels):
        out.extend(_render_panel(p, i * panel_width, 0, panel_width, panel_height))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save(panels, path, **kw):
    with open(path, "w", newline="") as fh:
        fh.write(render(panels, **kw))
    return path


# ---------------------------------------------------------------------------
# aggregation helpers


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(text):
    return float(text) if text not in ("", None) else float("nan")


def mean_ci(values):
    """Mean and normal-approximation 95% interval over seeds."""
    vals = [v for v in values if math.isfinite(v)]
    if not vals:
        return float("nan"), float("nan"), float("nan")
    m = sum(vals) / len(vals)
    if len(vals) < 2:
        return m, m, m
    var = sum((v - m) ** 2 for v in vals) / (len(vals) - 1)
    half = Z95 * math.sqrt(var / len(vals))
    return m, m - half, m + half


def _series(groups, label, **kw):
    xs = sorted(groups)
    stats = [mean_ci(groups[x]) for x in xs]
    return Series(label, xs, [s[0] for s in stats], [s[1] for s in stats], [s[2] for s in stats], **kw)


# ---------------------------------------------------------------------------
# figures


def plot_convergence(csv_path, svg_path):
    rows = _read(csv_path)
    by = {col: defaultdict(lambda: defaultdict(list)) for col in ("dist_svd", "dist_inv")}
    rules = []
    for r in rows:
        if r["rule"] not in rules:
            rules.append(r["rule"])
        for col in by:
            by[col][r["rule"]][int(r["step"])].append(_num(r[col]))
    panels = []
    for col, title in (("dist_svd", "distance to top-d singular subspace"), ("dist_inv", "distance to top-d invariant subspace")):
        p = Panel(title, "step", "normalized subspace distance", ylim=(0.0, 1.0))
        for rule in rules:
            p.series.append(_series(by[col][rule], rule.upper()))
        if all(not math.isfinite(v) for g in by[col].values() for vals in g.values() for v in vals):
            p.notes.append("no real top-d invariant subspace for these instances")
        panels.append(p)
    return save(panels, svg_path)


def plot_cumulants(csv_path, bound_path, out_dir):
    rows = _read(csv_path)
    bounds = _read(bound_path) if os.path.exists(bound_path) else []
    grouped = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    order = []
    for r in rows:
        key = (r["rule"], r["family"])
        if key not in order:
            order.append(key)
        grouped[r["rule"]][r["family"]][int(r["T"])].append(_num(r["dist"]))
    paths = []
    for rule in sorted(grouped):
        target = "invariant" if rule == "td" else "singular"
        p = Panel(f"{rule.upper()}: distance to top-d {target} subspace", "number of cumulants T", "distance", xlog=True)
        for r_, fam in order:
            if r_ == rule:
                p.series.append(_series(grouped[rule][fam], fam, markers=True))
        if rule == "mc" and bounds:
            T = [int(b["T"]) for b in bounds]
            p.series.append(Series("bound (sin-theta)", T, [_num(b["bound"]) for b in bounds], dashed=True))
            p.series.append(Series("gaussian range sin-theta", T, [_num(b["mean_sin_theta"]) for b in bounds], dashed=True, markers=True))
        path = os.path.join(out_dir, f"cumulants_{rule}.svg")
        save([p], path, panel_width=680)
        paths.append(path)
    return paths


def plot_rotating(csv_path, meta_path, svg_path):
    rows = _read(csv_path)
    meta = {r["key"]: r["value"] for r in _read(meta_path)} if os.path.exists(meta_path) else {}
    steps = [int(r["step"]) for r in rows]
    e2 = [_num(r["coord_e2"]) for r in rows]
    e3 = [_num(r["coord_e3"]) for r in rows]
    err = [_num(r["error"]) for r in rows]
    traj = Panel("subspace normal in the (e2, e3) plane", "e2 coordinate", "e3 coordinate")
    traj.series.append(Series("normal", e2, e3, markers=True, line=False))
    note = meta.get("invariant_subspace")
    if note:
        traj.notes.append(note[:80])
    ts = Panel("TD value error", "step", "error")
    ts.series.append(Series("td_eval_error", steps, err))
    spread = meta.get("relative_spread_second_half")
    if spread:
        ts.notes.append(f"relative spread (second half): {float(spread):.2e}")
    return save([traj, ts], svg_path)


def plot_directory(out_dir):
    """Regenerate every figure whose CSV is present in ``out_dir``."""
    made = []
    conv = os.path.join(out_dir, "convergence.csv")
    if os.path.exists(conv):
        made.append(plot_convergence(conv, os.path.join(out_dir, "convergence.svg")))
    cum = os.path.join(out_dir, "cumulants.csv")
    if os.path.exists(cum):
        made.extend(plot_cumulants(cum, os.path.join(out_dir, "bound.csv"), out_dir))
    rot = os.path.join(out_dir, "rotating.csv")
    if os.path.exists(rot):
        made.append(plot_rotating(rot, os.path.join(out_dir, "rotating_meta.csv"), os.path.join(out_dir, "rotating.svg")))
    return made

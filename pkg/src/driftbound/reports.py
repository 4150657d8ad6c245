"""Deterministic CSV, SVG, and manifest output.

Every number is written through one fixed format so that a replayed run
reproduces files byte for byte.  Plots are hand-rolled SVG line charts:
no timestamps, no library-version dependence, fixed canvas.
"""
from __future__ import annotations

import hashlib
import math
import os

from . import config as _config

FLOAT_FMT = "%.12g"
_PLOT_FMT = "%.6g"

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 64, 16, 36, 48
_COLORS = ("#1f6f8b", "#c44536", "#3a7d44", "#7d5ba6", "#b8860b", "#444444")


def fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "nan"
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return FLOAT_FMT % v


def write_csv(path, header, rows):
    """Write rows through the fixed float format; returns the sha256 hex."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    data = ("\n".join(lines) + "\n").encode("utf-8")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def write_text(path, text):
    data = text.encode("utf-8")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# ---- manifests ----------------------------------------------------------

def write_manifest(path, cfg, outputs, meta):
    """Record the run: resolved config, output hashes, environment pins.

    The manifest contains no timestamps, so a replay can be compared
    byte-wise against the recorded hashes alone.
    """
    lines = ["[run]"]
    for k in sorted(meta):
        lines.append("%s = %s" % (k, _config.format_value(meta[k])))
    lines.append("")
    lines.append("[config]")
    for k in sorted(cfg):
        lines.append("%s = %s" % (k, _config.format_value(cfg[k])))
    lines.append("")
    lines.append("[outputs]")
    for name in sorted(outputs):
        lines.append("%s = %s" % (name, outputs[name]))
    return write_text(path, "\n".join(lines) + "\n")


def read_manifest(path):
    cfg = _config.load_config(path)
    run = {}
    conf = {}
    outputs = {}
    for key, value in cfg.items():
        head, _, rest = key.partition(".")
        if head == "run":
            run[rest] = value
        elif head == "config":
            conf[rest] = value
        elif head == "outputs":
            outputs[rest] = value
    return run, conf, outputs


# ---- SVG plotting -------------------------------------------------------

def _nice_ticks(lo, hi, target=6):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0, 1.0]
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(v) < 1e-12 * span else v)
        v += step
    return ticks or [lo, hi]


def _log_ticks(lo, hi):
    lo_e = int(math.floor(math.log10(lo)))
    hi_e = int(math.ceil(math.log10(hi)))
    return [10.0 ** e for e in range(lo_e, hi_e + 1)]


class _Scale:
    def __init__(self, lo, hi, out_lo, out_hi, log):
        self.log = log
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi <= lo:
            hi = lo + 1.0
        self.lo, self.hi = lo, hi
        self.out_lo, self.out_hi = out_lo, out_hi

    def __call__(self, v):
        if self.log:
            v = math.log10(max(v, 1e-300))
        t = (v - self.lo) / (self.hi - self.lo)
        return self.out_lo + t * (self.out_hi - self.out_lo)


def svg_line_plot(path, series, title="", xlabel="", ylabel="",
                  logx=False, logy=False, bands=()):
    """Write a fixed-size line chart.

    series: list of (label, xs, ys); bands: list of (label, xs, lo, hi)
    drawn as translucent ribbons under the lines.  Non-finite and (on log
    axes) non-positive points are dropped per series.
    """
    def usable(x, y):
        return all(map(math.isfinite, (x, y))) and \
            (not logx or x > 0) and (not logy or y > 0)

    cleaned = []
    for label, xs, ys in series:
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if usable(x, y)]
        if pts:
            cleaned.append((label, pts))
    cleaned_bands = []
    for label, xs, lo, hi in bands:
        pts = [(float(x), float(a), float(b)) for x, a, b in zip(xs, lo, hi)
               if usable(x, a) and usable(x, b)]
        if pts:
            cleaned_bands.append((label, pts))
    all_x = [p[0] for _, pts in cleaned for p in pts] \
        + [p[0] for _, pts in cleaned_bands for p in pts]
    all_y = [p[1] for _, pts in cleaned for p in pts] \
        + [v for _, pts in cleaned_bands for p in pts for v in p[1:]]
    if not all_x:
        all_x, all_y = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if not logy:
        pad = 0.05 * (y_hi - y_lo or 1.0)
        y_lo, y_hi = y_lo - pad, y_hi + pad
    sx = _Scale(x_lo, x_hi, _ML, _W - _MR, logx)
    sy = _Scale(y_lo, y_hi, _H - _MB, _MT, logy)

    out = []
    out.append('<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
               'viewBox="0 0 %d %d" font-family="monospace" font-size="11">'
               % (_W, _H, _W, _H))
    out.append('<rect width="%d" height="%d" fill="#ffffff"/>' % (_W, _H))
    xticks = _log_ticks(x_lo, x_hi) if logx else _nice_ticks(x_lo, x_hi)
    yticks = _log_ticks(y_lo, y_hi) if logy else _nice_ticks(y_lo, y_hi)
    for tv in xticks:
        if not (x_lo <= tv <= x_hi or logx):
            continue
        px = sx(tv)
        out.append('<line x1="%s" y1="%d" x2="%s" y2="%d" stroke="#dddddd"/>'
                   % (_PLOT_FMT % px, _MT, _PLOT_FMT % px, _H - _MB))
        out.append('<text x="%s" y="%d" text-anchor="middle">%s</text>'
                   % (_PLOT_FMT % px, _H - _MB + 16, _PLOT_FMT % tv))
    for tv in yticks:
        py = sy(tv)
        out.append('<line x1="%d" y1="%s" x2="%d" y2="%s" stroke="#dddddd"/>'
                   % (_ML, _PLOT_FMT % py, _W - _MR, _PLOT_FMT % py))
        out.append('<text x="%d" y="%s" text-anchor="end">%s</text>'
                   % (_ML - 6, _PLOT_FMT % py, _PLOT_FMT % tv))
    out.append('<rect x="%d" y="%d" width="%d" height="%d" fill="none" '
               'stroke="#333333"/>' % (_ML, _MT, _W - _ML - _MR, _H - _MT - _MB))

    for i, (label, pts) in enumerate(cleaned_bands):
        color = _COLORS[i % len(_COLORS)]
        fwd = ["%s,%s" % (_PLOT_FMT % sx(x), _PLOT_FMT % sy(lo))
               for x, lo, _ in pts]
        back = ["%s,%s" % (_PLOT_FMT % sx(x), _PLOT_FMT % sy(hi))
                for x, _, hi in reversed(pts)]
        out.append('<polygon points="%s" fill="%s" opacity="0.15"/>'
                   % (" ".join(fwd + back), color))
    for i, (label, pts) in enumerate(cleaned):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join("%s,%s" % (_PLOT_FMT % sx(x), _PLOT_FMT % sy(y))
                          for x, y in pts)
        out.append('<polyline points="%s" fill="none" stroke="%s" '
                   'stroke-width="1.5"/>' % (coords, color))
        out.append('<text x="%d" y="%d" fill="%s">%s</text>'
                   % (_ML + 8, _MT + 14 + 14 * i, color, label))
    if title:
        out.append('<text x="%d" y="%d" font-size="13" text-anchor="middle">%s'
                   '</text>' % (_W // 2, _MT - 14, title))
    if xlabel:
        out.append('<text x="%d" y="%d" text-anchor="middle">%s</text>'
                   % ((_ML + _W - _MR) // 2, _H - 12, xlabel))
    if ylabel:
        out.append('<text x="14" y="%d" text-anchor="middle" '
                   'transform="rotate(-90 14 %d)">%s</text>'
                   % ((_MT + _H - _MB) // 2, (_MT + _H - _MB) // 2, ylabel))
    out.append("</svg>")
    return write_text(path, "\n".join(out) + "\n")

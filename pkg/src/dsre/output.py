"""Run manifests, CSV headers and dependency-free SVG charts."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass
from xml.sax.saxutils import escape

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class RunManifest:
    config_path: str | None
    model_hash: str
    seed: int
    length: int
    burn_in: int
    command: str
    options: dict
    outdir: str
    version: str

    def to_text(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @property
    def digest(self):
        # outdir and worker count do not change results, so they stay out of the hash
        key = {k: v for k, v in asdict(self).items() if k != "outdir"}
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()

    def write(self):
        os.makedirs(self.outdir, exist_ok=True)
        path = os.path.join(self.outdir, MANIFEST_NAME)
        with open(path, "w") as fh:
            fh.write(self.to_text())
        return path


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def stamp_csv(path, digest):
    """Prefix a CSV file with a ``# manifest=<digest>`` comment line."""
    with open(path) as fh:
        body = fh.read()
    with open(path, "w") as fh:
        fh.write("# manifest=%s\n" % digest)
        fh.write(body)


def _fmt(v):
    return ("%.6g" % v).rstrip()


def bar_chart_svg(edges, heights, path, title="", xlabel="", ylabel="", marks=(), note=""):
    """Histogram as an SVG 1.1 document; ``marks`` are x positions drawn as dashed lines."""
    W, H = 640, 400
    left, right, top, bottom = 60, 20, 40, 50
    pw, ph = W - left - right, H - top - bottom
    x0, x1 = float(edges[0]), float(edges[-1])
    ymax = max(max(heights, default=0.0), 1e-12) * 1.05

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - y / ymax * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="%d" height="%d" '
        'viewBox="0 0 %d %d">' % (W, H, W, H),
        '<rect x="0" y="0" width="%d" height="%d" fill="white"/>' % (W, H),
    ]
    if note:
        out.append("<desc>%s</desc>" % escape(note))
    for lo, hi, h in zip(edges[:-1], edges[1:], heights):
        if h <= 0:
            continue
        out.append(
            '<rect x="%.3f" y="%.3f" width="%.3f" height="%.3f" fill="#4a6fa5"/>'
            % (sx(lo), sy(h), max(sx(hi) - sx(lo) - 0.5, 0.5), sy(0) - sy(h))
        )
    for m in marks:
        out.append(
            '<line x1="%.3f" y1="%d" x2="%.3f" y2="%d" stroke="#c0392b" stroke-dasharray="4,3"/>'
            % (sx(m), top, sx(m), top + ph)
        )
    out += _axes(left, top, pw, ph, x0, x1, 0.0, ymax, sx, sy)
    out += _labels(W, H, left, top, pw, ph, title, xlabel, ylabel)
    out.append("</svg>")
    _write(path, out)


def line_chart_svg(xs, series, path, title="", xlabel="", ylabel="", logx=True, note=""):
    """Polyline chart; ``series`` maps a legend label to y values aligned with ``xs``."""
    W, H = 640, 400
    left, right, top, bottom = 60, 120, 40, 50
    pw, ph = W - left - right, H - top - bottom
    tx = [math.log10(x) if logx else x for x in xs]
    x0, x1 = min(tx), max(tx)
    if x1 == x0:
        x1 = x0 + 1.0
    ys = [y for v in series.values() for y in v if math.isfinite(y)]
    ymax = max(max(ys, default=1.0), 1e-12) * 1.05

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - y / ymax * ph

    colours = ["#4a6fa5", "#c0392b", "#27ae60", "#8e44ad"]
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="%d" height="%d" '
        'viewBox="0 0 %d %d">' % (W, H, W, H),
        '<rect x="0" y="0" width="%d" height="%d" fill="white"/>' % (W, H),
    ]
    if note:
        out.append("<desc>%s</desc>" % escape(note))
    for k, (label, vals) in enumerate(series.items()):
        col = colours[k % len(colours)]
        pts = " ".join("%.3f,%.3f" % (sx(x), sy(y)) for x, y in zip(tx, vals) if math.isfinite(y))
        out.append('<polyline points="%s" fill="none" stroke="%s" stroke-width="2"/>' % (pts, col))
        out.append(
            '<text x="%d" y="%d" font-size="12" fill="%s">%s</text>'
            % (left + pw + 8, top + 16 * (k + 1), col, escape(label))
        )
    out += _axes(left, top, pw, ph, x0, x1, 0.0, ymax, sx, sy, xprefix="1e" if logx else "")
    out += _labels(W, H, left, top, pw, ph, title, xlabel, ylabel)
    out.append("</svg>")
    _write(path, out)


def _axes(left, top, pw, ph, x0, x1, y0, y1, sx, sy, xprefix=""):
    out = [
        '<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>' % (left, top + ph, left + pw, top + ph),
        '<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="black"/>' % (left, top, left, top + ph),
    ]
    for i in range(5):
        x = x0 + (x1 - x0) * i / 4
        out.append(
            '<text x="%.3f" y="%d" font-size="11" text-anchor="middle">%s%s</text>'
            % (sx(x), top + ph + 16, xprefix, _fmt(x))
        )
        y = y0 + (y1 - y0) * i / 4
        out.append(
            '<text x="%d" y="%.3f" font-size="11" text-anchor="end">%s</text>'
            % (left - 4, sy(y) + 4, _fmt(y))
        )
    return out


def _labels(W, H, left, top, pw, ph, title, xlabel, ylabel):
    return [
        '<text x="%d" y="%d" font-size="14" text-anchor="middle">%s</text>'
        % (W // 2, top - 14, escape(title)),
        '<text x="%d" y="%d" font-size="12" text-anchor="middle">%s</text>'
        % (left + pw // 2, H - 12, escape(xlabel)),
        '<text x="14" y="%d" font-size="12" text-anchor="middle" transform="rotate(-90 14 %d)">%s</text>'
        % (top + ph // 2, top + ph // 2, escape(ylabel)),
    ]


def _write(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

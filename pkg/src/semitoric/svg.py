"""Minimal deterministic SVG emission for diagrams, polygons and spectra.

Hand-rolled on purpose: output must be byte-stable across runs (no
timestamps, no library version strings), and the figures are simple
points, polylines and dashed cut lines.
"""

from __future__ import annotations

import math


class SvgCanvas:
    def __init__(self, xlim, ylim, width=640, height=480, margin=40):
        self.xlim, self.ylim = xlim, ylim
        self.width, self.height, self.margin = width, height, margin
        self.parts = []

    def _map(self, x, y):
        fx = (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0])
        fy = (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0])
        px = self.margin + fx * (self.width - 2 * self.margin)
        py = self.height - self.margin - fy * (self.height - 2 * self.margin)
        return px, py

    def polyline(self, pts, color="#1b6ca8", width=1.5, dashed=False):
        if len(pts) < 2:
            return
        coords = " ".join("%.2f,%.2f" % self._map(x, y) for x, y in pts)
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{dash}/>')

    def polygon(self, pts, color="#1b6ca8", fill="#d7e8f4"):
        coords = " ".join("%.2f,%.2f" % self._map(x, y) for x, y in pts)
        self.parts.append(
            f'<polygon points="{coords}" fill="{fill}" stroke="{color}" '
            f'stroke-width="1.5" fill-opacity="0.5"/>')

    def points(self, pts, color="#333333", radius=1.6):
        for x, y in pts:
            px, py = self._map(x, y)
            self.parts.append(
                f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{radius}" '
                f'fill="{color}"/>')

    def marker(self, x, y, color="#c0392b", radius=4.0):
        px, py = self._map(x, y)
        self.parts.append(
            f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{radius}" fill="none" '
            f'stroke="{color}" stroke-width="2"/>')

    def text(self, x, y, s, color="#333333", size=12):
        px, py = self._map(x, y)
        self.parts.append(
            f'<text x="{px:.2f}" y="{py:.2f}" fill="{color}" '
            f'font-size="{size}" font-family="monospace">{s}</text>')

    def axes(self):
        x0, x1 = self.xlim
        y0, y1 = self.ylim
        if x0 < 0 < x1:
            self.polyline([(0, y0), (0, y1)], color="#bbbbbb", width=0.8)
        if y0 < 0 < y1:
            self.polyline([(x0, 0), (x1, 0)], color="#bbbbbb", width=0.8)

    def write(self, path):
        body = "\n".join(self.parts)
        with open(path, "w") as fh:
            fh.write(
                f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">\n'
                f'<rect width="100%" height="100%" fill="white"/>\n'
                f"{body}\n</svg>\n")


def _limits(pts, pad=0.08):
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    dx = max(xs) - min(xs) or 1.0
    dy = max(ys) - min(ys) or 1.0
    return ((min(xs) - pad * dx, max(xs) + pad * dx),
            (min(ys) - pad * dy, max(ys) + pad * dy))


def render_diagram(diagram, path):
    """Bifurcation diagram: boundary, regular samples, critical values."""
    window = diagram.window
    canvas = SvgCanvas((window[0], window[1]), (window[2], window[3]))
    canvas.axes()
    for curve in diagram.boundary:
        canvas.polyline(curve, color="#1b6ca8", width=2.0)
    canvas.points(diagram.regular_samples, color="#a8c8dd", radius=1.2)
    for value, will, rank in diagram.critical_values:
        if rank == 0:
            color = "#c0392b" if will == (0, 0, 1) else "#8e44ad"
            canvas.marker(value[0], value[1], color=color)
    for ff in diagram.focus_focus_values:
        canvas.polyline([(ff[0], ff[1]), (ff[0], window[3])],
                        color="#c0392b", width=1.0, dashed=True)
    canvas.write(path)


def render_weighted_polygon(weighted, path, extra=None):
    """Polygon with cuts drawn as dashed oriented half-lines."""
    poly = weighted.polygon
    pts = [(float(x), float(y)) for x, y in poly.vertices]
    xlim, ylim = _limits(pts)
    canvas = SvgCanvas(xlim, ylim)
    canvas.axes()
    canvas.polygon(pts)
    for (x, sign) in weighted.cuts:
        section = poly.vertical_section(x)
        if section is None:
            continue
        y0 = float(section[0]) if sign < 0 else float(section[1])
        tip = ylim[0] if sign < 0 else ylim[1]
        canvas.polyline([(float(x), y0), (float(x), tip)],
                        color="#c0392b", width=1.4, dashed=True)
        canvas.text(float(x), tip, f"cut {'+' if sign > 0 else '-'}1",
                    color="#c0392b")
    if extra:
        canvas.points(extra, color="#555555", radius=1.0)
    canvas.write(path)


def render_spectrum(spectrum, recovered, path):
    """Raw joint spectrum beside its developed lattice."""
    raw = spectrum.points
    dev = recovered.developed
    pts_all = list(raw) + list(dev)
    xlim, ylim = _limits(pts_all)
    canvas = SvgCanvas(xlim, ylim, width=900)
    canvas.axes()
    canvas.points(raw, color="#1b6ca8", radius=1.6)
    canvas.points(dev, color="#c0392b", radius=1.4)
    hull = list(map(tuple, recovered.hull))
    canvas.polyline(hull + hull[:1], color="#c0392b", width=1.2)
    canvas.write(path)

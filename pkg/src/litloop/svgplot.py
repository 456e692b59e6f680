"""Minimal deterministic SVG charts.

Hand-rolled on purpose: report figures are byte-compared in replay tests, so
the output contains nothing but the data (no timestamps, no library version
strings, fixed float formatting).
"""

from __future__ import annotations

import math

WIDTH = 640
HEIGHT = 480
MARGIN = 56
PAD_FRACTION = 0.05

_POINT_STYLE = 'fill="#2b6cb0" stroke="none"'
_CURVE_STYLE = 'fill="none" stroke="#c05621" stroke-width="1.5"'
_GRID_STYLE = 'fill="none" stroke="#c05621" stroke-width="0.6" opacity="0.75"'
_AXIS_STYLE = 'stroke="#444444" stroke-width="1"'
_TEXT = 'font-family="Helvetica, Arial, sans-serif" font-size="12" fill="#222222"'


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _tick(value: float) -> str:
    return f"{value:.4g}"


def padded_range(values) -> tuple[float, float]:
    """Min/max padded by 5%; degenerate ranges get a unit of breathing room."""
    low, high = min(values), max(values)
    if low == high:
        pad = max(abs(low) * PAD_FRACTION, 0.5)
    else:
        pad = (high - low) * PAD_FRACTION
    return low - pad, high + pad


class _Canvas:
    def __init__(self, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
            f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" {_TEXT} '
            f'font-size="14">{_escape(title)}</text>',
        ]

    def add(self, fragment: str):
        self.parts.append(fragment)

    def finish(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


class Projection2D:
    def __init__(self, xs, ys):
        self.x_range = padded_range(xs)
        self.y_range = padded_range(ys)

    def to_screen(self, x: float, y: float) -> tuple[float, float]:
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        sx = MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)
        sy = HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)
        return sx, sy


def _axes_2d(canvas: _Canvas, proj: Projection2D, xlabel: str, ylabel: str):
    canvas.add(
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" {_AXIS_STYLE}/>'
    )
    canvas.add(
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" {_AXIS_STYLE}/>'
    )
    for i in range(5):
        frac = i / 4
        xv = proj.x_range[0] + frac * (proj.x_range[1] - proj.x_range[0])
        yv = proj.y_range[0] + frac * (proj.y_range[1] - proj.y_range[0])
        sx, _ = proj.to_screen(xv, proj.y_range[0])
        _, sy = proj.to_screen(proj.x_range[0], yv)
        canvas.add(
            f'<text x="{_fmt(sx)}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
            f'{_TEXT}>{_tick(xv)}</text>'
        )
        canvas.add(
            f'<text x="{MARGIN - 8}" y="{_fmt(sy + 4)}" text-anchor="end" '
            f'{_TEXT}>{_tick(yv)}</text>'
        )
    canvas.add(
        f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'{_TEXT}>{_escape(xlabel)}</text>'
    )
    canvas.add(
        f'<text x="16" y="{HEIGHT / 2:.0f}" text-anchor="middle" {_TEXT} '
        f'transform="rotate(-90 16 {HEIGHT / 2:.0f})">{_escape(ylabel)}</text>'
    )


def scatter_2d(xs, ys, xlabel: str, ylabel: str, title: str,
               curve: list[tuple[float, float]] | None = None) -> str:
    """2D scatter with an optional model curve drawn over it."""
    canvas = _Canvas(title)
    proj = Projection2D(xs, ys if curve is None else list(ys) + [p[1] for p in curve])
    _axes_2d(canvas, proj, xlabel, ylabel)
    if curve:
        coords = " ".join(
            f"{_fmt(sx)},{_fmt(sy)}"
            for sx, sy in (proj.to_screen(x, y) for x, y in curve)
        )
        canvas.add(f'<polyline points="{coords}" {_CURVE_STYLE}/>')
    for x, y in zip(xs, ys):
        sx, sy = proj.to_screen(x, y)
        canvas.add(f'<circle cx="{_fmt(sx)}" cy="{_fmt(sy)}" r="3.5" {_POINT_STYLE}/>')
    return canvas.finish()


class Projection3D:
    """Fixed-angle isometric projection onto the canvas."""

    COS = math.cos(math.radians(30))
    SIN = math.sin(math.radians(30))

    def __init__(self, xs, ys, zs):
        self.x_range = padded_range(xs)
        self.y_range = padded_range(ys)
        self.z_range = padded_range(zs)

    def _unit(self, value, bounds) -> float:
        low, high = bounds
        return (value - low) / (high - low)

    def to_screen(self, x, y, z) -> tuple[float, float]:
        ux = self._unit(x, self.x_range)
        uy = self._unit(y, self.y_range)
        uz = self._unit(z, self.z_range)
        iso_x = (ux - uy) * self.COS
        iso_y = (ux + uy) * self.SIN - uz
        sx = WIDTH / 2 + iso_x * (WIDTH / 2 - MARGIN)
        sy = HEIGHT / 2 + iso_y * (HEIGHT - 2 * MARGIN) / 2.6 + 40
        return sx, sy


def scatter_3d(xs, ys, zs, labels: tuple[str, str, str], title: str,
               surface: list[list[tuple[float, float, float]]] | None = None) -> str:
    """Isometric 3D scatter; ``surface`` is an optional grid of rows of
    (x, y, z) samples drawn as a wireframe under the points."""
    canvas = _Canvas(title)
    all_z = list(zs) + (
        [p[2] for row in surface for p in row] if surface else []
    )
    proj = Projection3D(xs, ys, all_z)

    origin = proj.to_screen(proj.x_range[0], proj.y_range[0], proj.z_range[0])
    x_end = proj.to_screen(proj.x_range[1], proj.y_range[0], proj.z_range[0])
    y_end = proj.to_screen(proj.x_range[0], proj.y_range[1], proj.z_range[0])
    z_end = proj.to_screen(proj.x_range[0], proj.y_range[0], proj.z_range[1])
    for end, label in ((x_end, labels[0]), (y_end, labels[1]), (z_end, labels[2])):
        canvas.add(
            f'<line x1="{_fmt(origin[0])}" y1="{_fmt(origin[1])}" '
            f'x2="{_fmt(end[0])}" y2="{_fmt(end[1])}" {_AXIS_STYLE}/>'
        )
        canvas.add(
            f'<text x="{_fmt(end[0])}" y="{_fmt(end[1] - 6)}" text-anchor="middle" '
            f'{_TEXT}>{_escape(label)}</text>'
        )

    if surface:
        for row in surface:
            coords = " ".join(
                f"{_fmt(sx)},{_fmt(sy)}"
                for sx, sy in (proj.to_screen(*p) for p in row)
            )
            canvas.add(f'<polyline points="{coords}" {_GRID_STYLE}/>')
        columns = len(surface[0])
        for j in range(columns):
            coords = " ".join(
                f"{_fmt(sx)},{_fmt(sy)}"
                for sx, sy in (proj.to_screen(*row[j]) for row in surface)
            )
            canvas.add(f'<polyline points="{coords}" {_GRID_STYLE}/>')

    for x, y, z in zip(xs, ys, zs):
        sx, sy = proj.to_screen(x, y, z)
        canvas.add(f'<circle cx="{_fmt(sx)}" cy="{_fmt(sy)}" r="3.5" {_POINT_STYLE}/>')
    return canvas.finish()

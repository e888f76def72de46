"""Protocol -> RGBA text layer."""

from __future__ import annotations

import math

import numpy as np

from layerparse.protocol import ColorKind, ColorSpec, TextInstance, TextProtocol
from layerparse.raster import RasterRGBA, from_premultiplied
from layerparse.render.glyphs import DEFAULT_GLYPHS, GlyphSource
from layerparse.render.layout import (UNDERLINE_OFFSET, UNDERLINE_THICKNESS, LayoutRun,
                                      layout_instance)
from layerparse.render.rasterize import Coverage, coverage_alpha, fill_polygons

BLUR_PASSES = 3


def _to_canvas(local: np.ndarray, bx: float, by: float, rot: float) -> np.ndarray:
    """Glyph-local (u right, v up) -> canvas (y down), rotated counter-clockwise by ``rot``."""
    c, s = math.cos(rot), math.sin(rot)
    u, v = local[..., 0], -local[..., 1]
    return np.stack([bx + u * c + v * s, by - u * s + v * c], axis=-1)


def outline_polygons(inst: TextInstance, run: LayoutRun, glyphs: GlyphSource,
                     grow: float = 0.0) -> np.ndarray:
    """All quads of one instance in canvas pixels, shape (n, 4, 2)."""
    a = inst.appearance
    parts = []
    for pl in run.placements:
        g = glyphs.glyph(a.font_id, pl.cp, pl.scale, a.italic, a.bold, grow)
        if len(g.polygons):
            parts.append(_to_canvas(g.polygons, pl.x, pl.y, pl.rotation))
    size = a.font_size
    for ul in run.underlines:
        u0, u1 = -grow, ul.length + grow
        v0 = -(UNDERLINE_OFFSET + UNDERLINE_THICKNESS) * size - grow
        v1 = -UNDERLINE_OFFSET * size + grow
        quad = np.array([[[u0, v0], [u1, v0], [u1, v1], [u0, v1]]])
        parts.append(_to_canvas(quad, ul.x, ul.y, ul.rotation))
    if not parts:
        return np.zeros((0, 4, 2))
    return np.concatenate(parts)


def box_blur(alpha: np.ndarray, radius: int, passes: int = BLUR_PASSES) -> np.ndarray:
    """Repeated separable box filter of width 2r+1 with zero padding; output is the same shape."""
    if radius <= 0:
        return alpha
    out = alpha
    k = 2 * radius + 1
    for _ in range(passes):
        for axis in (0, 1):
            pad = [(0, 0), (0, 0)]
            pad[axis] = (radius + 1, radius)
            c = np.cumsum(np.pad(out, pad), axis=axis)
            hi = np.take(c, np.arange(k, c.shape[axis]), axis=axis)
            lo = np.take(c, np.arange(0, c.shape[axis] - k), axis=axis)
            out = (hi - lo) / k
    return np.clip(out, 0.0, 1.0)


def _color_field(color: ColorSpec, x0: int, y0: int, h: int, w: int,
                 extent: tuple[float, float, float, float]) -> np.ndarray:
    """Straight RGB in [0, 1] for each pixel of a window, shape (h, w, 3)."""
    if color.kind is ColorKind.SOLID:
        return np.broadcast_to(np.array(color.solid, np.float64) / 255.0, (h, w, 3))
    s0 = np.array(color.stops[0], np.float64) / 255.0
    s1 = np.array(color.stops[1], np.float64) / 255.0
    dx, dy = math.cos(color.angle), -math.sin(color.angle)
    ex0, ey0, ex1, ey1 = extent
    corners = [ex0 * dx + ey0 * dy, ex1 * dx + ey0 * dy, ex0 * dx + ey1 * dy, ex1 * dx + ey1 * dy]
    lo, hi = min(corners), max(corners)
    xs = np.arange(x0, x0 + w, dtype=np.float64) + 0.5
    ys = np.arange(y0, y0 + h, dtype=np.float64) + 0.5
    proj = xs[None, :] * dx + ys[:, None] * dy
    t = np.clip((proj - lo) / (hi - lo), 0.0, 1.0) if hi > lo else np.zeros_like(proj)
    return s0 + t[..., None] * (s1 - s0)


class _Canvas:
    """Premultiplied float accumulation buffer."""

    def __init__(self, width: int, height: int):
        self.width, self.height = width, height
        self.rgb = np.zeros((height, width, 3))
        self.a = np.zeros((height, width))

    def over(self, x0: int, y0: int, alpha: np.ndarray, color: np.ndarray) -> None:
        h, w = alpha.shape
        x1, y1 = min(x0 + w, self.width), min(y0 + h, self.height)
        cx0, cy0 = max(x0, 0), max(y0, 0)
        if x1 <= cx0 or y1 <= cy0:
            return
        sl = (slice(cy0 - y0, y1 - y0), slice(cx0 - x0, x1 - x0))
        al, col = alpha[sl], color[sl]
        dst = (slice(cy0, y1), slice(cx0, x1))
        keep = 1.0 - al
        self.rgb[dst] = col * al[..., None] + self.rgb[dst] * keep[..., None]
        self.a[dst] = al + self.a[dst] * keep

    def to_raster(self) -> RasterRGBA:
        return from_premultiplied(self.rgb, self.a)


def _window_extent(cov: Coverage) -> tuple[float, float, float, float]:
    h, w = cov.counts.shape
    return (cov.x0, cov.y0, cov.x0 + w, cov.y0 + h)


def draw_instance(canvas: _Canvas, inst: TextInstance, glyphs: GlyphSource) -> None:
    a = inst.appearance
    W, H = canvas.width, canvas.height
    run = layout_instance(inst, glyphs, (W, H))
    fill_quads = outline_polygons(inst, run, glyphs)
    if len(fill_quads) == 0:
        return
    fill_cov = fill_polygons(fill_quads, W, H)
    outer_quads = fill_quads
    stroke_cov = None
    if a.stroke_width > 0:
        outer_quads = outline_polygons(inst, run, glyphs, grow=a.stroke_width)
        stroke_cov = fill_polygons(outer_quads, W, H)
    extent = _window_extent(stroke_cov if stroke_cov is not None else fill_cov)

    sh = a.shadow
    if sh is not None:
        r = int(math.floor(sh.blur_radius + 0.5))
        pad = BLUR_PASSES * r
        dx = sh.offset_distance * math.cos(sh.offset_angle)
        dy = -sh.offset_distance * math.sin(sh.offset_angle)
        shifted = outer_quads + np.array([dx, dy])
        # rasterize on an enlarged virtual canvas so the blur sees shadow mass near the edges
        cov = fill_polygons(shifted + pad, W + 2 * pad, H + 2 * pad)
        if not cov.empty:
            alpha = np.pad(coverage_alpha(cov), pad)
            alpha = box_blur(alpha, r)
            color = np.broadcast_to(np.array(sh.color, np.float64) / 255.0, alpha.shape + (3,))
            canvas.over(cov.x0 - 2 * pad, cov.y0 - 2 * pad, alpha, color)

    if stroke_cov is not None and not stroke_cov.empty:
        h, w = stroke_cov.counts.shape
        color = _color_field(a.stroke_color, stroke_cov.x0, stroke_cov.y0, h, w, extent)
        canvas.over(stroke_cov.x0, stroke_cov.y0, coverage_alpha(stroke_cov), color)

    if not fill_cov.empty:
        h, w = fill_cov.counts.shape
        color = _color_field(a.fill, fill_cov.x0, fill_cov.y0, h, w, extent)
        canvas.over(fill_cov.x0, fill_cov.y0, coverage_alpha(fill_cov), color)


def render_text_layer(p: TextProtocol, glyphs: GlyphSource = DEFAULT_GLYPHS) -> RasterRGBA:
    """Render every instance of ``p`` in ascending z-order onto a transparent canvas.

    Each instance draws its shadow, then its stroke, then its fill.
    """
    canvas = _Canvas(p.canvas_width, p.canvas_height)
    for inst in sorted(p.instances, key=lambda i: i.relational.z_order):
        draw_instance(canvas, inst, glyphs)
    return canvas.to_raster()


def layout_svg(p: TextProtocol, glyphs: GlyphSource = DEFAULT_GLYPHS) -> str:
    """Debug SVG showing each glyph origin and its tangent direction."""
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{p.canvas_width}" '
           f'height="{p.canvas_height}" viewBox="0 0 {p.canvas_width} {p.canvas_height}">']
    for i, inst in enumerate(p.instances):
        g = inst.geometry
        out.append(f'<rect x="{g.x!r}" y="{g.y!r}" width="{g.w!r}" height="{g.h!r}" '
                   f'fill="none" stroke="#888" data-instance="{i}"/>')
        for pl in layout_instance(inst, glyphs).placements:
            tx = pl.x + math.cos(pl.rotation) * pl.scale * 0.5
            ty = pl.y - math.sin(pl.rotation) * pl.scale * 0.5
            out.append(f'<circle cx="{pl.x!r}" cy="{pl.y!r}" r="1.5" fill="red"/>')
            out.append(f'<line x1="{pl.x!r}" y1="{pl.y!r}" x2="{tx!r}" y2="{ty!r}" stroke="blue"/>')
    out.append("</svg>")
    return "\n".join(out)

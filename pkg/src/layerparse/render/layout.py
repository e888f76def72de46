"""Glyph placement for one text instance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from layerparse.protocol import Alignment, Direction, TextInstance
from layerparse.render.bezier import ArcLengthTable
from layerparse.render.glyphs import FontNotFound, GlyphSource, is_printing

ASCENT = 0.8  # em, first baseline below the top of the box
UNDERLINE_OFFSET = 0.1  # em below baseline
UNDERLINE_THICKNESS = 0.05  # em


@dataclass(frozen=True)
class Placement:
    cp: int
    x: float  # baseline origin of the glyph (left end of its advance)
    y: float
    rotation: float
    scale: float


@dataclass(frozen=True)
class Underline:
    """Baseline segment starting at (x, y) heading along ``rotation`` for ``length`` pixels."""

    x: float
    y: float
    rotation: float
    length: float


@dataclass
class LayoutRun:
    placements: list[Placement] = field(default_factory=list)
    underlines: list[Underline] = field(default_factory=list)


def rotate_about(px: float, py: float, cx: float, cy: float, theta: float) -> tuple[float, float]:
    """Rotate counter-clockwise on screen (y down) by ``theta`` about (cx, cy)."""
    if theta == 0.0:
        return px, py
    c, s = math.cos(theta), math.sin(theta)
    dx, dy = px - cx, py - cy
    return cx + dx * c + dy * s, cy - dx * s + dy * c


def _wrap(words: list[list[tuple[str, float]]], space_adv: float, spacing: float,
          max_width: float) -> list[list[tuple[str, float]]]:
    """Greedy word wrap; a word wider than the box is broken between characters."""
    limit = max_width + 1e-9 * max(1.0, max_width)
    lines: list[list[tuple[str, float]]] = []
    cur: list[tuple[str, float]] = []

    def width(items):
        return sum(a for _, a in items) + spacing * max(len(items) - 1, 0)

    def start_line(word):
        nonlocal cur
        for item in word:
            if cur and width(cur + [item]) > limit:
                lines.append(cur)
                cur = []
            cur.append(item)

    for word in words:
        if cur:
            candidate = cur + [(" ", space_adv)] + word
            if width(candidate) <= limit:
                cur = candidate
                continue
            lines.append(cur)
            cur = []
        start_line(word)
    lines.append(cur)
    return lines


def _straight(inst: TextInstance, glyphs: GlyphSource) -> LayoutRun:
    g, a = inst.geometry, inst.appearance
    size, spacing = a.font_size, a.char_spacing
    align = inst.relational.alignment
    rtl = inst.semantic.direction is Direction.RTL
    adv = lambda ch: glyphs.advance(a.font_id, ord(ch), size, a.bold)  # noqa: E731

    lines: list[list[tuple[str, float]]] = []
    for para in inst.semantic.text.split("\n"):
        words = [[(ch, adv(ch)) for ch in w] for w in para.split(" ") if w]
        lines.extend(_wrap(words, adv(" "), spacing, g.w) if words else [[]])

    cx, cy = g.x + g.w / 2.0, g.y + g.h / 2.0
    pitch = size * a.line_height
    run = LayoutRun()
    for li, items in enumerate(lines):
        if not items:
            continue
        if rtl:
            items = items[::-1]
        n = len(items)
        natural = sum(w for _, w in items) + spacing * (n - 1)
        gap = spacing
        last = li == len(lines) - 1
        if align is Alignment.LEFT:
            start = g.x
        elif align is Alignment.CENTER:
            start = g.x + (g.w - natural) / 2.0
        elif align is Alignment.RIGHT:
            start = g.x + g.w - natural
        elif last or n == 1:
            # Last line of justified text falls back to the reading direction's edge.
            start = g.x + g.w - natural if rtl else g.x
        else:
            gap = spacing + (g.w - natural) / (n - 1)
            start = g.x
        base_y = g.y + ASCENT * size + li * pitch
        pen = start
        for ch, w in items:
            if is_printing(ch):
                bx, by = rotate_about(pen, base_y, cx, cy, g.theta)
                run.placements.append(Placement(ord(ch), bx, by, g.theta, size))
            pen += w + gap
        if a.underline:
            length = pen - gap - start
            ux, uy = rotate_about(start, base_y, cx, cy, g.theta)
            run.underlines.append(Underline(ux, uy, g.theta, length))
    return run


def _curved(inst: TextInstance, glyphs: GlyphSource) -> LayoutRun:
    a = inst.appearance
    size, spacing = a.font_size, a.char_spacing
    text = inst.semantic.text.replace("\n", " ")
    if inst.semantic.direction is Direction.RTL:
        text = text[::-1]
    advs = [glyphs.advance(a.font_id, ord(ch), size, a.bold) for ch in text]
    run = LayoutRun()
    if not text:
        return run
    table = ArcLengthTable(inst.geometry.bending)
    total = sum(advs) + spacing * (len(advs) - 1)
    align = inst.relational.alignment
    if align is Alignment.LEFT:
        offset = 0.0
    elif align is Alignment.RIGHT:
        offset = table.length - total
    else:  # center; justify on a curve falls back to center
        offset = (table.length - total) / 2.0
    pen = offset
    for i, (ch, w) in enumerate(zip(text, advs)):
        mid = pen + w / 2.0
        (mx, my), ang = _along(table, mid)
        # glyph origin sits half an advance behind its midpoint along the tangent
        bx, by = mx - math.cos(ang) * w / 2.0, my + math.sin(ang) * w / 2.0
        if is_printing(ch):
            run.placements.append(Placement(ord(ch), bx, by, ang, size))
        if a.underline:
            seg = w + (spacing if i < len(text) - 1 else 0.0)
            run.underlines.append(Underline(bx, by, ang, max(seg, 0.0)))
        pen += w + spacing
    return run


def _along(table: ArcLengthTable, dist: float):
    """Point/tangent at arc distance ``dist``, extrapolating linearly past either end."""
    L = table.length
    if 0.0 <= dist <= L:
        return table.at(dist / L)
    (x, y), ang = table.at(0.0 if dist < 0 else 1.0)
    over = dist if dist < 0 else dist - L
    return (x + math.cos(ang) * over, y - math.sin(ang) * over), ang


def layout_instance(inst: TextInstance, glyphs: GlyphSource, canvas=None) -> LayoutRun:
    """Place the glyphs of ``inst``.

    Straight text (tau = 0) is wrapped inside the box and rotated by theta about
    the box center; the control points are not consulted.  Curved text
    (tau = 1) follows the curve at equal arc-length steps with each glyph turned
    to the local tangent; theta is not applied.
    """
    if not glyphs.has_font(inst.appearance.font_id):
        raise FontNotFound(inst.appearance.font_id)
    if inst.geometry.bending.tau == 1:
        return _curved(inst, glyphs)
    return _straight(inst, glyphs)

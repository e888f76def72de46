"""Seeded synthetic design corpus with exact layer ground truth.

Every item stacks a text layer (a rendered protocol) over a sticker layer over
an opaque background.  Attribute ranges:

* background: solid color, or a two-stop linear gradient at a uniform angle (50/50)
* stickers: 0..``max_stickers`` disks, rectangles and rounded rectangles,
  sides 5-30% of the short canvas edge, alpha 255 or 128
* text: ``min_instances``..``max_instances`` instances of 1-3 words from
  letters and digits; boxfont faces; size 14-48 px; line height 1.0-1.6;
  char spacing -1..3 px; 30% rotated by up to 0.4 rad; ``curved_fraction`` on
  a Bezier arc; 30% gradient fill; 30% stroke of 1-3 px; 25% shadow with
  distance 1-5 px and blur 0-4 px; italic/bold/underline 20% each; 10% RTL
"""

from __future__ import annotations

import math
import string
from dataclasses import asdict, dataclass, field

import numpy as np

from layerparse.protocol import (Alignment, Appearance, Bending, ColorSpec, Direction, Geometry,
                                 Relational, Semantic, ShadowSpec, TextInstance, TextProtocol)
from layerparse.raster import (BinaryMask, RasterRGBA, alpha_over, from_premultiplied,
                               mask_from_alpha, quantize)
from layerparse.render import DEFAULT_GLYPHS, GlyphSource, fill_polygons, render_text_layer
from layerparse.render.rasterize import coverage_alpha

TWO_PI = 2.0 * math.pi
_ALPHABET = string.ascii_letters + string.digits


@dataclass(frozen=True)
class CorpusKnobs:
    min_instances: int = 1
    max_instances: int = 5
    curved_fraction: float = 0.2
    max_stickers: int = 6


@dataclass(frozen=True, eq=False)
class CorpusItem:
    id: str
    design: RasterRGBA
    background: RasterRGBA
    sticker: RasterRGBA
    text_protocol: TextProtocol
    text_layer: RasterRGBA
    text_mask: BinaryMask
    sticker_mask: BinaryMask
    meta: dict = field(default_factory=dict)


def compose_layers(background: RasterRGBA, sticker: RasterRGBA | None,
                   text: RasterRGBA | None) -> RasterRGBA:
    """text over (sticker over background); missing layers count as fully transparent."""
    out = background
    if sticker is not None:
        out = alpha_over(sticker, out)
    if text is not None:
        out = alpha_over(text, out)
    return out


def _rgb(rng) -> tuple[int, int, int]:
    return tuple(int(v) for v in rng.integers(0, 256, 3))


def _background(rng, w: int, h: int) -> RasterRGBA:
    px = np.empty((h, w, 4), np.uint8)
    px[..., 3] = 255
    if rng.random() < 0.5:
        px[..., :3] = _rgb(rng)
        return RasterRGBA(px)
    c0 = np.array(_rgb(rng), np.float64) / 255.0
    c1 = np.array(_rgb(rng), np.float64) / 255.0
    ang = rng.uniform(0.0, TWO_PI)
    dx, dy = math.cos(ang), -math.sin(ang)
    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    proj = xs * dx + ys * dy
    corners = [0 * dx + 0 * dy, w * dx, h * dy, w * dx + h * dy]
    t = (proj - min(corners)) / (max(corners) - min(corners))
    px[..., :3] = quantize(c0 + t[..., None] * (c1 - c0))
    return RasterRGBA(px)


def _disk(cx, cy, r, n=64):
    a = np.arange(n) * (TWO_PI / n)
    return np.stack([cx + r * np.cos(a), cy - r * np.sin(a)], 1)


def _rect(x, y, w, h):
    return np.array([[x, y], [x, y + h], [x + w, y + h], [x + w, y]])


def _rounded_rect(x, y, w, h, r, n=8):
    r = min(r, w / 2, h / 2)
    pts = []
    for cx, cy, a0 in ((x + w - r, y + r, 0.0), (x + r, y + r, math.pi / 2),
                       (x + r, y + h - r, math.pi), (x + w - r, y + h - r, 1.5 * math.pi)):
        a = a0 + np.arange(n + 1) * (math.pi / 2 / n)
        pts.append(np.stack([cx + r * np.cos(a), cy - r * np.sin(a)], 1))
    return np.concatenate(pts)


def _stickers(rng, w: int, h: int, max_count: int) -> RasterRGBA:
    rgb = np.zeros((h, w, 3))
    acc = np.zeros((h, w))
    short = min(w, h)
    for _ in range(int(rng.integers(0, max_count + 1))):
        kind = int(rng.integers(0, 3))
        sw, sh = rng.uniform(0.05, 0.3, 2) * short
        x, y = rng.uniform(0, w - sw), rng.uniform(0, h - sh)
        if kind == 0:
            poly = _disk(x + sw / 2, y + sw / 2, sw / 2)
        elif kind == 1:
            poly = _rect(x, y, sw, sh)
        else:
            poly = _rounded_rect(x, y, sw, sh, rng.uniform(0.1, 0.5) * min(sw, sh))
        color = np.array(_rgb(rng), np.float64) / 255.0
        opacity = 1.0 if rng.random() < 0.5 else 128 / 255
        cov = fill_polygons([poly], w, h)
        if cov.empty:
            continue
        ch, cw = cov.counts.shape
        sl = (slice(cov.y0, cov.y0 + ch), slice(cov.x0, cov.x0 + cw))
        al = coverage_alpha(cov) * opacity
        rgb[sl] = color * al[..., None] + rgb[sl] * (1 - al[..., None])
        acc[sl] = al + acc[sl] * (1 - al)
    return from_premultiplied(rgb, acc)


def _word(rng) -> str:
    n = int(rng.integers(2, 8))
    return "".join(_ALPHABET[int(i)] for i in rng.integers(0, len(_ALPHABET), n))


def _color_spec(rng, gradient_p: float) -> ColorSpec:
    if rng.random() < gradient_p:
        return ColorSpec.gradient(_rgb(rng), _rgb(rng), round(float(rng.uniform(0, TWO_PI)), 3) % TWO_PI)
    return ColorSpec.rgb(*_rgb(rng))


def _instance(rng, W: int, H: int, z: int, curved_p: float, glyphs: GlyphSource) -> TextInstance:
    font = ("boxfont", "boxfont-wide", "boxfont-narrow", "boxfont-tall")[int(rng.integers(0, 4))]
    size = round(float(rng.uniform(14, 48)), 1)
    text = " ".join(_word(rng) for _ in range(int(rng.integers(1, 4))))
    spacing = round(float(rng.uniform(-1, 3)), 2)
    line_height = round(float(rng.uniform(1.0, 1.6)), 2)
    natural = sum(glyphs.advance(font, ord(c), size) for c in text) + spacing * (len(text) - 1)
    bw = round(min(natural + rng.uniform(0, 0.3) * natural, W * 0.9), 2)
    bw = max(bw, size)
    # room for however many lines the wrap produces
    lines = max(1, math.ceil(natural / bw))
    bh = round(size * line_height * lines + size * 0.3, 2)
    x = round(float(rng.uniform(0, max(W - bw, 1))), 2)
    y = round(float(rng.uniform(0, max(H - bh, 1))), 2)
    theta = 0.0
    if rng.random() < 0.3:
        theta = round(float(rng.uniform(-0.4, 0.4)), 3) % TWO_PI

    bending = Bending()
    if rng.random() < curved_p:
        bulge = round(float(rng.uniform(-0.4, 0.4)) * bw, 2) or 1.0
        base = y + bh * 0.8
        bending = Bending((x, base), (x + bw / 3, base - bulge), (x + 2 * bw / 3, base - bulge),
                          (x + bw, base), tau=1)
        theta = 0.0

    shadow = None
    if rng.random() < 0.25:
        shadow = ShadowSpec(_rgb(rng), round(float(rng.uniform(0, TWO_PI)), 3) % TWO_PI,
                            round(float(rng.uniform(1, 5)), 2), round(float(rng.uniform(0, 4)), 2))
    stroke = round(float(rng.uniform(1, 3)), 2) if rng.random() < 0.3 else 0.0
    appearance = Appearance(
        font_id=font, font_size=size, fill=_color_spec(rng, 0.3),
        stroke_width=stroke, stroke_color=ColorSpec.rgb(*_rgb(rng)), shadow=shadow,
        line_height=line_height, char_spacing=spacing,
        italic=bool(rng.random() < 0.2), bold=bool(rng.random() < 0.2),
        underline=bool(rng.random() < 0.2),
    )
    direction = Direction.RTL if rng.random() < 0.1 else Direction.LTR
    align = list(Alignment)[int(rng.integers(0, 4))]
    return TextInstance(Geometry(x, y, bw, bh, theta, bending), Semantic(text, direction),
                        appearance, Relational(align, z))


def generate_item(seed: int, index: int, width: int, height: int,
                  knobs: CorpusKnobs = CorpusKnobs(),
                  glyphs: GlyphSource = DEFAULT_GLYPHS) -> CorpusItem:
    rng = np.random.default_rng([seed, index])
    bg = _background(rng, width, height)
    sticker = _stickers(rng, width, height, knobs.max_stickers)
    n = int(rng.integers(knobs.min_instances, knobs.max_instances + 1))
    zs = rng.permutation(n)
    insts = tuple(_instance(rng, width, height, int(zs[i]), knobs.curved_fraction, glyphs)
                  for i in range(n))
    protocol = TextProtocol(width, height, insts)
    text = render_text_layer(protocol, glyphs)
    design = compose_layers(bg, sticker, text)
    item_id = f"item_{index:04d}"
    meta = {"id": item_id, "seed": seed, "index": index, "canvas": [width, height],
            "knobs": asdict(knobs)}
    return CorpusItem(item_id, design, bg, sticker, protocol, text,
                      mask_from_alpha(text), mask_from_alpha(sticker), meta)


def generate_corpus(seed: int, count: int, size: tuple[int, int] = (512, 512),
                    knobs: CorpusKnobs = CorpusKnobs(),
                    glyphs: GlyphSource = DEFAULT_GLYPHS) -> list[CorpusItem]:
    """``count`` items, each a pure function of (seed, index, size, knobs)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if knobs.min_instances < 0 or knobs.max_instances < knobs.min_instances:
        raise ValueError("bad instance count range")
    w, h = size
    return [generate_item(seed, i, w, h, knobs, glyphs) for i in range(count)]

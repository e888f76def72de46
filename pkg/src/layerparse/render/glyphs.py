"""Glyph sources.

``BoxFont`` is a synthetic vector font family: every printable code point maps
to a distinct pattern of blocks on a 5x5 grid, so renders need no font files
and stay bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol

import numpy as np

ITALIC_SHEAR = 0.2
BOLD_GROW = 0.04  # em


class FontNotFound(KeyError):
    pass


def is_printing(ch: str) -> bool:
    return ch.isprintable() and not ch.isspace()


@dataclass(frozen=True)
class Glyph:
    """Outline in glyph-local pixels (u right, v up from the baseline) plus advance width."""

    polygons: np.ndarray  # (n, k, 2)
    advance: float


class GlyphSource(Protocol):
    def has_font(self, font_id: str) -> bool: ...

    def advance(self, font_id: str, cp: int, size: float, bold: bool = False) -> float: ...

    def glyph(self, font_id: str, cp: int, size: float, italic: bool = False,
              bold: bool = False, grow: float = 0.0) -> Glyph: ...


@dataclass(frozen=True)
class BoxFace:
    advance: float  # em
    body_height: float  # em
    salt: int
    cols: int = 5
    rows: int = 5


_MASK21 = (1 << 21) - 1


def _mix21(x: int, salt: int) -> int:
    """Bijection on 21-bit integers (all Unicode scalars fit)."""
    x &= _MASK21
    for k in range(3):
        x = (x * 0x0B5AD5 + 0x1A3F7 * (salt + 1) + k) & _MASK21  # odd multiplier
        x ^= x >> 9
        x ^= (x << 5) & _MASK21
    return x


@lru_cache(maxsize=None)
def _block_runs(face: BoxFace, cp: int) -> tuple[tuple[int, int, int], ...]:
    """Horizontal runs of set blocks: (row, col_start, col_end) with row 0 at the baseline."""
    bits = _mix21(cp, face.salt) | (1 << 21) | (1 << 24)
    runs = []
    for row in range(face.rows):
        col = 0
        while col < face.cols:
            if bits >> (row * face.cols + col) & 1:
                start = col
                while col < face.cols and bits >> (row * face.cols + col) & 1:
                    col += 1
                runs.append((row, start, col))
            else:
                col += 1
    return tuple(runs)


class BoxFont:
    """Built-in deterministic glyph source with four faces."""

    FACES = {
        "boxfont": BoxFace(0.6, 0.70, 0),
        "boxfont-wide": BoxFace(0.8, 0.70, 1),
        "boxfont-narrow": BoxFace(0.45, 0.70, 2),
        "boxfont-tall": BoxFace(0.6, 0.85, 3),
    }

    def __init__(self):
        self._cache: dict = {}

    @property
    def font_ids(self) -> list[str]:
        return list(self.FACES)

    def has_font(self, font_id: str) -> bool:
        return font_id in self.FACES

    def _face(self, font_id: str) -> BoxFace:
        try:
            return self.FACES[font_id]
        except KeyError:
            raise FontNotFound(font_id) from None

    def advance(self, font_id: str, cp: int, size: float, bold: bool = False) -> float:
        return self._face(font_id).advance * size

    def unit_rects(self, font_id: str, cp: int) -> np.ndarray:
        """Block rectangles (u0, v0, u1, v1) in em units; empty for non-printing characters."""
        key = (font_id, cp)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        face = self._face(font_id)
        if not is_printing(chr(cp)):
            rects = np.zeros((0, 4))
        else:
            left, right = 0.08 * face.advance, 0.92 * face.advance
            cw = (right - left) / face.cols
            rh = face.body_height / face.rows
            rects = np.array([(left + c0 * cw, r * rh, left + c1 * cw, (r + 1) * rh)
                              for r, c0, c1 in _block_runs(face, cp)])
        rects.setflags(write=False)
        self._cache[key] = rects
        return rects

    def glyph(self, font_id: str, cp: int, size: float, italic: bool = False,
              bold: bool = False, grow: float = 0.0) -> Glyph:
        rects = self.unit_rects(font_id, cp)
        return Glyph(rects_to_polygons(rects, size, italic, bold, grow),
                     self.advance(font_id, cp, size, bold))


def rects_to_polygons(rects: np.ndarray, size: float, italic: bool, bold: bool,
                      grow: float = 0.0) -> np.ndarray:
    """Turn em-unit block rectangles into pixel quads; ``grow`` (pixels) dilates each block."""
    if len(rects) == 0:
        return np.zeros((0, 4, 2))
    r = rects * size
    g = grow + (BOLD_GROW * size if bold else 0.0)
    u0, v0, u1, v1 = r[:, 0] - g, r[:, 1] - g, r[:, 2] + g, r[:, 3] + g
    quads = np.stack([np.stack([u0, v0], 1), np.stack([u1, v0], 1),
                      np.stack([u1, v1], 1), np.stack([u0, v1], 1)], 1)
    if italic:
        quads[..., 0] += ITALIC_SHEAR * quads[..., 1]
    return quads


DEFAULT_GLYPHS = BoxFont()


def get_glyph_source(name: str = "boxfont") -> GlyphSource:
    if name != "boxfont":
        raise FontNotFound(f"unknown glyph source {name!r}")
    return DEFAULT_GLYPHS

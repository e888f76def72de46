"""RGBA rasters, source-over compositing, masks, and the pixel metrics built on them.

Rasters are 8-bit straight-alpha arrays of shape ``(height, width, 4)``.  A
pixel with alpha 0 carries no color; compositing outputs write such pixels as
``(0, 0, 0, 0)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EPS = 1e-8
# Half an 8-bit quantization step, in [0, 1] intensity units.
HALF_STEP = 0.5 / 255.0


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RasterRGBA:
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 4 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"expected (H, W, 4) pixels, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise ValueError("channels must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    @property
    def alpha(self) -> np.ndarray:
        return self.pixels[..., 3]

    @classmethod
    def transparent(cls, width: int, height: int) -> RasterRGBA:
        return cls(np.zeros((height, width, 4), np.uint8))

    @classmethod
    def filled(cls, width: int, height: int, rgba) -> RasterRGBA:
        px = np.empty((height, width, 4), np.uint8)
        px[...] = rgba
        return cls(px)

    def premultiplied(self) -> np.ndarray:
        """RGB times alpha as float64 in [0, 1], shape (H, W, 3)."""
        px = self.pixels.astype(np.float64) / 255.0
        return px[..., :3] * px[..., 3:4]

    def __eq__(self, other):
        if not isinstance(other, RasterRGBA):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    __hash__ = None

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(np.asarray(self.bits, dtype=bool))
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"expected a 2-D mask, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and np.array_equal(self.bits, other.bits)

    __hash__ = None


def _same_shape(*items) -> None:
    shapes = {x.shape for x in items}
    if len(shapes) != 1:
        raise DimensionMismatch(f"dimensions differ: {sorted(shapes)}")


def quantize(x: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to uint8 with round-half-up."""
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_premultiplied(rgb: np.ndarray, a: np.ndarray) -> RasterRGBA:
    """Quantize a float premultiplied image (rgb (H,W,3), a (H,W)) to a straight-alpha raster."""
    out = np.zeros(rgb.shape[:2] + (4,), np.uint8)
    a8 = quantize(a)
    covered = a8 > 0
    ac = a[covered][:, None]
    out[covered, :3] = quantize(rgb[covered] / ac)
    out[..., 3] = a8
    return RasterRGBA(out)


def alpha_over(top: RasterRGBA, bottom: RasterRGBA) -> RasterRGBA:
    """Source-over composite of ``top`` onto ``bottom``.

    Blending runs in float on straight alpha normalized to [0, 1]; the result
    is quantized once with round-half-up.
    """
    _same_shape(top, bottom)
    ta = top.pixels[..., 3]
    out = bottom.pixels.copy()
    opaque = ta == 255
    out[opaque] = top.pixels[opaque]
    part = (ta > 0) & ~opaque
    if part.any():
        t = top.pixels[part].astype(np.float64) / 255.0
        b = bottom.pixels[part].astype(np.float64) / 255.0
        at, ab = t[:, 3:4], b[:, 3:4]
        out_a = at + ab * (1.0 - at)
        rgb = (t[:, :3] * at + b[:, :3] * ab * (1.0 - at)) / out_a
        blended = np.empty((len(t), 4), np.uint8)
        blended[:, :3] = quantize(rgb)
        blended[:, 3] = quantize(out_a[:, 0])
        out[part] = blended
    out[out[..., 3] == 0] = 0
    return RasterRGBA(out)


def mask_from_alpha(img: RasterRGBA, threshold: int = 0) -> BinaryMask:
    """Bits where alpha is strictly greater than ``threshold``."""
    return BinaryMask(img.pixels[..., 3] > threshold)


def masked_l1(img: RasterRGBA, layer: RasterRGBA, mask: BinaryMask) -> float:
    """Per-channel mean absolute error between the masked input and a rendered layer.

    The numerator sums, over every pixel and RGB channel (intensities in
    [0, 1]), ``|mask * I - alpha * C|`` where ``C`` is the layer color.  The
    denominator is ``3 * popcount(mask) + 1e-8``.

    Inside the mask, a partially covered layer pixel (0 < alpha < 1) cannot
    reproduce the input on its own: the input there also holds whatever lies
    behind the layer.  Such pixels are scored by the distance from ``I`` to the
    interval ``[alpha*C, alpha*C + (1 - alpha)]`` of composites the layer
    admits over any backdrop, less half an 8-bit step for quantization.  Opaque
    and empty layer pixels use the plain difference, so a rendered layer that
    produced the input scores exactly 0.
    """
    _same_shape(img, layer, mask)
    m = mask.bits
    i = img.pixels[..., :3].astype(np.float64) / 255.0
    a = layer.pixels[..., 3:4].astype(np.float64) / 255.0
    lo = layer.pixels[..., :3].astype(np.float64) / 255.0 * a
    diff = np.abs(np.where(m[..., None], i, 0.0) - lo)

    partial = m & (layer.pixels[..., 3] > 0) & (layer.pixels[..., 3] < 255)
    if partial.any():
        ip, lop, ap = i[partial], lo[partial], a[partial]
        hi = lop + (1.0 - ap)
        dist = np.maximum(lop - ip, 0.0) + np.maximum(ip - hi, 0.0)
        diff[partial] = np.maximum(dist - HALF_STEP, 0.0)
    return float(diff.sum() / (3.0 * np.count_nonzero(m) + EPS))


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    _same_shape(a, b)
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.bits & b.bits) / union


def rgb_l1(a: RasterRGBA, b: RasterRGBA) -> float:
    """Mean absolute difference of alpha-premultiplied RGB over all pixels and channels."""
    _same_shape(a, b)
    return float(np.abs(a.premultiplied() - b.premultiplied()).mean())


# ---------------------------------------------------------------------------
# I/O

_DUMP_HEADER = struct.Struct("<II")


def write_png(img: RasterRGBA, path) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(img.pixels), "RGBA").save(path, format="PNG", optimize=False,
                                                       compress_level=6)


def read_png(path) -> RasterRGBA:
    from PIL import Image

    with Image.open(path) as im:
        return RasterRGBA(np.array(im.convert("RGBA"), dtype=np.uint8))


def dump_raw(img: RasterRGBA) -> bytes:
    """Headerless-style debug dump: little-endian uint32 width, height, then raw RGBA rows."""
    return _DUMP_HEADER.pack(img.width, img.height) + img.tobytes()


def load_raw(data: bytes) -> RasterRGBA:
    w, h = _DUMP_HEADER.unpack_from(data)
    body = data[_DUMP_HEADER.size:]
    if len(body) != w * h * 4:
        raise ValueError(f"raw dump body has {len(body)} bytes, expected {w * h * 4}")
    return RasterRGBA(np.frombuffer(body, np.uint8).reshape(h, w, 4).copy())


def write_raw(img: RasterRGBA, path) -> None:
    Path(path).write_bytes(dump_raw(img))


def read_raw(path) -> RasterRGBA:
    return load_raw(Path(path).read_bytes())

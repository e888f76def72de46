"""Renderer-grounded parsing reward: pixel fidelity, localization IoU, and string similarity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from layerparse.protocol import TextProtocol
from layerparse.raster import (BinaryMask, DimensionMismatch, RasterRGBA, iou, mask_from_alpha,
                               masked_l1)
from layerparse.render import DEFAULT_GLYPHS, GlyphSource, render_text_layer
from layerparse.render.bezier import DegenerateCurve
from layerparse.render.glyphs import FontNotFound

Box = tuple[float, float, float, float]


@dataclass(frozen=True)
class RewardWeights:
    """Term weights, normalized on construction so they sum to one."""

    lambda_pix: float = 1.0
    lambda_loc: float = 1.0
    lambda_sem: float = 1.0

    def __post_init__(self):
        w = (self.lambda_pix, self.lambda_loc, self.lambda_sem)
        if any(not math.isfinite(x) or x < 0 for x in w):
            raise ValueError(f"reward weights must be finite and nonnegative, got {w}")
        total = sum(w)
        if total <= 0:
            raise ValueError("reward weights must not all be zero")
        object.__setattr__(self, "lambda_pix", self.lambda_pix / total)
        object.__setattr__(self, "lambda_loc", self.lambda_loc / total)
        object.__setattr__(self, "lambda_sem", self.lambda_sem / total)

    def as_list(self) -> list[float]:
        return [self.lambda_pix, self.lambda_loc, self.lambda_sem]


@dataclass(frozen=True)
class RewardBreakdown:
    r_pix: float
    r_loc: float
    r_sem: float
    total: float
    weights: RewardWeights
    error: str | None = None

    def to_json(self) -> dict:
        d = {"r_pix": self.r_pix, "r_loc": self.r_loc, "r_sem": self.r_sem,
             "total": self.total, "weights": self.weights.as_list()}
        if self.error is not None:
            d["error"] = self.error
        return d


@dataclass(frozen=True)
class RewardContext:
    input: RasterRGBA
    reference_mask: BinaryMask
    reference_texts: tuple[tuple[str, Box], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.input.shape != self.reference_mask.shape:
            raise DimensionMismatch("reference mask must match the input size")


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode scalar values."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_sim(a: str, b: str) -> float:
    """``1 - Lev(a, b) / max(|a|, |b|)``; two empty strings are identical."""
    n = max(len(a), len(b))
    if n == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / n


def box_iou(a: Box, b: Box) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def greedy_match(pred_boxes: list[Box], ref_boxes: list[Box]) -> list[tuple[int, int]]:
    """One-to-one matching by descending box IoU; pairs with zero overlap stay unmatched.

    Ties resolve toward the lower (pred, ref) index pair.
    """
    pairs = [(box_iou(p, r), i, j) for i, p in enumerate(pred_boxes)
             for j, r in enumerate(ref_boxes)]
    pairs = sorted((x for x in pairs if x[0] > 0), key=lambda x: (-x[0], x[1], x[2]))
    used_p, used_r, out = set(), set(), []
    for _, i, j in pairs:
        if i in used_p or j in used_r:
            continue
        used_p.add(i)
        used_r.add(j)
        out.append((i, j))
    return sorted(out)


def r_pix(ctx: RewardContext, rendered: RasterRGBA) -> float:
    mask = mask_from_alpha(rendered, 0)
    return math.exp(-masked_l1(ctx.input, rendered, mask))


def r_loc(ctx: RewardContext, rendered: RasterRGBA) -> float:
    return iou(mask_from_alpha(rendered, 0), ctx.reference_mask)


def r_sem(pred: TextProtocol, ctx: RewardContext) -> float:
    """Length-weighted string similarity over matched and unmatched instances.

    Each pair (or lone instance) weighs ``max(|a|, |b|, 1)``; unmatched
    instances on either side score 0.  No text on both sides scores 1.
    """
    preds = [(i.semantic.text, i.box) for i in pred.instances]
    refs = list(ctx.reference_texts)
    if not preds and not refs:
        return 1.0
    matches = greedy_match([b for _, b in preds], [b for _, b in refs])
    num = den = 0.0
    for i, j in matches:
        a, b = preds[i][0], refs[j][0]
        w = max(len(a), len(b), 1)
        num += w * levenshtein_sim(a, b)
        den += w
    mp, mr = {i for i, _ in matches}, {j for _, j in matches}
    den += sum(max(len(t), 1) for k, (t, _) in enumerate(preds) if k not in mp)
    den += sum(max(len(t), 1) for k, (t, _) in enumerate(refs) if k not in mr)
    return num / den


def parser_reward(input: RasterRGBA, pred: TextProtocol, ctx: RewardContext,
                  w: RewardWeights = RewardWeights(),
                  glyphs: GlyphSource = DEFAULT_GLYPHS) -> RewardBreakdown:
    """Render ``pred`` and score it against the input design.

    A candidate that cannot be rendered (unknown font, degenerate curve, wrong
    canvas size) gets total 0 and an ``error`` note instead of raising.
    """
    if input.shape != ctx.input.shape:
        raise DimensionMismatch("input and context sizes differ")
    try:
        if (pred.canvas_height, pred.canvas_width) != input.shape:
            raise DimensionMismatch(
                f"protocol canvas {pred.canvas} does not match input {input.width}x{input.height}")
        rendered = render_text_layer(pred, glyphs)
    except (FontNotFound, DegenerateCurve, DimensionMismatch) as e:
        return RewardBreakdown(0.0, 0.0, 0.0, 0.0, w, error=f"{type(e).__name__}: {e}")
    scored = RewardContext(input, ctx.reference_mask, ctx.reference_texts)
    rp, rl, rs = r_pix(scored, rendered), r_loc(scored, rendered), r_sem(pred, scored)
    total = w.lambda_pix * rp + w.lambda_loc * rl + w.lambda_sem * rs
    return RewardBreakdown(rp, rl, rs, total, w)


def context_from_protocol(design: RasterRGBA, text_layer: RasterRGBA,
                          protocol: TextProtocol) -> RewardContext:
    """Reference context built from ground-truth annotations."""
    return RewardContext(design, mask_from_alpha(text_layer, 0),
                         tuple((i.semantic.text, i.box) for i in protocol.instances))

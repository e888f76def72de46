"""Layer decomposition metrics: mask IoU, font and attribute accuracy, per-layer RGB L1."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from layerparse.eval.corpus import CorpusItem
from layerparse.protocol import ColorKind, ColorSpec, TextInstance, TextProtocol
from layerparse.raster import BinaryMask, RasterRGBA, iou, mask_from_alpha, rgb_l1
from layerparse.render import DEFAULT_GLYPHS, GlyphSource, render_text_layer
from layerparse.reward import greedy_match


class MissingPrediction(KeyError):
    pass


@dataclass(frozen=True)
class AttrThresholds:
    """Tolerances for continuous attributes (library defaults, not published values)."""

    font_size_rel: float = 0.05
    color_per_channel: float = 8.0
    stroke_width_abs: float = 1.0
    shadow_angle_abs: float = math.radians(10.0)
    shadow_blur_abs: float = 2.0
    line_height_rel: float = 0.05
    char_spacing_abs: float = 0.5

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v >= 0:
                raise ValueError(f"threshold {k} must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> AttrThresholds:
        d = dict(d)
        if "shadow_angle_deg" in d:
            d["shadow_angle_abs"] = math.radians(d.pop("shadow_angle_deg"))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown threshold(s) {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


def layer_iou(pred_mask: BinaryMask, gt_mask: BinaryMask) -> float:
    return iou(pred_mask, gt_mask)


def match_instances(pred: TextProtocol, gt: TextProtocol) -> list[tuple[int, int]]:
    return greedy_match([i.box for i in pred.instances], [i.box for i in gt.instances])


def font_accuracy(pred: TextProtocol, gt: TextProtocol) -> float:
    """Matched pairs with equal font ids over ``max(|pred|, |gt|)``."""
    n = max(len(pred.instances), len(gt.instances))
    if n == 0:
        return 1.0
    hits = sum(pred.instances[i].appearance.font_id == gt.instances[j].appearance.font_id
               for i, j in match_instances(pred, gt))
    return hits / n


def _angle_diff(a: float, b: float) -> float:
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def _rgb_close(a, b, tol: float) -> bool:
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def _color_close(a: ColorSpec, b: ColorSpec, th: AttrThresholds) -> bool:
    if a.kind is not b.kind:
        return False
    if a.kind is ColorKind.SOLID:
        return _rgb_close(a.solid, b.solid, th.color_per_channel)
    return (_rgb_close(a.stops[0], b.stops[0], th.color_per_channel)
            and _rgb_close(a.stops[1], b.stops[1], th.color_per_channel)
            and _angle_diff(a.angle, b.angle) <= th.shadow_angle_abs)


def attribute_fields(pred: TextInstance, gt: TextInstance, th: AttrThresholds) -> dict[str, bool]:
    """Per-field correctness for one matched pair (font id and z-order excluded)."""
    p, g = pred.appearance, gt.appearance
    ps, gs = p.shadow, g.shadow
    both = ps is not None and gs is not None
    none = ps is None and gs is None
    return {
        "font_size": abs(p.font_size - g.font_size) <= th.font_size_rel * g.font_size,
        "fill": _color_close(p.fill, g.fill, th),
        "stroke_width": abs(p.stroke_width - g.stroke_width) <= th.stroke_width_abs,
        "stroke_color": _color_close(p.stroke_color, g.stroke_color, th),
        "shadow_color": none or (both and _rgb_close(ps.color, gs.color, th.color_per_channel)),
        "shadow_angle": none or (both and _angle_diff(ps.offset_angle, gs.offset_angle)
                                 <= th.shadow_angle_abs),
        "shadow_blur": none or (both and abs(ps.blur_radius - gs.blur_radius) <= th.shadow_blur_abs),
        "line_height": abs(p.line_height - g.line_height) <= th.line_height_rel * g.line_height,
        "char_spacing": abs(p.char_spacing - g.char_spacing) <= th.char_spacing_abs,
        "italic": p.italic == g.italic,
        "bold": p.bold == g.bold,
        "underline": p.underline == g.underline,
        "alignment": pred.relational.alignment is gt.relational.alignment,
    }


def attr_accuracy(pred: TextProtocol, gt: TextProtocol,
                  th: AttrThresholds = AttrThresholds()) -> float:
    """Mean per-field accuracy over matched pairs; unmatched instances contribute 0.

    The denominator is ``max(|pred|, |gt|)``, as for font accuracy.
    """
    n = max(len(pred.instances), len(gt.instances))
    if n == 0:
        return 1.0
    total = 0.0
    for i, j in match_instances(pred, gt):
        f = attribute_fields(pred.instances[i], gt.instances[j], th)
        total += sum(f.values()) / len(f)
    return total / n


@dataclass(frozen=True, eq=False)
class ItemPrediction:
    protocol: TextProtocol
    sticker: RasterRGBA
    background: RasterRGBA


@dataclass
class EvalReport:
    t_iou: float
    s_iou: float
    rgb_l1_text: float
    rgb_l1_sticker: float
    rgb_l1_bg: float
    rgb_l1_avg: float
    font_accuracy: float
    attr_accuracy: float
    items: list[dict] = field(default_factory=list)

    KEYS = ("t_iou", "s_iou", "rgb_l1_text", "rgb_l1_sticker", "rgb_l1_bg", "rgb_l1_avg",
            "font_accuracy", "attr_accuracy")

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.KEYS}
        d["items"] = self.items
        return d

    @classmethod
    def from_rows(cls, rows: list[dict]) -> EvalReport:
        n = len(rows)
        means = {k: sum(r[k] for r in rows) / n for k in cls.KEYS}
        return cls(**means, items=rows)


def evaluate_item(pred: ItemPrediction, item: CorpusItem, th: AttrThresholds = AttrThresholds(),
                  glyphs: GlyphSource = DEFAULT_GLYPHS) -> dict:
    text = render_text_layer(pred.protocol, glyphs)
    l1_text = rgb_l1(text, item.text_layer)
    l1_sticker = rgb_l1(pred.sticker, item.sticker)
    l1_bg = rgb_l1(pred.background, item.background)
    return {
        "id": item.id,
        "t_iou": layer_iou(mask_from_alpha(text), item.text_mask),
        "s_iou": layer_iou(mask_from_alpha(pred.sticker), item.sticker_mask),
        "rgb_l1_text": l1_text,
        "rgb_l1_sticker": l1_sticker,
        "rgb_l1_bg": l1_bg,
        "rgb_l1_avg": (l1_text + l1_sticker + l1_bg) / 3.0,
        "font_accuracy": font_accuracy(pred.protocol, item.text_protocol),
        "attr_accuracy": attr_accuracy(pred.protocol, item.text_protocol, th),
    }


def evaluate(preds: dict[str, ItemPrediction], corpus: list[CorpusItem],
             th: AttrThresholds = AttrThresholds(),
             glyphs: GlyphSource = DEFAULT_GLYPHS) -> EvalReport:
    """Score predictions item by item and average.

    Raises:
        MissingPrediction: a corpus id has no prediction.
    """
    if not corpus:
        raise ValueError("empty corpus")
    missing = [it.id for it in corpus if it.id not in preds]
    if missing:
        raise MissingPrediction(", ".join(missing))
    return EvalReport.from_rows([evaluate_item(preds[it.id], it, th, glyphs) for it in corpus])


def ground_truth_predictions(corpus: list[CorpusItem]) -> dict[str, ItemPrediction]:
    return {it.id: ItemPrediction(it.text_protocol, it.sticker, it.background) for it in corpus}

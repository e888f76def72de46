"""Deterministic text-layer renderer."""

from layerparse.render.bezier import (ArcLengthTable, DegenerateCurve, arc_length_param,
                                      bezier_derivative, bezier_point, bezier_points,
                                      tangent_angle)
from layerparse.render.engine import box_blur, layout_svg, outline_polygons, render_text_layer
from layerparse.render.glyphs import (DEFAULT_GLYPHS, BoxFont, FontNotFound, Glyph, GlyphSource,
                                      get_glyph_source)
from layerparse.render.layout import LayoutRun, Placement, Underline, layout_instance
from layerparse.render.rasterize import Coverage, fill_polygons

__all__ = [
    "ArcLengthTable", "BoxFont", "Coverage", "DEFAULT_GLYPHS", "DegenerateCurve", "FontNotFound",
    "Glyph", "GlyphSource", "LayoutRun", "Placement", "Underline", "arc_length_param",
    "bezier_derivative", "bezier_point", "bezier_points", "box_blur", "fill_polygons",
    "get_glyph_source", "layout_instance", "layout_svg", "outline_polygons",
    "render_text_layer", "tangent_angle",
]

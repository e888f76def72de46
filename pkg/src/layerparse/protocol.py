"""Text rendering protocol: data model, JSON parsing, validation, canonical serialization.

Coordinates are canvas pixels with the origin at the top-left and y pointing
down.  Angles are radians measured counter-clockwise (as seen on screen) from
the +x axis.  ``(x, y)`` is the top-left corner of an instance's box before
rotation; rotation pivots about the box center.

JSON layout::

    {"canvas": [W, H],
     "instances": [
       {"geometry":   {"x", "y", "w", "h", "theta",
                       "bending": {"p": [[x, y], [x, y], [x, y], [x, y]], "tau"}},
        "semantic":   {"text", "direction"},
        "appearance": {"font", "size", "fill", "stroke_width", "stroke_color",
                       "shadow", "line_height", "char_spacing",
                       "italic", "bold", "underline"},
        "relational": {"align", "z"}}]}

Colors are ``[r, g, b]`` with 0-255 integer channels, or a linear gradient
``{"stops": [[r, g, b], [r, g, b]], "angle": a}``.  A shadow is
``{"color": [r, g, b], "angle": a, "distance": d, "blur": b}``.

Optional keys and their defaults: ``theta`` 0, ``bending`` absent (all control
points at the origin, ``tau`` 0), ``tau`` 0, ``direction`` "ltr",
``stroke_width`` 0, ``stroke_color`` [0, 0, 0], ``shadow`` absent (no shadow),
``line_height`` 1.2, ``char_spacing`` 0, ``italic``/``bold``/``underline``
false, ``align`` "left".  Unknown keys are rejected.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any

TWO_PI = 2.0 * math.pi

Point = tuple[float, float]
RGB = tuple[int, int, int]


class ProtocolError(ValueError):
    """Base class for protocol problems."""


class EncodingError(ProtocolError):
    """Input is not valid UTF-8 or not valid JSON."""


class SchemaError(ProtocolError):
    """A required key is missing, a key is unknown, a value has the wrong type, or an enum value is unknown."""


class RangeError(ProtocolError):
    """A value is well-typed but violates a type invariant."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class InvalidProtocol(ProtocolError):
    """Raised by :func:`serialize_protocol` for protocols that fail validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class Direction(str, enum.Enum):
    LTR = "ltr"
    RTL = "rtl"


class Alignment(str, enum.Enum):
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"
    JUSTIFY = "justify"


class ColorKind(str, enum.Enum):
    SOLID = "solid"
    LINEAR_GRADIENT = "linear_gradient"


@dataclass(frozen=True)
class ColorSpec:
    kind: ColorKind = ColorKind.SOLID
    solid: RGB = (0, 0, 0)
    stops: tuple[RGB, RGB] | None = None
    angle: float = 0.0

    @classmethod
    def rgb(cls, r: int, g: int, b: int) -> ColorSpec:
        return cls(ColorKind.SOLID, (r, g, b))

    @classmethod
    def gradient(cls, start: RGB, end: RGB, angle: float) -> ColorSpec:
        return cls(ColorKind.LINEAR_GRADIENT, tuple(start), (tuple(start), tuple(end)), angle)


@dataclass(frozen=True)
class ShadowSpec:
    color: RGB = (0, 0, 0)
    offset_angle: float = 0.0
    offset_distance: float = 0.0
    blur_radius: float = 0.0


@dataclass(frozen=True)
class Bending:
    p0: Point = (0.0, 0.0)
    p1: Point = (0.0, 0.0)
    p2: Point = (0.0, 0.0)
    p3: Point = (0.0, 0.0)
    tau: int = 0

    @property
    def points(self) -> tuple[Point, Point, Point, Point]:
        return (self.p0, self.p1, self.p2, self.p3)


@dataclass(frozen=True)
class Geometry:
    x: float
    y: float
    w: float
    h: float
    theta: float = 0.0
    bending: Bending = field(default_factory=Bending)


@dataclass(frozen=True)
class Semantic:
    text: str
    direction: Direction = Direction.LTR


@dataclass(frozen=True)
class Appearance:
    font_id: str
    font_size: float
    fill: ColorSpec = field(default_factory=ColorSpec)
    stroke_width: float = 0.0
    stroke_color: ColorSpec = field(default_factory=ColorSpec)
    shadow: ShadowSpec | None = None
    line_height: float = 1.2
    char_spacing: float = 0.0
    italic: bool = False
    bold: bool = False
    underline: bool = False


@dataclass(frozen=True)
class Relational:
    alignment: Alignment = Alignment.LEFT
    z_order: int = 0


@dataclass(frozen=True)
class TextInstance:
    geometry: Geometry
    semantic: Semantic
    appearance: Appearance
    relational: Relational

    @property
    def box(self) -> tuple[float, float, float, float]:
        g = self.geometry
        return (g.x, g.y, g.w, g.h)


@dataclass(frozen=True)
class TextProtocol:
    canvas_width: int
    canvas_height: int
    instances: tuple[TextInstance, ...] = ()

    @property
    def canvas(self) -> tuple[int, int]:
        return (self.canvas_width, self.canvas_height)


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


# ---------------------------------------------------------------------------
# validation


def _finite(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_rgb(rgb, path: str, out: list[Violation]) -> None:
    if len(rgb) != 3:
        out.append(Violation(path, "color must have 3 channels"))
        return
    for c, v in zip("rgb", rgb):
        if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v <= 255:
            out.append(Violation(f"{path}.{c}", f"channel {v!r} outside [0, 255]"))


def _check_angle(v, path: str, out: list[Violation]) -> None:
    if not _finite(v) or not 0.0 <= v < TWO_PI:
        out.append(Violation(path, f"angle {v!r} outside [0, 2*pi)"))


def _check_color(c: ColorSpec, path: str, out: list[Violation]) -> None:
    if c.kind is ColorKind.SOLID:
        _check_rgb(c.solid, path, out)
        return
    if c.stops is None or len(c.stops) != 2:
        out.append(Violation(f"{path}.stops", "gradient needs exactly two stops"))
        return
    _check_rgb(c.stops[0], f"{path}.stops[0]", out)
    _check_rgb(c.stops[1], f"{path}.stops[1]", out)
    _check_angle(c.angle, f"{path}.angle", out)


def _validate_instance(inst: TextInstance, p: str, out: list[Violation]) -> None:
    g = inst.geometry
    for name in ("x", "y"):
        if not _finite(getattr(g, name)):
            out.append(Violation(f"{p}.geometry.{name}", "must be finite"))
    for name in ("w", "h"):
        v = getattr(g, name)
        if not _finite(v) or v <= 0:
            out.append(Violation(f"{p}.geometry.{name}", f"must be > 0, got {v!r}"))
    _check_angle(g.theta, f"{p}.geometry.theta", out)

    b = g.bending
    if b.tau not in (0, 1) or isinstance(b.tau, bool):
        out.append(Violation(f"{p}.geometry.bending.tau", f"must be 0 or 1, got {b.tau!r}"))
    coords = [c for pt in b.points for c in pt]
    if not all(_finite(c) for c in coords):
        out.append(Violation(f"{p}.geometry.bending.p", "control points must be finite"))
    elif b.tau == 1 and all(pt == b.p0 for pt in b.points):
        out.append(Violation(f"{p}.geometry.bending.p", "degenerate curve: all control points coincide"))

    s = inst.semantic
    if not isinstance(s.text, str):
        out.append(Violation(f"{p}.semantic.text", "must be a string"))
    else:
        try:
            s.text.encode("utf-8")
        except UnicodeEncodeError:
            out.append(Violation(f"{p}.semantic.text", "not valid Unicode (lone surrogate)"))
    if not isinstance(s.direction, Direction):
        out.append(Violation(f"{p}.semantic.direction", f"unknown direction {s.direction!r}"))

    a = inst.appearance
    if not isinstance(a.font_id, str) or not a.font_id:
        out.append(Violation(f"{p}.appearance.font", "must be a nonempty string"))
    if not _finite(a.font_size) or a.font_size <= 0:
        out.append(Violation(f"{p}.appearance.size", f"must be > 0, got {a.font_size!r}"))
    _check_color(a.fill, f"{p}.appearance.fill", out)
    if not _finite(a.stroke_width) or a.stroke_width < 0:
        out.append(Violation(f"{p}.appearance.stroke_width", f"must be >= 0, got {a.stroke_width!r}"))
    _check_color(a.stroke_color, f"{p}.appearance.stroke_color", out)
    if a.shadow is not None:
        sh = a.shadow
        _check_rgb(sh.color, f"{p}.appearance.shadow.color", out)
        _check_angle(sh.offset_angle, f"{p}.appearance.shadow.angle", out)
        if not _finite(sh.offset_distance) or sh.offset_distance < 0:
            out.append(Violation(f"{p}.appearance.shadow.distance", "must be >= 0"))
        if not _finite(sh.blur_radius) or sh.blur_radius < 0:
            out.append(Violation(f"{p}.appearance.shadow.blur", "must be >= 0"))
    if not _finite(a.line_height) or a.line_height <= 0:
        out.append(Violation(f"{p}.appearance.line_height", f"must be > 0, got {a.line_height!r}"))
    if not _finite(a.char_spacing):
        out.append(Violation(f"{p}.appearance.char_spacing", "must be finite"))

    r = inst.relational
    if not isinstance(r.alignment, Alignment):
        out.append(Violation(f"{p}.relational.align", f"unknown alignment {r.alignment!r}"))
    if not isinstance(r.z_order, int) or isinstance(r.z_order, bool):
        out.append(Violation(f"{p}.relational.z", "must be an integer"))


def validate(p: TextProtocol) -> list[Violation]:
    """Return every invariant violation in ``p``; an empty list means valid."""
    out: list[Violation] = []
    for name, v in (("canvas[0]", p.canvas_width), ("canvas[1]", p.canvas_height)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            out.append(Violation(name, f"canvas size must be a positive integer, got {v!r}"))
    seen: dict[int, int] = {}
    for i, inst in enumerate(p.instances):
        _validate_instance(inst, f"instances[{i}]", out)
        z = inst.relational.z_order
        if z in seen:
            out.append(Violation(
                f"instances[{seen[z]}],instances[{i}].relational.z",
                f"duplicate z-order {z} on instances {seen[z]} and {i}",
            ))
        else:
            seen[z] = i
    return out


# ---------------------------------------------------------------------------
# parsing


def _reject_constant(name):
    raise EncodingError(f"non-standard JSON constant {name}")


def _obj(d, path: str, required: tuple[str, ...], optional: tuple[str, ...]) -> dict:
    if not isinstance(d, dict):
        raise SchemaError(f"{path}: expected an object")
    for k in required:
        if k not in d:
            raise SchemaError(f"{path}: missing required key {k!r}")
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise SchemaError(f"{path}: unknown key(s) {sorted(unknown)}")
    return d


def _num(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{path}: expected a number, got {type(v).__name__}")
    return float(v)


def _int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{path}: expected an integer")
    return v


def _bool(v, path: str) -> bool:
    if not isinstance(v, bool):
        raise SchemaError(f"{path}: expected a boolean")
    return v


def _rgb(v, path: str) -> RGB:
    if not isinstance(v, list) or len(v) != 3:
        raise SchemaError(f"{path}: expected [r, g, b]")
    return tuple(_int(c, f"{path}[{i}]") for i, c in enumerate(v))


def _point(v, path: str) -> Point:
    if not isinstance(v, list) or len(v) != 2:
        raise SchemaError(f"{path}: expected [x, y]")
    return (_num(v[0], f"{path}[0]"), _num(v[1], f"{path}[1]"))


def _color(v, path: str) -> ColorSpec:
    if isinstance(v, list):
        return ColorSpec(ColorKind.SOLID, _rgb(v, path))
    d = _obj(v, path, ("stops", "angle"), ())
    stops = d["stops"]
    if not isinstance(stops, list) or len(stops) != 2:
        raise SchemaError(f"{path}.stops: expected two stops")
    s0, s1 = _rgb(stops[0], f"{path}.stops[0]"), _rgb(stops[1], f"{path}.stops[1]")
    return ColorSpec(ColorKind.LINEAR_GRADIENT, s0, (s0, s1), _num(d["angle"], f"{path}.angle"))


def _enum(cls, v, path: str):
    try:
        return cls(v)
    except ValueError:
        raise SchemaError(f"{path}: unknown value {v!r}") from None


def _instance(d, p: str) -> TextInstance:
    d = _obj(d, p, ("geometry", "semantic", "appearance", "relational"), ())

    gp = f"{p}.geometry"
    g = _obj(d["geometry"], gp, ("x", "y", "w", "h"), ("theta", "bending"))
    bending = Bending()
    if "bending" in g:
        b = _obj(g["bending"], f"{gp}.bending", ("p",), ("tau",))
        pts = b["p"]
        if not isinstance(pts, list) or len(pts) != 4:
            raise SchemaError(f"{gp}.bending.p: expected four control points")
        pts = [_point(pt, f"{gp}.bending.p[{i}]") for i, pt in enumerate(pts)]
        bending = Bending(*pts, tau=_int(b.get("tau", 0), f"{gp}.bending.tau"))
    geometry = Geometry(
        x=_num(g["x"], f"{gp}.x"), y=_num(g["y"], f"{gp}.y"),
        w=_num(g["w"], f"{gp}.w"), h=_num(g["h"], f"{gp}.h"),
        theta=_num(g.get("theta", 0.0), f"{gp}.theta"), bending=bending,
    )

    sp = f"{p}.semantic"
    s = _obj(d["semantic"], sp, ("text",), ("direction",))
    if not isinstance(s["text"], str):
        raise SchemaError(f"{sp}.text: expected a string")
    semantic = Semantic(s["text"], _enum(Direction, s.get("direction", "ltr"), f"{sp}.direction"))

    ap = f"{p}.appearance"
    a = _obj(d["appearance"], ap, ("font", "size", "fill"),
             ("stroke_width", "stroke_color", "shadow", "line_height", "char_spacing",
              "italic", "bold", "underline"))
    if not isinstance(a["font"], str):
        raise SchemaError(f"{ap}.font: expected a string")
    shadow = None
    if "shadow" in a:
        sh = _obj(a["shadow"], f"{ap}.shadow", ("color", "angle", "distance", "blur"), ())
        shadow = ShadowSpec(
            color=_rgb(sh["color"], f"{ap}.shadow.color"),
            offset_angle=_num(sh["angle"], f"{ap}.shadow.angle"),
            offset_distance=_num(sh["distance"], f"{ap}.shadow.distance"),
            blur_radius=_num(sh["blur"], f"{ap}.shadow.blur"),
        )
    appearance = Appearance(
        font_id=a["font"],
        font_size=_num(a["size"], f"{ap}.size"),
        fill=_color(a["fill"], f"{ap}.fill"),
        stroke_width=_num(a.get("stroke_width", 0.0), f"{ap}.stroke_width"),
        stroke_color=_color(a.get("stroke_color", [0, 0, 0]), f"{ap}.stroke_color"),
        shadow=shadow,
        line_height=_num(a.get("line_height", 1.2), f"{ap}.line_height"),
        char_spacing=_num(a.get("char_spacing", 0.0), f"{ap}.char_spacing"),
        italic=_bool(a.get("italic", False), f"{ap}.italic"),
        bold=_bool(a.get("bold", False), f"{ap}.bold"),
        underline=_bool(a.get("underline", False), f"{ap}.underline"),
    )

    rp = f"{p}.relational"
    r = _obj(d["relational"], rp, ("z",), ("align",))
    relational = Relational(_enum(Alignment, r.get("align", "left"), f"{rp}.align"),
                            _int(r["z"], f"{rp}.z"))
    return TextInstance(geometry, semantic, appearance, relational)


def protocol_from_dict(d: Any) -> TextProtocol:
    """Build a protocol from already-decoded JSON data and validate it."""
    d = _obj(d, "$", ("canvas", "instances"), ())
    canvas = d["canvas"]
    if not isinstance(canvas, list) or len(canvas) != 2:
        raise SchemaError("canvas: expected [W, H]")
    w, h = _int(canvas[0], "canvas[0]"), _int(canvas[1], "canvas[1]")
    if not isinstance(d["instances"], list):
        raise SchemaError("instances: expected a list")
    insts = tuple(_instance(x, f"instances[{i}]") for i, x in enumerate(d["instances"]))
    p = TextProtocol(w, h, insts)
    violations = validate(p)
    if violations:
        raise RangeError(violations)
    return p


def parse_protocol(data: bytes | str) -> TextProtocol:
    """Parse protocol JSON (bytes are decoded as UTF-8).

    Raises:
        EncodingError: not UTF-8 or not JSON.
        SchemaError: structural problems (missing/unknown keys, wrong types, bad enum values).
        RangeError: a value breaks a type invariant, e.g. ``theta`` outside [0, 2*pi).
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            data = bytes(data).decode("utf-8")
        except UnicodeDecodeError as e:
            raise EncodingError(f"not valid UTF-8: {e}") from None
    try:
        obj = json.loads(data, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise EncodingError(f"not valid JSON: {e}") from None
    return protocol_from_dict(obj)


# ---------------------------------------------------------------------------
# serialization


def _color_json(c: ColorSpec):
    if c.kind is ColorKind.SOLID:
        return list(c.solid)
    return {"stops": [list(c.stops[0]), list(c.stops[1])], "angle": float(c.angle)}


def instance_to_dict(inst: TextInstance) -> dict:
    g, s, a, r = inst.geometry, inst.semantic, inst.appearance, inst.relational
    b = g.bending
    appearance = {
        "font": a.font_id,
        "size": float(a.font_size),
        "fill": _color_json(a.fill),
        "stroke_width": float(a.stroke_width),
        "stroke_color": _color_json(a.stroke_color),
    }
    if a.shadow is not None:
        appearance["shadow"] = {
            "color": list(a.shadow.color),
            "angle": float(a.shadow.offset_angle),
            "distance": float(a.shadow.offset_distance),
            "blur": float(a.shadow.blur_radius),
        }
    appearance.update({
        "line_height": float(a.line_height),
        "char_spacing": float(a.char_spacing),
        "italic": a.italic,
        "bold": a.bold,
        "underline": a.underline,
    })
    return {
        "geometry": {
            "x": float(g.x), "y": float(g.y), "w": float(g.w), "h": float(g.h),
            "theta": float(g.theta),
            "bending": {"p": [[float(x), float(y)] for x, y in b.points], "tau": b.tau},
        },
        "semantic": {"text": s.text, "direction": s.direction.value},
        "appearance": appearance,
        "relational": {"align": r.alignment.value, "z": r.z_order},
    }


def protocol_to_dict(p: TextProtocol) -> dict:
    return {"canvas": [p.canvas_width, p.canvas_height],
            "instances": [instance_to_dict(i) for i in p.instances]}


def serialize_protocol(p: TextProtocol) -> bytes:
    """Canonical UTF-8 JSON for ``p``.

    Key order is fixed, floats use Python's shortest round-trip repr, and an
    absent shadow is omitted.
    """
    violations = validate(p)
    if violations:
        raise InvalidProtocol(violations)
    return json.dumps(protocol_to_dict(p), ensure_ascii=False, separators=(",", ":"),
                      allow_nan=False).encode("utf-8")

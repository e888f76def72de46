"""Cubic Bezier evaluation and arc-length parameterization."""

from __future__ import annotations

import math

import numpy as np

from layerparse.protocol import Bending

ARC_SEGMENTS = 256


class DegenerateCurve(ValueError):
    pass


def _ctrl(b: Bending) -> np.ndarray:
    return np.array(b.points, dtype=np.float64)


def bezier_point(b: Bending, t: float) -> tuple[float, float]:
    """Bernstein-form evaluation of the cubic at ``t`` in [0, 1]."""
    p0, p1, p2, p3 = b.points
    s = 1.0 - t
    c0, c1, c2, c3 = s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t
    return (c0 * p0[0] + c1 * p1[0] + c2 * p2[0] + c3 * p3[0],
            c0 * p0[1] + c1 * p1[1] + c2 * p2[1] + c3 * p3[1])


def bezier_points(b: Bending, t: np.ndarray) -> np.ndarray:
    """Vectorized evaluation; returns shape ``t.shape + (2,)``."""
    p = _ctrl(b)
    t = np.asarray(t, dtype=np.float64)[..., None]
    s = 1.0 - t
    return s**3 * p[0] + 3.0 * s * s * t * p[1] + 3.0 * s * t * t * p[2] + t**3 * p[3]


def bezier_derivative(b: Bending, t: float) -> tuple[float, float]:
    p0, p1, p2, p3 = b.points
    s = 1.0 - t
    c0, c1, c2 = 3.0 * s * s, 6.0 * s * t, 3.0 * t * t
    return (c0 * (p1[0] - p0[0]) + c1 * (p2[0] - p1[0]) + c2 * (p3[0] - p2[0]),
            c0 * (p1[1] - p0[1]) + c1 * (p2[1] - p1[1]) + c2 * (p3[1] - p2[1]))


def tangent_angle(b: Bending, t: float) -> float:
    """Direction of travel at ``t``, counter-clockwise on screen (y down)."""
    dx, dy = bezier_derivative(b, t)
    if dx == 0.0 and dy == 0.0:
        # Coincident control points at an end: fall back to the nearest distinct chord.
        p = _ctrl(b)
        order = (1, 2, 3) if t < 0.5 else (2, 1, 0)
        ref = p[0] if t < 0.5 else p[3]
        for k in order:
            d = (p[k] - ref) if t < 0.5 else (ref - p[k])
            if d[0] != 0.0 or d[1] != 0.0:
                dx, dy = float(d[0]), float(d[1])
                break
    return math.atan2(-dy, dx)


class ArcLengthTable:
    """Cumulative chord lengths over a uniform subdivision of the parameter."""

    def __init__(self, b: Bending, segments: int = ARC_SEGMENTS):
        self.bending = b
        self.t = np.linspace(0.0, 1.0, segments + 1)
        pts = bezier_points(b, self.t)
        seg = np.hypot(*np.diff(pts, axis=0).T)
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.cum[-1])
        if not self.length > 0.0:
            raise DegenerateCurve("curve has zero length")

    def t_at(self, s: float) -> float:
        """Curve parameter at fraction ``s`` of the total length (clamped to [0, 1])."""
        target = min(max(s, 0.0), 1.0) * self.length
        i = int(np.searchsorted(self.cum, target, side="right")) - 1
        i = min(max(i, 0), len(self.cum) - 2)
        span = self.cum[i + 1] - self.cum[i]
        frac = 0.0 if span == 0.0 else (target - self.cum[i]) / span
        return float(self.t[i] + frac * (self.t[i + 1] - self.t[i]))

    def at(self, s: float) -> tuple[tuple[float, float], float]:
        t = self.t_at(s)
        return bezier_point(self.bending, t), tangent_angle(self.bending, t)


def arc_length_param(b: Bending, s: float) -> tuple[tuple[float, float], float]:
    """Point and tangent angle at arc-length fraction ``s`` along a bending curve."""
    if b.tau != 1:
        raise ValueError("arc_length_param needs a curved bending (tau = 1)")
    return ArcLengthTable(b).at(s)

"""Planar primitives: orientation, angle arithmetic, projections.

Angles are radians. Directions are canonicalized to [0, 2*pi) and arcs
are counterclockwise, so all arc arithmetic is modular. Orientation and
collinearity use the absolute tolerance EPS_GEOM, which at the walk's
natural scale (unit steps, coordinates far below 1e6) sits well under
any probability-relevant length.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from .errors import DegenerateLine

TWO_PI = 2.0 * math.pi

# Absolute collinearity/orientation tolerance on cross products.
EPS_GEOM = 1e-12

Point = tuple[float, float]


def canon_angle(theta: float) -> float:
    """Map an angle to the canonical range [0, 2*pi)."""
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    return 0.0 if t == TWO_PI else t


def angle_of(dx: float, dy: float) -> float:
    """Canonical direction of the vector (dx, dy)."""
    return canon_angle(math.atan2(dy, dx))


class Arc(NamedTuple):
    """Counterclockwise circular arc from ``start``, of ``length`` <= 2*pi."""

    start: float
    length: float

    def contains(self, theta: float) -> bool:
        """Whether a direction lies on the closed arc."""
        return (theta - self.start) % TWO_PI <= self.length

    @property
    def end(self) -> float:
        return canon_angle(self.start + self.length)


FULL_CIRCLE = Arc(0.0, TWO_PI)


def cross(a: Point, b: Point, c: Point) -> float:
    """Twice the signed area of triangle (a, b, c); >0 means counterclockwise."""
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def orient(a: Point, b: Point, c: Point) -> int:
    """Sign of the signed area of (a, b, c); 0 when collinear within EPS_GEOM."""
    s = cross(a, b, c)
    if s > EPS_GEOM:
        return 1
    if s < -EPS_GEOM:
        return -1
    return 0


def angle_between(u: float, v: float) -> float:
    """Unsigned angle in [0, pi] between two directions."""
    d = abs(u - v) % TWO_PI
    return TWO_PI - d if d > math.pi else d


def project_onto_line(p: Point, a: Point, b: Point) -> Point:
    """Foot of the perpendicular from p onto the line through a and b.

    Raises DegenerateLine when ``a`` and ``b`` are closer than EPS_GEOM.
    """
    abx = b[0] - a[0]
    aby = b[1] - a[1]
    n2 = abx * abx + aby * aby
    if n2 <= EPS_GEOM * EPS_GEOM:
        raise DegenerateLine(f"line anchors {a} and {b} coincide")
    t = ((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / n2
    return (a[0] + t * abx, a[1] + t * aby)


def dist(a: Point, b: Point) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])

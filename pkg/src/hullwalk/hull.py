"""Incremental planar convex hull with cone, legality and diameter queries.

The hull is a flat counterclockwise vertex list (no three consecutive
vertices collinear beyond EPS_GEOM) plus a degeneracy rank. Insertion
finds the chain of edges visible from the new point and splices; vertex
counts for hull-avoiding walks stay in the tens, so everything is a
linear scan. Each vertex carries the step index at which it was walked
("birth"), which is the stable identity used by the observables layer.
"""

from __future__ import annotations

import math

from .errors import InteriorInsertion, NotOnBoundary
from .geometry import EPS_GEOM, TWO_PI, Arc, FULL_CIRCLE, Point, angle_of

RANK_EMPTY = 0
RANK_POINT = 1
RANK_SEGMENT = 2
RANK_FULL = 3

_RANK_NAMES = {RANK_EMPTY: "empty", RANK_POINT: "point",
               RANK_SEGMENT: "segment", RANK_FULL: "full"}


class ConvexHull:
    """Convex hull of the points inserted so far.

    ``add`` mutates in place and returns the vertex index of the new
    point, or -1 when the point landed on the boundary and was absorbed.
    """

    __slots__ = ("xs", "ys", "births", "rank")

    def __init__(self):
        self.xs: list[float] = []
        self.ys: list[float] = []
        self.births: list[int] = []
        self.rank = RANK_EMPTY

    @classmethod
    def from_points(cls, points, births=None) -> "ConvexHull":
        """Hull of an arbitrary point sequence (interior points ignored)."""
        hull = cls()
        for i, (x, y) in enumerate(points):
            hull.add(x, y, births[i] if births is not None else i,
                     strict=False)
        return hull

    def __len__(self) -> int:
        return len(self.xs)

    @property
    def rank_name(self) -> str:
        return _RANK_NAMES[self.rank]

    def points(self) -> list[Point]:
        return list(zip(self.xs, self.ys))

    def copy(self) -> "ConvexHull":
        h = ConvexHull()
        h.xs = self.xs[:]
        h.ys = self.ys[:]
        h.births = self.births[:]
        h.rank = self.rank
        return h

    # -- insertion ---------------------------------------------------------

    def add(self, px: float, py: float, birth: int = -1, hint: int = -1,
            strict: bool = True) -> int:
        """Insert a point; ``hint`` is a vertex index near the new point.

        The hint lets the walker's insertions find the visible edge run
        in O(changed) instead of scanning every edge. With ``strict``,
        a strictly interior point raises InteriorInsertion (the walk
        never produces one, so it flags an engine bug); non-strict
        insertion ignores interior points.
        """
        xs, ys, births = self.xs, self.ys, self.births
        rank = self.rank

        if rank == RANK_EMPTY:
            xs.append(px)
            ys.append(py)
            births.append(birth)
            self.rank = RANK_POINT
            return 0

        if rank == RANK_POINT:
            if math.hypot(px - xs[0], py - ys[0]) <= EPS_GEOM:
                return 0
            xs.append(px)
            ys.append(py)
            births.append(birth)
            self.rank = RANK_SEGMENT
            return 1

        if rank == RANK_SEGMENT:
            return self._add_to_segment(px, py, birth)

        return self._add_to_polygon(px, py, birth, hint, strict)

    def _add_to_segment(self, px, py, birth) -> int:
        xs, ys, births = self.xs, self.ys, self.births
        dx = xs[1] - xs[0]
        dy = ys[1] - ys[0]
        side = dx * (py - ys[0]) - dy * (px - xs[0])
        if abs(side) > EPS_GEOM:
            # Breaks collinearity: upgrade to a proper triangle, CCW.
            if side > 0.0:
                xs.append(px)
                ys.append(py)
                births.append(birth)
                idx = 2
            else:
                xs.insert(1, px)
                ys.insert(1, py)
                births.insert(1, birth)
                idx = 1
            self.rank = RANK_FULL
            return idx
        # Collinear: extend whichever end the point lies beyond.
        t = ((px - xs[0]) * dx + (py - ys[0]) * dy) / (dx * dx + dy * dy)
        if t < 0.0:
            if math.hypot(px - xs[0], py - ys[0]) <= EPS_GEOM:
                return 0
            xs[0], ys[0], births[0] = px, py, birth
            return 0
        if t > 1.0:
            if math.hypot(px - xs[1], py - ys[1]) <= EPS_GEOM:
                return 1
            xs[1], ys[1], births[1] = px, py, birth
            return 1
        if math.hypot(px - xs[0], py - ys[0]) <= EPS_GEOM:
            return 0
        if math.hypot(px - xs[1], py - ys[1]) <= EPS_GEOM:
            return 1
        return -1  # interior of the segment: absorbed, interior still empty

    def _edge_visible(self, i: int, px: float, py: float) -> bool:
        xs, ys = self.xs, self.ys
        j = i + 1
        if j == len(xs):
            j = 0
        return ((xs[j] - xs[i]) * (py - ys[i])
                - (ys[j] - ys[i]) * (px - xs[i])) < -EPS_GEOM

    def _add_to_polygon(self, px, py, birth, hint, strict=True) -> int:
        xs, ys, births = self.xs, self.ys, self.births
        h = len(xs)

        # Locate one visible edge: try the hinted vertex's two edges first,
        # else scan. If none is visible the point is inside or on the hull.
        seed_edge = -1
        if 0 <= hint < h:
            if self._edge_visible(hint, px, py):
                seed_edge = hint
            elif self._edge_visible(hint - 1 if hint else h - 1, px, py):
                seed_edge = hint - 1 if hint else h - 1
        if seed_edge < 0:
            for i in range(h):
                if self._edge_visible(i, px, py):
                    seed_edge = i
                    break
        if seed_edge < 0:
            return self._absorbed_or_interior(px, py, strict)

        # The visible edges form one contiguous cyclic run [lo, hi].
        lo = seed_edge
        hi = seed_edge
        while hi - lo < h - 1 and self._edge_visible((hi + 1) % h, px, py):
            hi += 1
        while hi - lo < h - 1 and self._edge_visible((lo - 1) % h, px, py):
            lo -= 1
        if hi - lo >= h - 1:
            raise InteriorInsertion("all edges visible; hull corrupt")

        # Remove vertices lo+1 .. hi (strictly inside the new hull) and
        # splice the new vertex in their place.
        lo %= h
        hi %= h
        if lo <= hi:
            del xs[lo + 1:hi + 1], ys[lo + 1:hi + 1], births[lo + 1:hi + 1]
            ip = lo + 1
            xs.insert(ip, px)
            ys.insert(ip, py)
            births.insert(ip, birth)
        else:
            del xs[lo + 1:], ys[lo + 1:], births[lo + 1:]
            del xs[:hi + 1], ys[:hi + 1], births[:hi + 1]
            xs.append(px)
            ys.append(py)
            births.append(birth)
            ip = len(xs) - 1
        return self._drop_collinear_junctions(ip)

    def _absorbed_or_interior(self, px, py, strict) -> int:
        xs, ys = self.xs, self.ys
        h = len(xs)
        inside = True
        for i in range(h):
            j = i + 1
            if j == h:
                j = 0
            c = (xs[j] - xs[i]) * (py - ys[i]) - (ys[j] - ys[i]) * (px - xs[i])
            if c <= EPS_GEOM:
                inside = False
                break
        if inside:
            if strict:
                raise InteriorInsertion(
                    f"point ({px}, {py}) strictly inside the hull")
            return -1
        for i in range(h):
            if math.hypot(px - xs[i], py - ys[i]) <= EPS_GEOM:
                return i
        return -1

    def _drop_collinear_junctions(self, ip: int) -> int:
        # The new vertex's neighbours may have become collinear with it.
        xs, ys, births = self.xs, self.ys, self.births
        for side in (-1, 1):
            if len(xs) <= 3:
                break
            h = len(xs)
            mid = (ip + side) % h
            a = (mid - 1) % h
            b = (mid + 1) % h
            c = ((xs[mid] - xs[a]) * (ys[b] - ys[a])
                 - (ys[mid] - ys[a]) * (xs[b] - xs[a]))
            if abs(c) <= EPS_GEOM:
                del xs[mid], ys[mid], births[mid]
                if mid < ip:
                    ip -= 1
        return ip

    # -- queries -----------------------------------------------------------

    def max_dist2(self, px: float, py: float) -> tuple[float, int]:
        """Largest squared distance from (px, py) to a vertex, and its index.

        Ties go to the earliest-born vertex, which keeps measure-zero
        configurations deterministic.
        """
        xs, ys, births = self.xs, self.ys, self.births
        best = -1.0
        arg = -1
        for i in range(len(xs)):
            dx = px - xs[i]
            dy = py - ys[i]
            t = dx * dx + dy * dy
            if t > best:
                best = t
                arg = i
            elif t == best and births[i] < births[arg]:
                arg = i
        return best, arg

    def cone_at_vertex(self, i: int) -> tuple[float, float, float]:
        """(dir_prev, dir_next, interior_angle) at vertex ``i`` of a full hull."""
        xs, ys = self.xs, self.ys
        h = len(xs)
        x, y = xs[i], ys[i]
        p = i - 1
        q = i + 1 if i + 1 < h else 0
        theta_prev = math.atan2(ys[p] - y, xs[p] - x)
        theta_next = math.atan2(ys[q] - y, xs[q] - x)
        interior = (theta_prev - theta_next) % TWO_PI
        return theta_prev % TWO_PI, theta_next % TWO_PI, interior

    def interior_cone(self, v: Point) -> tuple[float, float, float]:
        """Boundary directions and interior angle at a boundary point.

        Degenerate hulls have empty interior, so the cone is empty
        (angle 0). A point in the relative interior of an edge sees a
        half-plane (angle pi). Raises NotOnBoundary otherwise.
        """
        x, y = v
        if self.rank == RANK_EMPTY:
            raise NotOnBoundary("empty hull")
        if self.rank == RANK_POINT:
            if math.hypot(x - self.xs[0], y - self.ys[0]) > EPS_GEOM:
                raise NotOnBoundary(f"{v} is not the hull point")
            return 0.0, 0.0, 0.0
        if self.rank == RANK_SEGMENT:
            i = self._locate_on_edges(x, y, closed=False)
            if i is None:
                raise NotOnBoundary(f"{v} not on the segment hull")
            # Empty interior: no forbidden cone at all.
            d = angle_of(self.xs[1] - self.xs[0], self.ys[1] - self.ys[0])
            return d, d, 0.0
        idx = self._vertex_index(x, y)
        if idx is not None:
            return self.cone_at_vertex(idx)
        i = self._locate_on_edges(x, y, closed=True)
        if i is None:
            raise NotOnBoundary(f"{v} not on the hull boundary")
        j = i + 1 if i + 1 < len(self.xs) else 0
        t = angle_of(self.xs[j] - self.xs[i], self.ys[j] - self.ys[i])
        return canon_prev(t), t, math.pi

    def allowed_arc_at(self, v: Point) -> Arc:
        """Closed complement of the open interior cone at a boundary point."""
        if self.rank < RANK_FULL:
            return FULL_CIRCLE
        dir_prev, _dir_next, interior = self.interior_cone(v)
        return Arc(dir_prev, TWO_PI - interior)

    def _vertex_index(self, x, y):
        xs, ys = self.xs, self.ys
        for i in range(len(xs)):
            if abs(x - xs[i]) <= EPS_GEOM and abs(y - ys[i]) <= EPS_GEOM:
                return i
        return None

    def _locate_on_edges(self, x, y, closed):
        xs, ys = self.xs, self.ys
        h = len(xs)
        last = h if closed else h - 1
        for i in range(last):
            j = i + 1 if i + 1 < h else 0
            ex = xs[j] - xs[i]
            ey = ys[j] - ys[i]
            elen = math.hypot(ex, ey)
            if elen <= EPS_GEOM:
                continue
            c = ex * (y - ys[i]) - ey * (x - xs[i])
            if abs(c) > EPS_GEOM * max(1.0, elen):
                continue
            t = (ex * (x - xs[i]) + ey * (y - ys[i])) / (elen * elen)
            if -EPS_GEOM <= t <= 1.0 + EPS_GEOM:
                return i
        return None

    def segment_hits_interior(self, a: Point, b: Point) -> bool:
        """Whether the closed segment a-b meets the open hull interior.

        Clips the segment against every edge half-plane, asking for a
        parameter interval that stays a positive distance (1e-12, scaled
        by edge length) inside all of them.
        """
        if self.rank < RANK_FULL:
            return False
        xs, ys = self.xs, self.ys
        h = len(xs)
        lo = 0.0
        hi = 1.0
        ax, ay = a
        bx, by = b
        for i in range(h):
            j = i + 1 if i + 1 < h else 0
            ex = xs[j] - xs[i]
            ey = ys[j] - ys[i]
            # Tolerance scales with edge length (L1 bound, cheap) so the
            # cross-product threshold means "distance above ~1e-12".
            scale = (ex if ex > 0.0 else -ex) + (ey if ey > 0.0 else -ey)
            eps = EPS_GEOM if scale < 1.0 else EPS_GEOM * scale
            d0 = ex * (ay - ys[i]) - ey * (ax - xs[i])
            d1 = ex * (by - ys[i]) - ey * (bx - xs[i])
            if d0 <= eps and d1 <= eps:
                return False
            if d0 > eps and d1 > eps:
                continue
            t = (eps - d0) / (d1 - d0)
            if d1 > d0:
                if t > lo:
                    lo = t
            else:
                if t < hi:
                    hi = t
            if lo >= hi:
                return False
        return lo < hi


def canon_prev(theta_next: float) -> float:
    """Direction opposite to ``theta_next`` (edge traversed backwards)."""
    return (theta_next + math.pi) % TWO_PI


class DiameterState:
    """Running hull diameter and the realizing vertex pair.

    ``far_birth``/``new_birth`` are the walk step indices of the two
    extremal points; ``far_birth`` is the older one, which at a ladder
    time is the far endpoint of the diametral segment.
    """

    __slots__ = ("d", "d2", "far_birth", "new_birth", "far", "new")

    def __init__(self):
        self.d = 0.0
        self.d2 = 0.0
        self.far_birth = -1
        self.new_birth = -1
        self.far: Point = (0.0, 0.0)
        self.new: Point = (0.0, 0.0)

    def update(self, hull_before: ConvexHull, p: Point, birth: int) -> bool:
        """Fold a new point in; returns True when the diameter increased.

        Any new diametral pair must involve the new point, so a scan of
        the previous hull's vertices is exhaustive.
        """
        best2, arg = hull_before.max_dist2(p[0], p[1])
        if best2 > self.d2:
            self.d2 = best2
            self.d = math.sqrt(best2)
            self.far = (hull_before.xs[arg], hull_before.ys[arg])
            self.far_birth = hull_before.births[arg]
            self.new = p
            self.new_birth = birth
            return True
        return False

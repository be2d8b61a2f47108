"""Points, anchor sets, centroid and the planar convex envelope."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import DegenerateGeometry, ValidationError

# Twice-signed-area below this counts as collinear (m^2).
COLLINEAR_TOL = 1e-9


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValidationError(f"Point3.{name} must be finite, got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "Point3":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def distance_to(self, other: "Point3") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


def cross2(o, a, b) -> float:
    """Twice the signed area of triangle (o, a, b); positive for a left turn."""
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def are_collinear(points_xy: np.ndarray, tol: float = COLLINEAR_TOL) -> bool:
    pts = np.asarray(points_xy, dtype=float)[:, :2]
    if len(pts) < 3:
        return True
    a = pts[0]
    far = int(np.argmax(np.sum((pts - a) ** 2, axis=1)))
    b = pts[far]
    if np.allclose(a, b):
        return True
    return all(abs(cross2(a, b, p)) <= tol for p in pts)


def are_coplanar(points: np.ndarray, tol: float = COLLINEAR_TOL) -> bool:
    pts = np.asarray(points, dtype=float)
    if len(pts) < 4:
        return True
    a = pts[0]
    b = pts[int(np.argmax(np.sum((pts - a) ** 2, axis=1)))]
    areas = np.linalg.norm(np.cross(b - a, pts - a), axis=1)
    c = pts[int(np.argmax(areas))]
    n = np.cross(b - a, c - a)
    if np.linalg.norm(n) <= tol:
        return True
    return bool(np.all(np.abs((pts - a) @ n) <= tol))


@dataclass(frozen=True)
class AnchorArray:
    """Ordered, uniquely identified anchors.

    At least three anchors whose xy-projections are not collinear.
    """

    anchors: tuple[tuple[Hashable, Point3], ...]

    def __post_init__(self):
        anchors = tuple((aid, p if isinstance(p, Point3) else Point3.from_array(p))
                        for aid, p in self.anchors)
        object.__setattr__(self, "anchors", anchors)
        if len(anchors) < 3:
            raise ValidationError(f"AnchorArray needs >= 3 anchors, got {len(anchors)}")
        ids = [aid for aid, _ in anchors]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"anchor ids must be unique, got {ids}")
        if are_collinear(self.positions):
            raise DegenerateGeometry("anchor xy-projections are collinear")

    @classmethod
    def from_positions(cls, positions: Iterable[Sequence[float]], ids: Iterable[Hashable] | None = None):
        positions = [Point3.from_array(p) for p in positions]
        if ids is None:
            ids = [f"a{i}" for i in range(len(positions))]
        return cls(tuple(zip(ids, positions)))

    def __len__(self) -> int:
        return len(self.anchors)

    @property
    def ids(self) -> list:
        return [aid for aid, _ in self.anchors]

    @cached_property
    def positions(self) -> np.ndarray:
        pos = np.array([p.as_array() for _, p in self.anchors]).reshape(-1, 3)
        pos.flags.writeable = False
        return pos

    def position(self, anchor_id) -> Point3:
        for aid, p in self.anchors:
            if aid == anchor_id:
                return p
        raise KeyError(anchor_id)

    def index(self, anchor_id) -> int:
        return self.ids.index(anchor_id)

    @cached_property
    def _envelope(self) -> "ConvexEnvelope2D":
        return convex_hull_2d(self.positions[:, :2])

    def envelope(self) -> "ConvexEnvelope2D":
        return self._envelope


@dataclass(frozen=True)
class ConvexEnvelope2D:
    """Strictly convex polygon with counter-clockwise vertices."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        n = len(verts)
        if n < 3:
            raise DegenerateGeometry("envelope needs at least 3 vertices")
        for i in range(n):
            if cross2(verts[i], verts[(i + 1) % n], verts[(i + 2) % n]) <= COLLINEAR_TOL:
                raise ValidationError("envelope vertices must be strictly convex and counter-clockwise")

    def signed_area(self) -> float:
        v = np.array(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def contains_xy(self, p) -> bool:
        return contains_xy(self, p)


def centroid(anchors: AnchorArray) -> Point3:
    return Point3.from_array(anchors.positions.mean(axis=0))


def _middle(a, b, c) -> int:
    """Index (0, 1, 2) of the point lying between the other two of a near-collinear triple."""
    # the middle point is the one opposite the longest of the three pairs
    d = (math.dist(b, c), math.dist(a, c), math.dist(a, b))
    return d.index(max(d))


def convex_hull_2d(points) -> ConvexEnvelope2D:
    """Counter-clockwise hull by Andrew's monotone chain.

    Collinear boundary points are dropped so the result is strictly convex.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise DegenerateGeometry("convex hull needs at least 3 points")
    if are_collinear(pts):
        raise DegenerateGeometry("all points are collinear")
    uniq = sorted({(float(p[0]), float(p[1])) for p in pts})

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2:
                c = cross2(chain[-2], chain[-1], p)
                if c > COLLINEAR_TOL:
                    break
                if c < -COLLINEAR_TOL:
                    chain.pop()
                    continue
                # collinear within tolerance: keep the two extreme points
                mid = _middle(chain[-2], chain[-1], p)
                if mid == 2:
                    p = None
                    break
                del chain[-2 + mid]
            if p is not None:
                chain.append(p)
        return chain

    lower = half(uniq)
    upper = half(reversed(uniq))
    hull = lower[:-1] + upper[:-1]
    # the chains are only checked internally; near-duplicate points can leave
    # a flat corner where they join
    changed = True
    while changed and len(hull) > 3:
        changed = False
        n = len(hull)
        for i in range(n):
            a, b, c = hull[i - 1], hull[i], hull[(i + 1) % n]
            cr = cross2(a, b, c)
            if cr <= COLLINEAR_TOL:
                drop = i if cr < -COLLINEAR_TOL else (i - 1 + _middle(a, b, c)) % n
                del hull[drop]
                changed = True
                break
    if len(hull) < 3 or cross2(hull[0], hull[1], hull[2]) <= COLLINEAR_TOL:
        raise DegenerateGeometry("points are collinear within tolerance")
    return ConvexEnvelope2D(tuple(hull))


def contains_xy(envelope: ConvexEnvelope2D, p) -> bool:
    """True if p's xy-projection is inside or on the envelope boundary."""
    if isinstance(p, Point3):
        q = (p.x, p.y)
    else:
        q = (float(p[0]), float(p[1]))
    v = envelope.vertices
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        # same tolerance the hull uses to drop near-collinear vertices
        if cross2(a, b, q) < -COLLINEAR_TOL:
            return False
    return True

"""Polygon clipping against the view boundary.

Near-plane clipping happens in camera space before projection (perspective
division is undefined at or behind the camera); clipping against the image
rectangle happens after projection, in pixel space.  Depth is carried
per-vertex and linearly interpolated in screen space at edge crossings;
compositing needs ordering, not exact mid-face depth, so no
perspective-correction is applied.

Concave map polygons are ear-clipped into triangles before rasterization, so
the Sutherland-Hodgman clipper only ever sees convex inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class ClipRect:
    u_min: float
    u_max: float
    v_min: float
    v_max: float

    def __post_init__(self):
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise ValueError("clip rectangle must have positive extent")


@dataclass(frozen=True)
class Polygon2D:
    """A screen-space polygon with per-vertex (u, v, depth)."""

    vertices: np.ndarray  # (n, 3), possibly n == 0

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        if v.shape[0] not in (0,) and v.shape[0] < 3:
            raise ValueError("a non-empty polygon needs at least 3 vertices")
        if v.size and not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def empty(self) -> bool:
        return self.vertices.shape[0] == 0

    def area(self) -> float:
        """Unsigned shoelace area over (u, v)."""
        if self.empty:
            return 0.0
        u = self.vertices[:, 0]
        v = self.vertices[:, 1]
        return 0.5 * abs(float(np.dot(u, np.roll(v, -1)) - np.dot(v, np.roll(u, -1))))


def clip_polygon(poly: Polygon2D, rect: ClipRect) -> Polygon2D:
    """Sutherland-Hodgman clip of a convex polygon against a rectangle.

    Four successive half-plane clips (left, right, bottom, top); per-vertex
    depth is linearly interpolated at crossings.  Polygons fully inside are
    returned unchanged; full rejection yields the empty polygon.
    """
    if poly.empty:
        return poly
    out = _kernels.clip_polygon_rect(
        poly.vertices, rect.u_min, rect.u_max, rect.v_min, rect.v_max
    )
    return Polygon2D(out)


def clip_segment_near(p0, p1, z_near: float):
    """Clip a camera-space segment to z >= z_near.

    Returns the surviving (p0, p1) pair with the crossing point found by
    linear interpolation, or None when both endpoints are behind the plane.
    """
    if z_near <= 0:
        raise ValueError("z_near must be positive")
    a = np.asarray(p0, dtype=np.float64)
    b = np.asarray(p1, dtype=np.float64)
    out0 = np.empty(3)
    out1 = np.empty(3)
    if not _kernels.clip_segment_near(a, b, z_near, out0, out1):
        return None
    return out0, out1


def triangulate_polygon(vertices: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear-clip a simple polygon (indices into its xy footprint).

    Works on the x, y columns of an (n, >=2) vertex array; returns index
    triples forming a triangulation.  Falls back to a fan when no valid ear
    can be found (degenerate rings).
    """
    pts = np.asarray(vertices, dtype=np.float64)[:, :2]
    n = pts.shape[0]
    if n < 3:
        return []
    if n == 3:
        return [(0, 1, 2)]

    signed2 = float(
        np.dot(pts[:, 0], np.roll(pts[:, 1], -1)) - np.dot(pts[:, 1], np.roll(pts[:, 0], -1))
    )
    ccw = 1.0 if signed2 >= 0 else -1.0

    def cross(i, j, k):
        return ccw * (
            (pts[j, 0] - pts[i, 0]) * (pts[k, 1] - pts[i, 1])
            - (pts[j, 1] - pts[i, 1]) * (pts[k, 0] - pts[i, 0])
        )

    def point_in_tri(p, i, j, k):
        d1 = ccw * ((pts[j, 0] - pts[i, 0]) * (p[1] - pts[i, 1]) - (pts[j, 1] - pts[i, 1]) * (p[0] - pts[i, 0]))
        d2 = ccw * ((pts[k, 0] - pts[j, 0]) * (p[1] - pts[j, 1]) - (pts[k, 1] - pts[j, 1]) * (p[0] - pts[j, 0]))
        d3 = ccw * ((pts[i, 0] - pts[k, 0]) * (p[1] - pts[k, 1]) - (pts[i, 1] - pts[k, 1]) * (p[0] - pts[k, 0]))
        return d1 > 0 and d2 > 0 and d3 > 0

    ring = list(range(n))
    tris: list[tuple[int, int, int]] = []
    guard = 0
    while len(ring) > 3 and guard < 2 * n * n:
        guard += 1
        found = False
        for idx in range(len(ring)):
            i = ring[idx - 1]
            j = ring[idx]
            k = ring[(idx + 1) % len(ring)]
            if cross(i, j, k) <= 0:
                continue  # reflex or collinear corner, not an ear
            if any(point_in_tri(pts[r], i, j, k) for r in ring if r not in (i, j, k)):
                continue
            tris.append((i, j, k))
            ring.pop(idx)
            found = True
            break
        if not found:
            break
    if len(ring) == 3:
        tris.append((ring[0], ring[1], ring[2]))
    elif len(ring) > 3:
        # Degenerate remainder: fan it so every input area is covered.
        tris.extend((ring[0], ring[m], ring[m + 1]) for m in range(1, len(ring) - 1))
    return tris

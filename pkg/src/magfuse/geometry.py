"""Small exact-ish polygon helpers: shoelace area, rectangle clipping, simplicity.

Polygons are sequences of (x, y) vertices in level-0 pixel coordinates,
implicitly closed. All routines are pure functions.
"""

from __future__ import annotations

import math
from typing import Sequence

Point = tuple[float, float]


def polygon_area(vertices: Sequence[Point]) -> float:
    """Absolute area of a simple polygon via the shoelace formula."""
    n = len(vertices)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return abs(acc) / 2.0


def polygon_diameter(vertices: Sequence[Point]) -> float:
    """Maximum pairwise vertex distance."""
    best = 0.0
    n = len(vertices)
    for i in range(n):
        xi, yi = vertices[i]
        for j in range(i + 1, n):
            d = math.hypot(vertices[j][0] - xi, vertices[j][1] - yi)
            if d > best:
                best = d
    return best


def clip_polygon_to_rect(
    vertices: Sequence[Point], x0: float, y0: float, x1: float, y1: float
) -> list[Point]:
    """Clip a polygon against an axis-aligned rectangle (Sutherland-Hodgman).

    Returns the clipped vertex list, empty if the polygon misses the
    rectangle. Vertices on an edge count as inside, so zero-area touching
    contacts survive clipping but contribute no area.
    """
    # Each entry: (inside predicate, intersection along the clip line).
    def clip_edge(pts: list[Point], inside, intersect) -> list[Point]:
        out: list[Point] = []
        if not pts:
            return out
        prev = pts[-1]
        prev_in = inside(prev)
        for cur in pts:
            cur_in = inside(cur)
            if cur_in:
                if not prev_in:
                    out.append(intersect(prev, cur))
                out.append(cur)
            elif prev_in:
                out.append(intersect(prev, cur))
            prev, prev_in = cur, cur_in
        return out

    def cross_x(bound: float):
        def f(p: Point, q: Point) -> Point:
            t = (bound - p[0]) / (q[0] - p[0])
            return (bound, p[1] + t * (q[1] - p[1]))

        return f

    def cross_y(bound: float):
        def f(p: Point, q: Point) -> Point:
            t = (bound - p[1]) / (q[1] - p[1])
            return (p[0] + t * (q[0] - p[0]), bound)

        return f

    pts = list(vertices)
    pts = clip_edge(pts, lambda p: p[0] >= x0, cross_x(x0))
    pts = clip_edge(pts, lambda p: p[0] <= x1, cross_x(x1))
    pts = clip_edge(pts, lambda p: p[1] >= y0, cross_y(y0))
    pts = clip_edge(pts, lambda p: p[1] <= y1, cross_y(y1))
    return pts


def clipped_area(
    vertices: Sequence[Point], x0: float, y0: float, x1: float, y1: float
) -> float:
    """Area of polygon ∩ rectangle."""
    return polygon_area(clip_polygon_to_rect(vertices, x0, y0, x1, y1))


def _segments_properly_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    def orient(a: Point, b: Point, c: Point) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def polygon_is_simple(vertices: Sequence[Point]) -> bool:
    """True when no two non-adjacent edges properly cross (O(n^2) check)."""
    n = len(vertices)
    if n < 3:
        return False
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # shared vertex, skip adjacency
            if _segments_properly_intersect(*edges[i], *edges[j]):
                return False
    return True

"""Planar geometry on convex polygons.

Polygons are ``(n, 2)`` float arrays with counterclockwise vertices. A point on
the boundary is treated as free; only the open interior counts as collision.
"""

from __future__ import annotations

import numpy as np

EPS = 1e-9


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_convex_ccw(poly: np.ndarray) -> bool:
    if len(poly) < 3 or signed_area(poly) <= 0:
        return False
    e = np.roll(poly, -1, axis=0) - poly
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    return bool(np.all(cross > -EPS))


def halfplanes(poly: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outward unit normals ``N`` and offsets ``c`` so that interior is ``N @ p < c``."""
    e = np.roll(poly, -1, axis=0) - poly
    n = np.stack([e[:, 1], -e[:, 0]], axis=1)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return n, np.einsum("ij,ij->i", n, poly)


def points_inside(pts: np.ndarray, normals: np.ndarray, offsets: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """Strict interior test, with the polygon grown by ``margin`` along every face."""
    pts = np.atleast_2d(pts)
    return np.all(pts @ normals.T < offsets + margin - EPS, axis=1)


def segments_cross(a: np.ndarray, b: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Which segments ``a[i] -> b[i]`` pass through the open interior of the polygon.

    Liang-Barsky clipping against each supporting half-plane. Grazing a vertex
    or sliding along an edge does not count.
    """
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d = b - a
    num = offsets[None, :] - a @ normals.T - EPS  # (m, k)
    den = d @ normals.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / den
    lo = np.where(den < -1e-15, t, -np.inf).max(axis=1)
    hi = np.where(den > 1e-15, t, np.inf).min(axis=1)
    parallel_out = np.any((np.abs(den) <= 1e-15) & (num <= 0.0), axis=1)
    lo = np.maximum(lo, 0.0)
    hi = np.minimum(hi, 1.0)
    return (hi - lo > 1e-12) & ~parallel_out


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting distance from points ``p`` to segments ``a -> b``."""
    d = b - a
    dd = np.sum(d * d, axis=-1)
    t = np.where(dd > 0, np.sum((p - a) * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    c = a + t[..., None] * d
    return np.linalg.norm(p - c, axis=-1)


def polygon_signed_distance(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Signed distance from points to a convex polygon (negative inside)."""
    pts = np.atleast_2d(pts)
    normals, offsets = halfplanes(poly)
    a = poly
    b = np.roll(poly, -1, axis=0)
    dist = point_segment_distance(pts[:, None, :], a[None], b[None]).min(axis=1)
    inside = np.all(pts @ normals.T < offsets, axis=1)
    return np.where(inside, -dist, dist)


def segment_polygon_distance(a: np.ndarray, b: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance between segments and a convex polygon; zero when they cross."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    normals, offsets = halfplanes(poly)
    va = poly
    vb = np.roll(poly, -1, axis=0)
    d1 = point_segment_distance(a[:, None, :], va[None], vb[None]).min(axis=1)
    d2 = point_segment_distance(b[:, None, :], va[None], vb[None]).min(axis=1)
    d3 = point_segment_distance(poly[None, :, :], a[:, None, :], b[:, None, :]).min(axis=1)
    d = np.minimum(np.minimum(d1, d2), d3)
    hit = segments_cross(a, b, normals, offsets) | points_inside(a, normals, offsets) | points_inside(b, normals, offsets)
    return np.where(hit, 0.0, d)


def push_out(pts: np.ndarray, poly: np.ndarray, clearance: float = 0.0) -> np.ndarray:
    """Move points that are inside (or closer than ``clearance``) out to ``clearance``.

    Interior points exit through the nearest face; exterior points move away
    from their nearest boundary point.
    """
    pts = np.array(pts, dtype=float, copy=True)
    normals, offsets = halfplanes(poly)
    s = pts @ normals.T - offsets  # >0 outside that face
    inside = np.all(s < 0, axis=1)
    if np.any(inside):
        k = np.argmax(s[inside], axis=1)
        depth = -s[inside, k]
        pts[inside] += (depth + clearance)[:, None] * normals[k]
    if clearance > 0:
        out = ~inside & (np.max(s, axis=1) < clearance)
        if np.any(out):
            va = poly
            vb = np.roll(poly, -1, axis=0)
            p = pts[out]
            d = vb - va
            dd = np.sum(d * d, axis=1)
            t = np.clip(np.einsum("mkj,kj->mk", p[:, None, :] - va[None], d) / dd, 0.0, 1.0)
            c = va[None] + t[..., None] * d[None]
            dist = np.linalg.norm(p[:, None, :] - c, axis=2)
            j = np.argmin(dist, axis=1)
            near = c[np.arange(len(p)), j]
            dj = dist[np.arange(len(p)), j]
            move = dj < clearance
            direction = (p - near) / np.maximum(dj, 1e-15)[:, None]
            # a point on the boundary leaves along its most-violated face normal
            flat = dj < 1e-12
            direction[flat] = normals[np.argmax(s[out][flat], axis=1)]
            p[move] = near[move] + clearance * direction[move]
            pts[out] = p
    return pts


def point_in_triangle(pts: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Strict interior test against triangle ``abc`` of either orientation."""

    def cross(o, p, q):
        return (p[0] - o[0]) * (q[..., 1] - o[1]) - (p[1] - o[1]) * (q[..., 0] - o[0])

    area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if abs(area) < 1e-14:
        return np.zeros(len(pts), dtype=bool)
    sgn = 1.0 if area > 0 else -1.0
    d1 = sgn * cross(a, b, pts)
    d2 = sgn * cross(b, c, pts)
    d3 = sgn * cross(c, a, pts)
    return (d1 > EPS) & (d2 > EPS) & (d3 > EPS)


def polyline_length(pts: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def resample_polyline(pts: np.ndarray, n: int) -> np.ndarray:
    """Resample to ``n`` points equally spaced by arc length (endpoints kept exactly)."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        out = np.repeat(pts[:1], n, axis=0)
        out[-1] = pts[-1]
        return out
    target = np.linspace(0.0, s[-1], n)
    out = np.stack([np.interp(target, s, pts[:, 0]), np.interp(target, s, pts[:, 1])], axis=1)
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    # in-range angles pass through untouched (the mod above can round them)
    w = np.where((a > -np.pi) & (a <= np.pi), a, w)
    return w if np.ndim(w) else float(w)


def convex_hull(pts: np.ndarray) -> np.ndarray:
    """Counterclockwise hull vertices (monotone chain); collinear points are dropped.

    Unlike Qhull this accepts degenerate input such as three collinear points.
    """
    p = np.unique(np.asarray(pts, dtype=float).reshape(-1, 2), axis=0)
    if len(p) < 3:
        return p

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for q in p:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    upper: list = []
    for q in p[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    return np.array(lower[:-1] + upper[:-1])

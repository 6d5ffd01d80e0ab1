"""Compiled inner loops for the rope: constraint projection and obstacle pushout.

Obstacles are passed as stacked half-planes: ``normals[k] . p < offsets[k]`` on
every face ``k`` in ``starts[j]:starts[j+1]`` means ``p`` is inside polygon ``j``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _push_point(px, py, rx, ry, normals, offsets, starts, clearance, mu):
    """Push ``(px, py)`` out of every obstacle it penetrates. Coulomb friction
    then removes up to ``mu`` times the push depth of the tangential motion
    since the reference position ``(rx, ry)``."""
    for j in range(len(starts) - 1):
        best = np.inf
        kb = -1
        inside = True
        for k in range(starts[j], starts[j + 1]):
            pen = offsets[k] + clearance - (normals[k, 0] * px + normals[k, 1] * py)
            if pen <= 0.0:
                inside = False
                break
            if pen < best:
                best = pen
                kb = k
        if inside:
            nx, ny = normals[kb, 0], normals[kb, 1]
            px += best * nx
            py += best * ny
            if mu > 0.0:
                mx, my = px - rx, py - ry
                mn = mx * nx + my * ny
                tx, ty = mx - mn * nx, my - mn * ny
                tl = np.sqrt(tx * tx + ty * ty)
                if tl > 0.0:
                    f = min(1.0, mu * best / tl)
                    px -= f * tx
                    py -= f * ty
    return px, py


@njit(cache=True)
def relax(rope, before, rest, iters, normals, offsets, starts, clearance, bounds, mu):
    """In-place projection of segment lengths toward ``rest`` with both ends
    pinned, each sweep followed by pushing interior points out of obstacles.
    Sweep direction alternates so neither end is favoured.

    ``before`` holds the positions ahead of the current predictor step; it is
    the friction reference for the first sweep, later sweeps use the positions
    at the start of the sweep.
    """
    n = rope.shape[0]
    ref = before.copy()
    for it in range(iters):
        if it > 0:
            ref[:, :] = rope
        if it % 2 == 0:
            lo, hi, step = 0, n - 1, 1
        else:
            lo, hi, step = n - 2, -1, -1
        i = lo
        while i != hi:
            dx = rope[i + 1, 0] - rope[i, 0]
            dy = rope[i + 1, 1] - rope[i, 1]
            d = np.sqrt(dx * dx + dy * dy)
            if d > 1e-12:
                c = (d - rest) / d
                if i == 0:
                    if n > 2:
                        rope[1, 0] -= c * dx
                        rope[1, 1] -= c * dy
                elif i + 1 == n - 1:
                    rope[i, 0] += c * dx
                    rope[i, 1] += c * dy
                else:
                    rope[i, 0] += 0.5 * c * dx
                    rope[i, 1] += 0.5 * c * dy
                    rope[i + 1, 0] -= 0.5 * c * dx
                    rope[i + 1, 1] -= 0.5 * c * dy
            i += step
        for i in range(1, n - 1):
            px, py = _push_point(rope[i, 0], rope[i, 1], ref[i, 0], ref[i, 1], normals, offsets, starts, clearance, mu)
            rope[i, 0] = min(max(px, bounds[0]), bounds[2])
            rope[i, 1] = min(max(py, bounds[1]), bounds[3])


@njit(cache=True)
def polyline_length(pts):
    total = 0.0
    for i in range(pts.shape[0] - 1):
        dx = pts[i + 1, 0] - pts[i, 0]
        dy = pts[i + 1, 1] - pts[i, 1]
        total += np.sqrt(dx * dx + dy * dy)
    return total


@njit(cache=True)
def min_segment_distance(pts, poly):
    """Distance from each point to the nearest segment of a polyline."""
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        px, py = pts[i, 0], pts[i, 1]
        best = np.inf
        for j in range(poly.shape[0] - 1):
            ax, ay = poly[j, 0], poly[j, 1]
            dx, dy = poly[j + 1, 0] - ax, poly[j + 1, 1] - ay
            dd = dx * dx + dy * dy
            t = 0.0
            if dd > 0.0:
                t = min(1.0, max(0.0, ((px - ax) * dx + (py - ay) * dy) / dd))
            ex, ey = px - ax - t * dx, py - ay - t * dy
            d = ex * ex + ey * ey
            if d < best:
                best = d
        out[i] = np.sqrt(best)
    return out


@njit(cache=True)
def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@njit(cache=True)
def _hull(pts):
    """Counterclockwise monotone-chain hull of a small point set, collinear points dropped."""
    n = pts.shape[0]
    order = np.arange(n)
    for i in range(1, n):  # insertion sort, lexicographic on (x, y)
        j = i
        while j > 0:
            a, b = order[j - 1], order[j]
            if pts[a, 0] > pts[b, 0] or (pts[a, 0] == pts[b, 0] and pts[a, 1] > pts[b, 1]):
                order[j - 1], order[j] = b, a
                j -= 1
            else:
                break
    uniq = np.empty((n, 2))
    m = 0
    for i in range(n):
        k = order[i]
        if m == 0 or pts[k, 0] != uniq[m - 1, 0] or pts[k, 1] != uniq[m - 1, 1]:
            uniq[m, 0] = pts[k, 0]
            uniq[m, 1] = pts[k, 1]
            m += 1
    if m < 3:
        return uniq[:m].copy()
    out = np.empty((2 * m, 2))
    h = 0
    for i in range(m):
        while h >= 2 and _cross(out[h - 2, 0], out[h - 2, 1], out[h - 1, 0], out[h - 1, 1], uniq[i, 0], uniq[i, 1]) <= 0:
            h -= 1
        out[h] = uniq[i]
        h += 1
    lower = h
    for i in range(m - 2, -1, -1):
        while h > lower and _cross(out[h - 2, 0], out[h - 2, 1], out[h - 1, 0], out[h - 1, 1], uniq[i, 0], uniq[i, 1]) <= 0:
            h -= 1
        out[h] = uniq[i]
        h += 1
    return out[: h - 1].copy()


@njit(cache=True)
def _nearest(hull, x, y):
    best, ib = np.inf, 0
    for k in range(hull.shape[0]):
        d = (hull[k, 0] - x) ** 2 + (hull[k, 1] - y) ** 2
        if d < best:
            best, ib = d, k
    return ib


@njit(cache=True)
def pull_taut(path, vertices, max_passes):
    """Shortest path homotopic to a collision-free polyline, endpoints fixed.

    A corner whose closed triangle with its neighbours holds no obstacle vertex
    is deleted; otherwise it is replaced by the hull chain of the vertices inside.
    """
    xs = [path[i, 0] for i in range(path.shape[0])]
    ys = [path[i, 1] for i in range(path.shape[0])]
    nv = vertices.shape[0]
    tol = 1e-12
    for _ in range(max_passes):
        changed = False
        i = 1
        while i < len(xs) - 1:
            ax, ay, px, py, cx, cy = xs[i - 1], ys[i - 1], xs[i], ys[i], xs[i + 1], ys[i + 1]
            area2 = (px - ax) * (cy - ay) - (py - ay) * (cx - ax)
            scale = max(1e-12, np.sqrt((px - ax) ** 2 + (py - ay) ** 2) * np.sqrt((cx - px) ** 2 + (cy - py) ** 2))
            inside = np.empty((nv, 2))
            ni = 0
            if abs(area2) > 1e-12 * scale:
                for k in range(nv):
                    vx, vy = vertices[k, 0], vertices[k, 1]
                    s1 = (px - ax) * (vy - ay) - (py - ay) * (vx - ax)
                    s2 = (cx - px) * (vy - py) - (cy - py) * (vx - px)
                    s3 = (ax - cx) * (vy - cy) - (ay - cy) * (vx - cx)
                    # closed triangle: a vertex on a path edge still blocks the sweep
                    if area2 < 0:
                        s1, s2, s3 = -s1, -s2, -s3
                    if s1 < -tol or s2 < -tol or s3 < -tol:
                        continue
                    if (vx == ax and vy == ay) or (vx == cx and vy == cy):
                        continue
                    inside[ni, 0] = vx
                    inside[ni, 1] = vy
                    ni += 1
            if ni == 0:
                xs.pop(i)
                ys.pop(i)
                changed = True
                i = max(1, i - 1)
                continue
            pts = np.empty((ni + 2, 2))
            pts[0, 0], pts[0, 1], pts[1, 0], pts[1, 1] = ax, ay, cx, cy
            pts[2:] = inside[:ni]
            hull = _hull(pts)
            n = hull.shape[0]
            ia = _nearest(hull, ax, ay)
            ic = _nearest(hull, cx, cy)
            nf = (ic - ia) % n - 1
            nb = (ia - ic) % n - 1
            if nf < 0:
                nf = 0
            if nb < 0:
                nb = 0
            chain = np.empty((max(nf, nb), 2))
            if nf >= nb:
                for k in range(nf):
                    chain[k] = hull[(ia + 1 + k) % n]
            else:
                for k in range(nb):
                    chain[k] = hull[(ia - 1 - k) % n]
            nc = chain.shape[0]
            if nc == 1 and chain[0, 0] == px and chain[0, 1] == py:
                i += 1
                continue
            xs.pop(i)
            ys.pop(i)
            for k in range(nc):
                xs.insert(i + k, chain[k, 0])
                ys.insert(i + k, chain[k, 1])
            changed = True
            i += nc
        if not changed:
            break
    out = np.empty((len(xs), 2))
    for k in range(len(xs)):
        out[k, 0] = xs[k]
        out[k, 1] = ys[k]
    return out

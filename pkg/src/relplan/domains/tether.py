"""Two point grippers holding a planar rope.

True state: gripper pair ``[x1, y1, x2, y2]`` plus ``P`` rope points. Rope
motion is quasistatic position-based dynamics: each 1 cm gripper substep
drags the chain along, then segment lengths are projected back toward rest
and points are pushed out of obstacles. The rollout stops when a gripper
would touch an obstacle or the rope stretches past ``lam`` times its rest
length.

Reduced state: the grippers and the virtual elastic band, the shortest path
homotopic to the rope between the grippers. The band is stored as its exact
taut polyline (its corners sit on obstacle vertices) and resampled to ``K``
points whenever it is compared or rasterized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .. import geometry as geo
from ..core import (
    Command,
    Domain,
    Environment,
    GoalSpec,
    Overstretch,
    ReducedState,
    Transition,
    TrueState,
    scene_path,
)
from . import _rope_kernels as kern


@dataclass(frozen=True)
class TetherParams:
    n_points: int = 40
    rest_length: float = 0.87
    lam: float = 1.15
    relax_iters: int = 50
    clearance: float = 5e-3
    friction: float = 1.0  # Coulomb coefficient for rope-obstacle contact
    gripper_contact: float = 1e-3
    substep: float = 0.01
    max_step: float = 0.1  # per gripper, meters
    band_points: int = 32
    alpha: float = 0.5
    gripper_tol: float = 0.05
    foh_tol: float = 0.01  # penetration depth ignored by the first-order homotopy check
    plan_clearance: float = 0.02
    grid: int = 32
    window_min: float = 2.0
    window_scale: float = 1.25
    # shape of sampled gripper pairs: separation as a fraction of rest length, tilt in radians
    sep_range: tuple[float, float] = (0.45, 0.9)
    max_tilt: float = 0.5
    start_sep: float = 0.7
    success_tol: float = 0.1

    def __post_init__(self):
        if not self.lam > 1:
            raise ValueError("lam must exceed 1")
        if self.n_points < 3:
            raise ValueError("rope needs at least 3 points")


# -- obstacle packing for the compiled kernels ------------------------------------------


class _Packed:
    def __init__(self, env: Environment):
        planes = [geo.halfplanes(p) for p in env.obstacles]
        if planes:
            self.normals = np.ascontiguousarray(np.concatenate([n for n, _ in planes]))
            self.offsets = np.ascontiguousarray(np.concatenate([c for _, c in planes]))
        else:
            self.normals = np.zeros((0, 2))
            self.offsets = np.zeros(0)
        self.starts = np.cumsum([0] + [len(p) for p in env.obstacles]).astype(np.int64)
        self.bounds = np.array(env.bounds)


_PACK_CACHE: dict[int, tuple[Environment, _Packed]] = {}


def _packed(env: Environment) -> _Packed:
    hit = _PACK_CACHE.get(id(env))
    if hit is None or hit[0] is not env:
        if len(_PACK_CACHE) > 64:
            _PACK_CACHE.clear()
        hit = (env, _Packed(env))
        _PACK_CACHE[id(env)] = hit
    return hit[1]


# -- rope ------------------------------------------------------------------------------


def sag_rope(a, b, rest_length: float, n_points: int) -> np.ndarray:
    """Rope at rest hanging as a circular arc to the right of ``a -> b``.

    Arc angle is chosen so that the chord polyline has exactly the rest segment
    length; with ``a`` left of ``b`` the rope sags downward.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = float(np.linalg.norm(b - a))
    m = n_points - 1
    if s >= rest_length * (1 - 1e-9):
        return a + np.linspace(0.0, 1.0, n_points)[:, None] * (b - a)
    d = (b - a) / s
    nrm = np.array([d[1], -d[0]])
    ratio = s / rest_length
    theta = brentq(lambda t: math.sin(t) / (m * math.sin(t / m)) - ratio, 1e-9, math.pi * (1 - 1e-9))
    r = s / (2 * math.sin(theta))
    center = 0.5 * (a + b) - nrm * r * math.cos(theta)
    phi = np.linspace(-theta, theta, n_points)
    pts = center + r * (np.sin(phi)[:, None] * d + np.cos(phi)[:, None] * nrm)
    pts[0], pts[-1] = a, b
    return pts


def stretch_ratio(rope: np.ndarray, rest_length: float) -> float:
    return float(kern.polyline_length(np.ascontiguousarray(rope))) / rest_length


def _rope_substep(rope, g_from, g_to, w, p: TetherParams, pk: _Packed):
    dg = g_to - g_from
    out = rope + (1.0 - w)[:, None] * dg[0] + w[:, None] * dg[1]
    out[0], out[-1] = g_to[0], g_to[1]
    out = np.ascontiguousarray(out)
    kern.relax(
        out,
        np.ascontiguousarray(rope, dtype=float),
        p.rest_length / (p.n_points - 1),
        p.relax_iters,
        pk.normals,
        pk.offsets,
        pk.starts,
        p.clearance,
        pk.bounds,
        p.friction,
    )
    return out


def rope_rollout(grippers, rope, u, env: Environment, p: TetherParams = TetherParams()):
    """Move the grippers by ``u`` (shape ``(2, 2)``) in 1 cm substeps.

    Returns ``(grippers, rope, stopped)`` where ``stopped`` names the safety
    stop that fired (``"contact"``, ``"stretch"``) or is ``None``.
    """
    pk = _packed(env)
    g0 = np.asarray(grippers, dtype=float).reshape(2, 2)
    u = np.asarray(u, dtype=float).reshape(2, 2)
    r = np.array(rope, dtype=float)
    w = np.linspace(0.0, 1.0, len(r))
    n = max(1, int(math.ceil(float(np.max(np.linalg.norm(u, axis=1))) / p.substep - 1e-9)))
    g = g0.copy()
    for s in range(1, n + 1):
        g_next = g0 + u * (s / n)
        stop = None
        if not np.all(env.segments_free(g, g_next, p.gripper_contact)):
            stop = "contact"

            def ok(f):
                return bool(np.all(env.segments_free(g, g + f * (g_next - g), p.gripper_contact)))

        else:
            r_next = _rope_substep(r, g, g_next, w, p, pk)
            if stretch_ratio(r_next, p.rest_length) > p.lam:
                stop = "stretch"

                def ok(f):
                    return stretch_ratio(_rope_substep(r, g, g + f * (g_next - g), w, p, pk), p.rest_length) <= p.lam

        if stop is None:
            g, r = g_next, r_next
            continue
        lo, hi = 0.0, 1.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
                if stop == "stretch":
                    rr = _rope_substep(r, g, g + lo * (g_next - g), w, p, pk)
                    if stretch_ratio(rr, p.rest_length) >= p.lam - 0.01 and hi - lo < 0.05:
                        break
            else:
                hi = mid
            if stop == "contact" and (hi - lo) * float(np.max(np.linalg.norm(g_next - g, axis=1))) < 1e-5:
                break
        g_stop = g + lo * (g_next - g)
        r = _rope_substep(r, g, g_stop, w, p, pk) if lo > 0 else r
        return g_stop, r, stop
    return g, r, None


# -- band --------------------------------------------------------------------------------


def pull_taut(path, vertices: np.ndarray, max_passes: int = 1000) -> np.ndarray:
    """Shortest path homotopic to a collision-free polyline, endpoints fixed.

    A corner whose triangle with its neighbours holds no obstacle vertex is
    deleted; otherwise it is replaced by the hull chain of the vertices inside.
    Each edit strictly shortens the path.
    """
    path = np.ascontiguousarray(np.asarray(path, dtype=float).reshape(-1, 2))
    vertices = np.ascontiguousarray(np.asarray(vertices, dtype=float).reshape(-1, 2))
    return kern.pull_taut(path, vertices, max_passes)


def band_from_rope(rope, env: Environment) -> np.ndarray:
    """The reduction: taut polyline homotopic to the rope."""
    return pull_taut(rope, env.vertices)


def band_step(band, u, env: Environment, p: TetherParams = TetherParams()) -> np.ndarray:
    """Band after moving its endpoints by ``u`` along straight lines.

    The endpoints drag the band, so the result is the taut path homotopic to
    ``new_a -> old_a -> band -> old_b -> new_b``. Raises :class:`Overstretch`
    when it is longer than ``lam`` times the rope rest length.
    """
    band = np.asarray(band, dtype=float)
    u = np.asarray(u, dtype=float).reshape(2, 2)
    path = np.vstack([band[0] + u[0], band, band[-1] + u[1]])
    out = pull_taut(path, env.vertices)
    out[0], out[-1] = band[0] + u[0], band[-1] + u[1]
    if geo.polyline_length(out) > p.lam * p.rest_length:
        raise Overstretch(f"band length {geo.polyline_length(out):.4f} exceeds {p.lam} x {p.rest_length}")
    return out


def resample_band(band, k: int = 32) -> np.ndarray:
    return geo.resample_polyline(np.asarray(band, dtype=float), k)


def band_distance(v1, v2) -> float:
    """Sum of pointwise distances between two equally sampled bands."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if v1.shape != v2.shape:
        raise ValueError(f"band shapes differ: {v1.shape} vs {v2.shape}")
    return float(np.sum(np.linalg.norm(v1 - v2, axis=1)))


def foh_check(v1, v2, env: Environment, tol: float = 0.0) -> bool:
    """True when every segment between corresponding band points is collision-free.

    ``tol`` shrinks each obstacle, ignoring penetrations shallower than it.
    """
    a = np.asarray(v1, dtype=float)
    b = np.asarray(v2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"band shapes differ: {a.shape} vs {b.shape}")
    for poly in env.obstacles:
        n, c = geo.halfplanes(poly)
        c = c - tol
        if np.any(geo.segments_cross(a, b, n, c) | geo.points_inside(a, n, c) | geo.points_inside(b, n, c)):
            return False
    return True


# -- features ----------------------------------------------------------------------------


def raster_features(env: Environment, band_a, band_b, p: TetherParams = TetherParams()) -> np.ndarray:
    """Three ``grid x grid`` binary channels (obstacles, band, next band) over a
    square window around both bands, flattened channel-major, rows along y."""
    pts = np.vstack([band_a, band_b])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    side = max(p.window_min, p.window_scale * float(np.linalg.norm(hi - lo)))
    cell = side / p.grid
    ticks = (np.arange(p.grid) + 0.5) * cell - 0.5 * side
    xs = center[0] + ticks
    ys = center[1] + ticks
    cx, cy = np.meshgrid(xs, ys)  # row index follows y
    centers = np.stack([cx.ravel(), cy.ravel()], axis=1)
    occ = ~env.in_bounds(centers) | env.inside_obstacle(centers)
    chans = [occ]
    for band in (band_a, band_b):
        band = np.asarray(band, dtype=float)
        if len(band) < 2:
            d = np.linalg.norm(centers - band[0], axis=1)
        else:
            d = kern.min_segment_distance(centers, band)
        chans.append(d <= 0.5 * cell)
    return np.concatenate(chans).astype(float)


# -- scenes ------------------------------------------------------------------------------


def load_query_regions(name_or_path) -> dict:
    """Optional ``tether_queries`` block of a scene file: boxes for the gripper-pair
    midpoint at the start and at the goal, for evaluation and for training."""
    from pathlib import Path

    path = Path(name_or_path)
    if not path.exists():
        path = scene_path(str(name_or_path))
    with open(path) as f:
        return json.load(f).get("tether_queries", {})


# -- domain ------------------------------------------------------------------------------


class TetherDomain(Domain):
    name = "tether"
    config_is_state = False

    def __init__(self, params: TetherParams = TetherParams(), regions: dict | None = None):
        self.p = params
        self.regions = regions or {}
        self.max_step = np.full(4, params.max_step)

    @property
    def max_separation(self) -> float:
        return self.p.lam * self.p.rest_length

    # reduction / dynamics ----------------------------------------------------------
    def reduce(self, x, env):
        self.check(x)
        band = band_from_rope(x.rope, env)
        band[0], band[-1] = x.q[:2], x.q[2:]
        return ReducedState(self.name, x.q, band)

    def reduced_step(self, b, u, env):
        self.check(b, u)
        band = band_step(b.band, u.u, env, self.p)
        return ReducedState(self.name, b.q + u.u, band)

    def rollout(self, x, u, env, seed=0):
        self.check(x, u)
        g, r, _ = rope_rollout(x.q, x.rope, u.u, env, self.p)
        return TrueState(self.name, g.ravel(), r)

    def close(self, b1, b2, env):
        self.check(b1, b2)
        if np.any(np.linalg.norm((b1.q - b2.q).reshape(2, 2), axis=1) >= self.p.gripper_tol):
            return False
        v1 = resample_band(b1.band, self.p.band_points)
        v2 = resample_band(b2.band, self.p.band_points)
        return band_distance(v1, v2) < self.p.alpha and foh_check(v1, v2, env, self.p.foh_tol)

    # planner support -----------------------------------------------------------------
    def distance(self, q1, q2):
        return float(np.linalg.norm(np.asarray(q2) - np.asarray(q1)))

    def distances(self, qs, q):
        return np.linalg.norm(np.asarray(qs) - q, axis=1)

    def n_substeps(self, q1, q2):
        d = (np.asarray(q2, dtype=float) - np.asarray(q1, dtype=float)).reshape(2, 2)
        return max(1, int(math.ceil(float(np.max(np.linalg.norm(d, axis=1))) / self.p.max_step - 1e-12)))

    def pair(self, mid, sep: float, tilt: float) -> np.ndarray:
        d = 0.5 * sep * np.array([math.cos(tilt), math.sin(tilt)])
        return np.concatenate([mid - d, mid + d])

    def sample_config(self, rng, env):
        xmin, ymin, xmax, ymax = env.bounds
        mid = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
        sep = rng.uniform(*self.p.sep_range) * self.p.rest_length
        return self.pair(mid, sep, rng.uniform(-self.p.max_tilt, self.p.max_tilt))

    def config_free(self, q, env):
        g = np.asarray(q, dtype=float).reshape(2, 2)
        sep = float(np.linalg.norm(g[1] - g[0]))
        if not (1e-3 < sep <= self.max_separation):
            return False
        return bool(np.all(env.points_free(g, self.p.plan_clearance)))

    def motion_free(self, q1, q2, env):
        a = np.asarray(q1, dtype=float).reshape(2, 2)
        b = np.asarray(q2, dtype=float).reshape(2, 2)
        return bool(np.all(env.segments_free(a, b, self.p.plan_clearance)))

    def config_plausible(self, q, env):
        return self.config_free(q, env)

    def same_band(self, b1, b2):
        return b1.band.shape == b2.band.shape and bool(np.max(np.abs(b1.band - b2.band)) < 1e-9)

    def command_to(self, b, q_next):
        return Command(self.name, np.asarray(q_next, dtype=float) - b.q)

    def featurize(self, t: Transition, env, b_next=None):
        if b_next is None:
            b_next = self.reduced_step(t.b, t.u, env)
        return raster_features(env, t.b.band, b_next.band, self.p)

    # queries -------------------------------------------------------------------------
    def hanging_state(self, q, env=None) -> TrueState:
        """Gripper pair ``q`` with the rope at rest, sagging to the right of gripper 1 -> 2."""
        q = np.asarray(q, dtype=float)
        return TrueState(self.name, q, sag_rope(q[:2], q[2:], self.p.rest_length, self.p.n_points))

    def state_ok(self, x: TrueState, env) -> bool:
        return self.config_free(x.q, env) and bool(np.all(env.points_free(x.rope, self.p.clearance)))

    def _sample_in(self, rng, env, box, sep, tilt, swap=False):
        for _ in range(10000):
            mid = np.array([rng.uniform(box[0], box[2]), rng.uniform(box[1], box[3])])
            q = self.pair(mid, sep, tilt)
            if self.config_free(q, env) and self.state_ok(self.hanging_state(q), env):
                return q
        raise RuntimeError(f"no free gripper pair in region {box}")

    def _query(self, rng, env, key):
        reg = self.regions.get(key) or self.regions.get("eval") or {}
        full = list(env.bounds)
        start_box = reg.get("start", full)
        goal_box = reg.get("goal", full)
        if key == "train" and rng.random() < 0.5:
            start_box, goal_box = goal_box, start_box
        sep = self.p.start_sep * self.p.rest_length
        q0 = self._sample_in(rng, env, start_box, sep, 0.0)
        qg = self._sample_in(rng, env, goal_box, sep, 0.0)
        return self.hanging_state(q0, env), GoalSpec(qg[None], self.p.success_tol)

    def sample_query(self, rng, env):
        """Start pair with a hanging rope and a goal pair, both level, midpoints drawn
        from the scene's evaluation boxes (whole workspace if the scene has none)."""
        return self._query(rng, env, "eval")

    def sample_training_query(self, rng, env):
        return self._query(rng, env, "train")

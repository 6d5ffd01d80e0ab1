"""Domain-agnostic types and the interface every domain implements.

States and commands are immutable, domain-tagged wrappers around numpy arrays.
A domain bundles the reduction ``r``, the reduced dynamics ``g``, the rollout
``Gamma``, the ``Close`` predicate and whatever the planner needs to search the
reduced configuration space.
"""

from __future__ import annotations

import abc
import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry as geo


class PlanNotFound(RuntimeError):
    pass


class Overstretch(Exception):
    """Reduced dynamics predict the object overstretches; the edge is invalid."""


class DomainMismatch(ValueError):
    pass


class Label(enum.IntEnum):
    UNRELIABLE = 0
    RELIABLE = 1


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TrueState:
    """Full system state. ``q`` is the domain payload; ``rope`` only for the tether.

    car: ``[x, y, theta, v]``; arm: ``[q1, q2, q3]``; tether: gripper pair
    flattened to ``[x1, y1, x2, y2]``.
    """

    domain: str
    q: np.ndarray
    rope: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q))
        if self.rope is not None:
            object.__setattr__(self, "rope", _frozen(self.rope, (-1, 2)))


@dataclass(frozen=True, eq=False)
class ReducedState:
    """Reduced state ``b``. ``q`` is what the planner searches over; ``band`` is
    carried along for the tether and always pinned to the grippers."""

    domain: str
    q: np.ndarray
    band: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q))
        if self.band is not None:
            object.__setattr__(self, "band", _frozen(self.band, (-1, 2)))

    def same_as(self, other: "ReducedState") -> bool:
        if self.domain != other.domain or not np.array_equal(self.q, other.q):
            return False
        if self.band is None or other.band is None:
            return self.band is None and other.band is None
        return np.array_equal(self.band, other.band)


@dataclass(frozen=True, eq=False)
class Command:
    domain: str
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u))


@dataclass(frozen=True, eq=False)
class Transition:
    b: ReducedState
    u: Command
    env_id: str

    def __post_init__(self):
        if self.b.domain != self.u.domain:
            raise DomainMismatch(f"state is {self.b.domain!r} but command is {self.u.domain!r}")


@dataclass(frozen=True, eq=False)
class GoalSpec:
    """A finite set of target configurations and a distance tolerance."""

    targets: np.ndarray
    tolerance: float

    def __post_init__(self):
        t = np.atleast_2d(np.array(self.targets, dtype=float))
        t.setflags(write=False)
        object.__setattr__(self, "targets", t)


class Environment:
    """A planar scene of convex obstacles inside an axis-aligned workspace."""

    def __init__(self, id: str, bounds, obstacles=()):
        self.id = id
        self.bounds = tuple(float(v) for v in bounds)
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError(f"degenerate bounds {self.bounds}")
        self.obstacles = []
        for poly in obstacles:
            p = np.array(poly, dtype=float).reshape(-1, 2)
            if geo.signed_area(p) < 0:
                p = p[::-1].copy()
            if not geo.is_convex_ccw(p):
                raise ValueError(f"obstacle is not a non-degenerate convex polygon: {p.tolist()}")
            if np.any(p[:, 0] < xmin - 1e-12) or np.any(p[:, 0] > xmax + 1e-12) or np.any(
                p[:, 1] < ymin - 1e-12
            ) or np.any(p[:, 1] > ymax + 1e-12):
                raise ValueError("obstacle vertex outside workspace bounds")
            p.setflags(write=False)
            self.obstacles.append(p)
        self._planes = [geo.halfplanes(p) for p in self.obstacles]
        self._boxes = [(p.min(axis=0), p.max(axis=0)) for p in self.obstacles]
        self.vertices = (
            np.concatenate(self.obstacles) if self.obstacles else np.zeros((0, 2))
        )

    # -- queries ---------------------------------------------------------------
    def in_bounds(self, pts: np.ndarray, margin: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        xmin, ymin, xmax, ymax = self.bounds
        return (
            (pts[:, 0] >= xmin + margin)
            & (pts[:, 0] <= xmax - margin)
            & (pts[:, 1] >= ymin + margin)
            & (pts[:, 1] <= ymax - margin)
        )

    def inside_obstacle(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        hit = np.zeros(len(pts), dtype=bool)
        for n, c in self._planes:
            hit |= geo.points_inside(pts, n, c)
        return hit

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Signed distance to the nearest obstacle (``inf`` in an empty scene)."""
        pts = np.atleast_2d(pts)
        d = np.full(len(pts), np.inf)
        for poly in self.obstacles:
            d = np.minimum(d, geo.polygon_signed_distance(pts, poly))
        return d

    def _near(self, k: int, lo: np.ndarray, hi: np.ndarray, margin: float) -> np.ndarray:
        """Which boxes ``[lo, hi]`` come within ``margin`` of obstacle ``k``'s bounding box."""
        blo, bhi = self._boxes[k]
        return np.all((lo <= bhi + margin) & (hi >= blo - margin), axis=1)

    def points_free(self, pts: np.ndarray, clearance: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        ok = self.in_bounds(pts)
        if clearance > 0:
            for k, poly in enumerate(self.obstacles):
                near = self._near(k, pts, pts, clearance)
                if np.any(near):
                    ok[near] &= geo.polygon_signed_distance(pts[near], poly) >= clearance
            return ok
        return ok & ~self.inside_obstacle(pts)

    def segments_free(self, a: np.ndarray, b: np.ndarray, clearance: float = 0.0) -> np.ndarray:
        """Per-segment freedom; endpoints must be in bounds (bounds are convex)."""
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        ok = self.in_bounds(a) & self.in_bounds(b)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        for k, (poly, (n, c)) in enumerate(zip(self.obstacles, self._planes)):
            if clearance > 0:
                near = self._near(k, lo, hi, clearance)
                if np.any(near):
                    ok[near] &= geo.segment_polygon_distance(a[near], b[near], poly) >= clearance
            else:
                ok &= ~(
                    geo.segments_cross(a, b, n, c) | geo.points_inside(a, n, c) | geo.points_inside(b, n, c)
                )
        return ok

    def push_out(self, pts: np.ndarray, clearance: float = 0.0) -> np.ndarray:
        out = np.array(pts, dtype=float)
        for poly in self.obstacles:
            out = geo.push_out(out, poly, clearance)
        xmin, ymin, xmax, ymax = self.bounds
        out[:, 0] = np.clip(out[:, 0], xmin, xmax)
        out[:, 1] = np.clip(out[:, 1], ymin, ymax)
        return out

    # -- (de)serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "bounds": list(self.bounds),
            "obstacles": [p.tolist() for p in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        return cls(d["id"], d["bounds"], d.get("obstacles", []))

    def translated(self, d) -> "Environment":
        d = np.asarray(d, dtype=float)
        xmin, ymin, xmax, ymax = self.bounds
        return Environment(
            self.id,
            [xmin + d[0], ymin + d[1], xmax + d[0], ymax + d[1]],
            [p + d for p in self.obstacles],
        )


def load_environment(path) -> Environment:
    with open(path) as f:
        return Environment.from_dict(json.load(f))


def save_environment(env: Environment, path) -> None:
    Path(path).write_text(json.dumps(env.to_dict(), indent=1) + "\n")


def scene_path(name: str) -> Path:
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files("relplan") / "scenes" / name))


def load_scene(name_or_path) -> Environment:
    """Load a shipped scene by name, or any environment file by path."""
    p = Path(name_or_path)
    if p.exists():
        return load_environment(p)
    return load_environment(scene_path(str(name_or_path)))


class Domain(abc.ABC):
    """Contract a concrete system implements to plug into the pipeline."""

    name: str = ""
    #: per-component bound used to discretize planner motions
    max_step: np.ndarray
    #: whether the reduced state is fully determined by the planner configuration
    config_is_state: bool = True
    #: default cap on substeps per RRT extension
    extend_substeps: int = 5

    def check(self, *objs) -> None:
        for o in objs:
            if getattr(o, "domain", self.name) != self.name:
                raise DomainMismatch(f"{o.domain!r} object used with {self.name!r} domain")

    # reduction / dynamics / rollout -------------------------------------------
    @abc.abstractmethod
    def reduce(self, x: TrueState, env: Environment) -> ReducedState: ...

    @abc.abstractmethod
    def reduced_step(self, b: ReducedState, u: Command, env: Environment) -> ReducedState:
        """``g(b, u, E)``; may raise :class:`Overstretch`."""

    @abc.abstractmethod
    def rollout(self, x: TrueState, u: Command, env: Environment, seed: int = 0) -> TrueState: ...

    @abc.abstractmethod
    def close(self, b1: ReducedState, b2: ReducedState, env: Environment) -> bool: ...

    def goal_distance(self, b: ReducedState, goal: GoalSpec) -> float:
        return float(min(self.distance(b.q, t) for t in goal.targets))

    def goal_check(self, b: ReducedState, goal: GoalSpec) -> bool:
        self.check(b)
        return self.goal_distance(b, goal) <= goal.tolerance

    # planner support ------------------------------------------------------------
    @abc.abstractmethod
    def distance(self, q1: np.ndarray, q2: np.ndarray) -> float: ...

    def distances(self, qs: np.ndarray, q: np.ndarray) -> np.ndarray:
        return np.array([self.distance(a, q) for a in qs])

    def difference(self, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
        """Displacement that takes ``q1`` to ``q2``."""
        return np.asarray(q2, dtype=float) - np.asarray(q1, dtype=float)

    def interpolate(self, q1: np.ndarray, q2: np.ndarray, s: float) -> np.ndarray:
        return np.asarray(q1, dtype=float) + s * self.difference(q1, q2)

    def n_substeps(self, q1: np.ndarray, q2: np.ndarray) -> int:
        ratio = np.abs(self.difference(q1, q2)) / self.max_step
        return max(1, int(np.ceil(np.max(ratio) - 1e-12)))

    @abc.abstractmethod
    def sample_config(self, rng: np.random.Generator, env: Environment) -> np.ndarray: ...

    @abc.abstractmethod
    def config_free(self, q: np.ndarray, env: Environment) -> bool: ...

    @abc.abstractmethod
    def motion_free(self, q1: np.ndarray, q2: np.ndarray, env: Environment) -> bool: ...

    @abc.abstractmethod
    def command_to(self, b: ReducedState, q_next: np.ndarray) -> Command:
        """The reduced command that moves ``b`` to configuration ``q_next``."""

    def state_from_config(self, q: np.ndarray) -> ReducedState:
        if not self.config_is_state:
            raise TypeError(f"{self.name} reduced states carry more than a configuration")
        return ReducedState(self.name, q)

    def config_plausible(self, q: np.ndarray, env: Environment) -> bool:
        """Cheap necessary condition on a configuration whose full state is unknown."""
        return True

    def same_band(self, b1: ReducedState, b2: ReducedState) -> bool:
        return True

    @abc.abstractmethod
    def featurize(self, t: Transition, env: Environment, b_next: ReducedState | None = None) -> np.ndarray:
        """Classifier input for ``t``; ``b_next`` may pass in an already computed ``g(t.b, t.u)``."""

    @abc.abstractmethod
    def sample_query(self, rng: np.random.Generator, env: Environment) -> tuple[TrueState, GoalSpec]: ...

    def sample_training_query(self, rng: np.random.Generator, env: Environment) -> tuple[TrueState, GoalSpec]:
        return self.sample_query(rng, env)

    # serialization helpers ------------------------------------------------------
    def state_to_json(self, b: ReducedState) -> dict:
        d = {"q": b.q.tolist()}
        if b.band is not None:
            d["band"] = b.band.tolist()
        return d

    def state_from_json(self, d: dict) -> ReducedState:
        return ReducedState(self.name, d["q"], d.get("band"))

    def true_state_to_json(self, x: TrueState) -> dict:
        d = {"q": x.q.tolist()}
        if x.rope is not None:
            d["rope"] = x.rope.tolist()
        return d

    def true_state_from_json(self, d: dict) -> TrueState:
        return TrueState(self.name, d["q"], d.get("rope"))

"""Second-order car: the small navigation example of information loss.

The true state is ``[x, y, theta, v]``; the reduction drops the speed and the
reduced dynamics just add the command, ``b' = b + u``. The rollout steers the
car toward ``r(x) + u`` with a pure-pursuit controller and stops on the
boundary of any obstacle it would enter. Two states that differ only in speed
reduce to the same ``b`` but can end up in very different places.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Command, Domain, Environment, GoalSpec, ReducedState, Transition, TrueState
from ..geometry import wrap_angle


@dataclass(frozen=True)
class CarParams:
    wheelbase: float = 0.5
    dt: float = 0.02
    a_max: float = 2.0
    phi_max: float = 0.6
    v_max: float = 2.0
    cruise_speed: float = 0.6
    k_speed: float = 2.0  # desired speed per meter of remaining distance
    k_accel: float = 4.0
    pos_tol: float = 0.05
    arrive_speed: float = 0.25
    heading_tol: float = 0.1
    max_steps: int = 500
    contact_tol: float = 1e-4
    close_pos: float = 0.1
    close_heading: float = 0.2
    heading_weight: float = 0.3


def _deriv(s, a, phi, L):
    x, y, th, v = s
    return np.array([v * math.cos(th), v * math.sin(th), v / L * math.tan(phi), a])


def car_true_step(x, u, p: CarParams = CarParams()) -> np.ndarray:
    """One RK4 step of the bicycle model under ``u = [accel, steer]``; speed is clamped."""
    s = np.asarray(x, dtype=float)
    a, phi = float(u[0]), float(u[1])
    h = p.dt
    k1 = _deriv(s, a, phi, p.wheelbase)
    k2 = _deriv(s + 0.5 * h * k1, a, phi, p.wheelbase)
    k3 = _deriv(s + 0.5 * h * k2, a, phi, p.wheelbase)
    k4 = _deriv(s + h * k3, a, phi, p.wheelbase)
    out = s + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    out[2] = wrap_angle(out[2])
    out[3] = min(p.v_max, max(-p.v_max, out[3]))
    return out


def controller(s, target, p: CarParams = CarParams()) -> tuple[float, float]:
    """Pure-pursuit steering toward the target position and a speed profile that
    slows down as it gets close. Targets behind the car are approached in reverse."""
    dx, dy = target[0] - s[0], target[1] - s[1]
    dist = math.hypot(dx, dy)
    alpha = float(wrap_angle(math.atan2(dy, dx) - s[2]))
    direction = 1.0 if math.cos(alpha) >= 0.0 else -1.0
    if direction < 0:
        alpha = float(wrap_angle(alpha - math.pi))
    curvature = 2.0 * math.sin(alpha) / max(dist, 1e-9)
    phi = direction * max(-p.phi_max, min(p.phi_max, math.atan(curvature * p.wheelbase)))
    v_des = direction * min(p.cruise_speed, p.k_speed * dist) * abs(math.cos(alpha))
    a = max(-p.a_max, min(p.a_max, p.k_accel * (v_des - s[3])))
    return a, phi


def _blocked(env: Environment, a: np.ndarray, b: np.ndarray) -> bool:
    return not bool(env.segments_free(a, b)[0])


def car_rollout(x, u_b, env: Environment, p: CarParams = CarParams()) -> np.ndarray:
    """Drive from ``x`` toward pose ``x[:3] + u_b``.

    Ends when the car is at the target position at low speed, on contact with an obstacle or
    the workspace boundary (then the car sits on the boundary, stopped), or when
    the step budget runs out.
    """
    s = np.asarray(x, dtype=float).copy()
    target = s[:3] + np.asarray(u_b, dtype=float)
    target[2] = wrap_angle(target[2])
    for _ in range(p.max_steps):
        if math.hypot(target[0] - s[0], target[1] - s[1]) < p.pos_tol and abs(s[3]) <= p.arrive_speed:
            break
        nxt = car_true_step(s, controller(s, target, p), p)
        if _blocked(env, s[:2], nxt[:2]):
            lo, hi = 0.0, 1.0
            while (hi - lo) * math.hypot(nxt[0] - s[0], nxt[1] - s[1]) > p.contact_tol:
                mid = 0.5 * (lo + hi)
                if _blocked(env, s[:2], s[:2] + mid * (nxt[:2] - s[:2])):
                    hi = mid
                else:
                    lo = mid
            stop = s + lo * (nxt - s)
            stop[2] = wrap_angle(s[2] + lo * wrap_angle(nxt[2] - s[2]))
            stop[3] = 0.0
            return stop
        s = nxt
    return s


class CarDomain(Domain):
    name = "car"

    def __init__(self, params: CarParams = CarParams(), max_step=(0.25, 0.25, 0.26)):
        self.p = params
        self.max_step = np.asarray(max_step, dtype=float)
        self._w = np.array([1.0, 1.0, params.heading_weight])

    def reduce(self, x, env=None):
        self.check(x)
        return ReducedState(self.name, x.q[:3])

    def reduced_step(self, b, u, env=None):
        self.check(b, u)
        q = b.q + u.u
        q[2] = wrap_angle(q[2])
        return ReducedState(self.name, q)

    def rollout(self, x, u, env, seed=0):
        self.check(x, u)
        return TrueState(self.name, car_rollout(x.q, u.u, env, self.p))

    def close(self, b1, b2, env=None):
        self.check(b1, b2)
        d = b1.q - b2.q
        return bool(math.hypot(d[0], d[1]) < self.p.close_pos and abs(wrap_angle(d[2])) < self.p.close_heading)

    def difference(self, q1, q2):
        d = np.asarray(q2, dtype=float) - np.asarray(q1, dtype=float)
        d[2] = wrap_angle(d[2])
        return d

    def interpolate(self, q1, q2, s):
        q = np.asarray(q1, dtype=float) + s * self.difference(q1, q2)
        q[2] = wrap_angle(q[2])
        return q

    def distance(self, q1, q2):
        return float(np.linalg.norm(self._w * self.difference(q1, q2)))

    def distances(self, qs, q):
        d = np.asarray(q) - np.asarray(qs)
        d[:, 2] = wrap_angle(d[:, 2])
        return np.linalg.norm(d * self._w, axis=1)

    def sample_config(self, rng, env):
        xmin, ymin, xmax, ymax = env.bounds
        return np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax), rng.uniform(-math.pi, math.pi)])

    def config_free(self, q, env):
        return bool(env.points_free(q[:2])[0])

    def motion_free(self, q1, q2, env):
        return bool(env.segments_free(q1[:2], q2[:2])[0])

    def command_to(self, b, q_next):
        return Command(self.name, self.difference(b.q, q_next))

    def featurize(self, t: Transition, env=None, b_next=None):
        if b_next is None:
            b_next = self.reduced_step(t.b, t.u, env)
        return np.concatenate([t.b.q, b_next.q])

    def sample_query(self, rng, env):
        """Collision-free start with a random speed in ``[0, v_max]`` and a random goal pose."""
        while True:
            q0 = self.sample_config(rng, env)
            if self.config_free(q0, env):
                break
        while True:
            g = self.sample_config(rng, env)
            if self.config_free(g, env):
                break
        x0 = TrueState(self.name, np.append(q0, rng.uniform(0.0, self.p.v_max)))
        return x0, GoalSpec(g[None], 1e-6)

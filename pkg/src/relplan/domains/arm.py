"""Torque-limited three-link planar arm in the vertical X-Z plane.

The true dynamics are quasistatic: a position servo per joint, with the
actuator torque clamped to the joint's limit, runs until the arm settles.
Joint 1 is deliberately too weak to hold the extended arm horizontally.
The reduced model is the identity reduction with ``g(b, u) = u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Command, Domain, Environment, GoalSpec, ReducedState, Transition, TrueState


@dataclass(frozen=True)
class ArmParams:
    lengths: tuple[float, float, float] = (1.0, 1.0, 1.0)
    masses: tuple[float, float, float] = (1.0, 1.0, 1.0)
    gravity: float = 9.81
    torque_limits: tuple[float, float, float] = (20.0, 50.0, 50.0)
    kp: float = 400.0
    kd: float = 40.0
    inertia: float = 1.0
    # passive joint friction; keeps a saturated joint from swinging forever
    joint_damping: float = 5.0
    settle_velocity: float = 1e-3
    # rest also needs the static torque imbalance to vanish: speed alone is
    # small at the turning points of a saturated joint's swing
    settle_torque: float = 1e-3
    dt: float = 0.002
    max_settle_steps: int = 5000
    alpha: float = 0.075
    # starts and samples are drawn from +-joint_range; the joint limit leaves room for sag
    joint_range: float = math.pi
    joint_limit: float = 3.6


def gravity_torque(q, p: ArmParams = ArmParams()) -> np.ndarray:
    """Torque each joint must supply to hold ``q`` against gravity (masses at link midpoints)."""
    return np.array(_gravity(q[0], q[1], q[2], p))


def _gravity(q1, q2, q3, p: ArmParams):
    l1, l2, l3 = p.lengths
    m1, m2, m3 = p.masses
    c1 = math.cos(q1)
    c2 = math.cos(q1 + q2)
    c3 = math.cos(q1 + q2 + q3)
    j2 = l1 * c1
    j3 = j2 + l2 * c2
    x1 = 0.5 * l1 * c1
    x2 = j2 + 0.5 * l2 * c2
    x3 = j3 + 0.5 * l3 * c3
    g = p.gravity
    return (
        g * (m1 * x1 + m2 * x2 + m3 * x3),
        g * (m2 * (x2 - j2) + m3 * (x3 - j2)),
        g * m3 * (x3 - j3),
    )


@dataclass
class SettleResult:
    q: np.ndarray
    settled: bool
    steps: int
    max_torque: np.ndarray


def settle(q0, q_cmd, p: ArmParams = ArmParams()) -> SettleResult:
    """Integrate the servoed arm from rest at ``q0`` until it is at rest: joint
    speeds below their threshold and the torque imbalance at zero speed below
    its threshold.

    Semi-implicit Euler at ``p.dt``. The reported ``max_torque`` is the largest
    actuator torque magnitude applied on each joint.
    """
    q1, q2, q3 = (float(v) for v in q0)
    c1, c2, c3 = (float(v) for v in q_cmd)
    t1, t2, t3 = p.torque_limits
    kp, kd, inv_i, b, dt = p.kp, p.kd, 1.0 / p.inertia, p.joint_damping, p.dt
    v1 = v2 = v3 = 0.0
    m1 = m2 = m3 = 0.0
    thr2 = p.settle_velocity**2
    tor2 = p.settle_torque**2
    settled = False
    step = 0
    for step in range(1, p.max_settle_steps + 1):
        g1, g2, g3 = _gravity(q1, q2, q3, p)
        a1 = min(t1, max(-t1, kp * (c1 - q1) - kd * v1))
        a2 = min(t2, max(-t2, kp * (c2 - q2) - kd * v2))
        a3 = min(t3, max(-t3, kp * (c3 - q3) - kd * v3))
        m1 = max(m1, abs(a1))
        m2 = max(m2, abs(a2))
        m3 = max(m3, abs(a3))
        v1 += dt * (a1 - g1 - b * v1) * inv_i
        v2 += dt * (a2 - g2 - b * v2) * inv_i
        v3 += dt * (a3 - g3 - b * v3) * inv_i
        q1 += dt * v1
        q2 += dt * v2
        q3 += dt * v3
        if v1 * v1 + v2 * v2 + v3 * v3 < thr2:
            # the torque that would act if the arm were released from rest here
            g1, g2, g3 = _gravity(q1, q2, q3, p)
            s1 = min(t1, max(-t1, kp * (c1 - q1))) - g1
            s2 = min(t2, max(-t2, kp * (c2 - q2))) - g2
            s3 = min(t3, max(-t3, kp * (c3 - q3))) - g3
            if s1 * s1 + s2 * s2 + s3 * s3 < tor2:
                settled = True
                break
    return SettleResult(np.array([q1, q2, q3]), settled, step, np.array([m1, m2, m3]))


def equilibrium(q_cmd, p: ArmParams = ArmParams(), iters: int = 200):
    """Unsaturated servo equilibrium near ``q_cmd`` by fixed-point iteration.

    Returns ``(q, holdable)``; ``holdable`` is false when the torque needed at
    the equilibrium exceeds a joint limit (or the iteration does not converge).
    """
    qc = np.asarray(q_cmd, dtype=float)
    q = qc.copy()
    for _ in range(iters):
        q_new = qc - gravity_torque(q, p) / p.kp
        if np.max(np.abs(q_new - q)) < 1e-13:
            q = q_new
            break
        q = q_new
    else:
        return q, False
    need = np.abs(p.kp * (qc - q))
    return q, bool(np.all(need <= np.asarray(p.torque_limits)))


def holdable_within(q, p: ArmParams = ArmParams(), tol: float | None = None) -> bool:
    tol = p.alpha if tol is None else tol
    qe, ok = equilibrium(q, p)
    return ok and float(np.linalg.norm(qe - np.asarray(q))) < tol


def forward_kinematics(q, p: ArmParams = ArmParams()) -> np.ndarray:
    """Joint positions and end effector, shape ``(4, 2)``; row 0 is the base."""
    phi = np.cumsum(np.asarray(q, dtype=float))
    steps = np.asarray(p.lengths)[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])


def wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def inverse_kinematics(target, p: ArmParams = ArmParams(), n_grid: int = 72, holdable_only: bool = True) -> list[np.ndarray]:
    """IK solutions over a grid of first-joint angles, both elbow branches.

    Solutions are deduplicated, checked against FK to 1e-9 and (by default)
    filtered to those the servo can hold within ``alpha``. An empty list means
    no solution.
    """
    t = np.asarray(target, dtype=float)
    l1, l2, l3 = p.lengths
    if np.linalg.norm(t) > l1 + l2 + l3 + 1e-12:
        return []
    sols: list[np.ndarray] = []
    for q1 in np.linspace(-np.pi, np.pi, n_grid, endpoint=False):
        p2 = l1 * np.array([np.cos(q1), np.sin(q1)])
        r = t - p2
        d2 = float(r @ r)
        c = (d2 - l2 * l2 - l3 * l3) / (2 * l2 * l3)
        if c < -1 - 1e-12 or c > 1 + 1e-12:
            continue
        c = min(1.0, max(-1.0, c))
        for sign in (1.0, -1.0):
            q3 = sign * math.acos(c)
            phi2 = math.atan2(r[1], r[0]) - math.atan2(l3 * math.sin(q3), l2 + l3 * math.cos(q3))
            q = wrap(np.array([q1, phi2 - q1, q3]))
            if np.linalg.norm(forward_kinematics(q, p)[-1] - t) > 1e-9:
                continue
            if any(np.max(np.abs(wrap(q - s))) < 1e-3 for s in sols):
                continue
            sols.append(q)
    if holdable_only:
        sols = [q for q in sols if holdable_within(q, p)]
    return sols


class ArmDomain(Domain):
    name = "arm"
    # fine substeps with a long extension reach: leaking into an Unreliable
    # region then costs many more accept draws than growing around it
    extend_substeps = 45

    def __init__(self, params: ArmParams = ArmParams(), max_step: float = 0.05):
        self.p = params
        self.max_step = np.full(3, max_step)

    def reduce(self, x, env=None):
        self.check(x)
        return ReducedState(self.name, x.q)

    def reduced_step(self, b, u, env=None):
        self.check(b, u)
        return ReducedState(self.name, u.u)

    def rollout(self, x, u, env=None, seed=0):
        self.check(x, u)
        return TrueState(self.name, settle(x.q, u.u, self.p).q)

    def close(self, b1, b2, env=None):
        self.check(b1, b2)
        return bool(np.linalg.norm(b1.q - b2.q) < self.p.alpha)

    def distance(self, q1, q2):
        return float(np.linalg.norm(np.asarray(q2) - np.asarray(q1)))

    def distances(self, qs, q):
        return np.linalg.norm(np.asarray(qs) - q, axis=1)

    def sample_config(self, rng, env=None):
        return rng.uniform(-self.p.joint_range, self.p.joint_range, 3)

    def config_free(self, q, env=None):
        return bool(np.all(np.abs(q) <= self.p.joint_limit))

    def motion_free(self, q1, q2, env=None):
        return self.config_free(q1) and self.config_free(q2)

    def command_to(self, b, q_next):
        return Command(self.name, q_next)

    def featurize(self, t: Transition, env=None, b_next=None):
        if b_next is None:
            b_next = self.reduced_step(t.b, t.u, env)
        return np.concatenate([t.b.q, b_next.q])

    def settled_start(self, q) -> TrueState:
        """True state obtained by commanding ``q`` from rest at ``q``."""
        return TrueState(self.name, settle(q, q, self.p).q)

    def sample_query(self, rng, env=None):
        """Settled start at a random pose the servo can hold, and the holdable IK
        solutions of a random reachable point."""
        while True:
            q = self.sample_config(rng)
            if holdable_within(q, self.p):
                x0 = self.settled_start(q)
                break
        reach = sum(self.p.lengths)
        while True:
            r = reach * math.sqrt(rng.uniform())
            a = rng.uniform(-math.pi, math.pi)
            sols = inverse_kinematics(r * np.array([math.cos(a), math.sin(a)]), self.p)
            sols = [s for s in sols if self.config_free(s)]
            if sols:
                return x0, GoalSpec(np.array(sols), 1e-6)

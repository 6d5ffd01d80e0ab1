import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import fsolve

from relplan.core import Command, ReducedState, Transition, TrueState
from relplan.domains.arm import (
    ArmDomain,
    ArmParams,
    equilibrium,
    forward_kinematics,
    gravity_torque,
    inverse_kinematics,
    settle,
)

P = ArmParams()
angles = st.floats(-math.pi, math.pi)


def hand_gravity(q):
    """Joint torques from the three midpoint masses, each summed explicitly."""
    pts = forward_kinematics(q)
    mids = 0.5 * (pts[:-1] + pts[1:])
    g = P.gravity
    return np.array([sum(g * (mids[k, 0] - pts[j, 0]) for k in range(j, 3)) for j in range(3)])


def clamped_statics(q_cmd):
    """Static rest point of the clamped servo under gravity (root of the torque balance)."""
    lim = np.array(P.torque_limits)

    def residual(q):
        return np.clip(P.kp * (q_cmd - q), -lim, lim) - gravity_torque(q)

    return fsolve(residual, q_cmd - gravity_torque(q_cmd) / P.kp, xtol=1e-12)


def test_gravity_torque_examples():
    np.testing.assert_allclose(gravity_torque([-math.pi / 2, 0, 0]), 0, atol=1e-12)
    np.testing.assert_allclose(gravity_torque([math.pi / 2, 0, 0]), 0, atol=1e-12)
    np.testing.assert_allclose(gravity_torque([0, 0, 0])[0], 9.81 * 4.5)
    assert P.torque_limits[0] < gravity_torque([0, 0, 0])[0]


@settings(max_examples=100, deadline=None)
@given(angles, angles, angles)
def test_gravity_torque_matches_hand_sum(a, b, c):
    np.testing.assert_allclose(gravity_torque([a, b, c]), hand_gravity([a, b, c]), atol=1e-10)


@pytest.mark.parametrize("q, ee", [([0, 0, 0], (3, 0)), ([math.pi / 2, 0, 0], (0, 3)), ([math.pi / 2, -math.pi / 2, 0], (2, 1))])
def test_fk_examples(q, ee):
    np.testing.assert_allclose(forward_kinematics(q)[-1], ee, atol=1e-12)


def test_settle_at_hanging_pose_stays():
    q = np.array([-math.pi / 2, 0, 0])
    r = settle(q, q)
    assert r.settled
    np.testing.assert_allclose(r.q, q, atol=1e-12)


def test_horizontal_command_saturates_joint_one():
    r = settle([0, 0, 0], [0, 0, 0])
    ref = clamped_statics(np.zeros(3))
    assert np.linalg.norm(r.q) > 0.5  # far from the command
    assert abs(P.kp * r.q[0]) >= P.torque_limits[0]  # clamp active at rest
    np.testing.assert_allclose(r.q, ref, atol=0.01)


@pytest.mark.parametrize("q_cmd", [[math.pi / 2, 0, 0], [1.45, 0.1, -0.05], [1.7, -0.2, 0.1]])
def test_near_vertical_commands_hold(q_cmd):
    r = settle(q_cmd, q_cmd)
    qe, ok = equilibrium(q_cmd)
    assert ok
    assert np.linalg.norm(r.q - np.asarray(q_cmd)) < P.alpha
    np.testing.assert_allclose(r.q, clamped_statics(np.asarray(q_cmd, dtype=float)), atol=2e-3)
    np.testing.assert_allclose(qe, clamped_statics(np.asarray(q_cmd, dtype=float)), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(angles, angles, angles, angles, angles, angles)
def test_settle_respects_torque_limits_and_is_an_equilibrium(a, b, c, d, e, f):
    r = settle([a, b, c], [d, e, f])
    assert np.all(r.max_torque <= np.array(P.torque_limits) + 1e-12)
    if r.settled:
        again = settle(r.q, [d, e, f])
        assert np.max(np.abs(again.q - r.q)) < 1e-6


def mirror(q):
    return np.array([math.pi - q[0], -q[1], -q[2]])


@settings(max_examples=40, deadline=None)
@given(angles, angles, angles, angles, angles, angles)
def test_mirror_symmetry(a, b, c, d, e, f):
    q0, qc = np.array([a, b, c]), np.array([d, e, f])
    r = settle(q0, qc)
    m = settle(mirror(q0), mirror(qc))
    np.testing.assert_allclose(m.q, mirror(r.q), atol=1e-9)


def test_ik_examples():
    assert any(np.allclose(q, [0, 0, 0], atol=1e-6) for q in inverse_kinematics([3.0, 0.0], holdable_only=False))
    assert not any(np.allclose(q, [0, 0, 0], atol=1e-6) for q in inverse_kinematics([3.0, 0.0]))
    assert any(np.allclose(q, [math.pi / 2, 0, 0], atol=1e-9) for q in inverse_kinematics([0.0, 3.0]))
    assert inverse_kinematics([4.0, 0.0]) == []


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 2.95), st.floats(-math.pi, math.pi))
def test_ik_solutions_hit_target(r, a):
    target = r * np.array([math.cos(a), math.sin(a)])
    sols = inverse_kinematics(target, holdable_only=False)
    assert sols
    for q in sols:
        assert np.linalg.norm(forward_kinematics(q)[-1] - target) < 1e-9
    for i in range(len(sols)):
        for j in range(i):
            assert np.max(np.abs(sols[i] - sols[j])) >= 1e-3


def test_domain_examples():
    d = ArmDomain()
    b = ReducedState("arm", [0, 0, 0])
    assert np.array_equal(d.reduce(TrueState("arm", [0.1, 0.2, 0.3])).q, [0.1, 0.2, 0.3])
    assert np.array_equal(d.reduced_step(b, Command("arm", [0.5, 0, 0])).q, [0.5, 0, 0])
    assert d.close(b, b)
    assert not d.close(b, ReducedState("arm", [0.08, 0, 0]))
    feats = d.featurize(Transition(b, Command("arm", [0.5, 0, 0]), "arm_free"))
    np.testing.assert_array_equal(feats, [0, 0, 0, 0.5, 0, 0])


def test_rollout_at_command_is_fixed_point():
    d = ArmDomain()
    for q in ([-math.pi / 2, 0, 0], [math.pi / 2, 0, 0], [-math.pi / 2, math.pi, 0]):
        x = TrueState("arm", q)
        np.testing.assert_allclose(d.rollout(x, Command("arm", q)).q, q, atol=1e-9)
    # a settled start re-commanded with the command it settled under stays put
    q = np.array([1.2, 0.3, -0.4])
    x = d.settled_start(q)
    np.testing.assert_allclose(d.rollout(x, Command("arm", q)).q, x.q, atol=1e-3)


def test_query_starts_and_goals_are_holdable():
    d = ArmDomain()
    rng = np.random.default_rng(0)
    for _ in range(10):
        x0, goal = d.sample_query(rng)
        assert d.config_free(x0.q)
        for q in goal.targets:
            qe, ok = equilibrium(q)
            assert ok and np.linalg.norm(qe - q) < P.alpha


def test_upward_swing_fails_at_horizontal():
    """Commanding a straight path from hanging to upright in small steps: the
    servo cannot carry the extended arm past horizontal."""
    d = ArmDomain()
    x = TrueState("arm", [-math.pi / 2, 0, 0])
    for s in np.linspace(-math.pi / 2, math.pi / 2, 61)[1:]:
        x = d.rollout(x, Command("arm", [s, 0, 0]))
    assert np.linalg.norm(x.q - [math.pi / 2, 0, 0]) > P.alpha

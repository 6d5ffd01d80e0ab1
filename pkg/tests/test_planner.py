import math

import numpy as np
import pytest
from conftest import PointDomain
from hypothesis import given, settings
from hypothesis import strategies as st

from relplan.core import Command, Environment, GoalSpec, Label, PlanNotFound, ReducedState, Transition, TrueState
from relplan.planner import (
    ConstantClassifier,
    PlannerConfig,
    RRTConnect,
    _make_path,
    check_transition,
    execute,
    path_length,
    rrt_connect,
)


def validate_path(domain, path, env, goal):
    """Independent re-check: g reproduces every state, steps respect max_step,
    segments are free and the last state meets the goal."""
    assert len(path.states) == len(path.transitions) + 1
    for t, tr in enumerate(path.transitions):
        assert tr.b.same_as(path.states[t])
        nxt = domain.reduced_step(tr.b, tr.u, env)
        np.testing.assert_allclose(nxt.q, path.states[t + 1].q, atol=1e-12)
        assert np.all(np.abs(tr.u.u) <= domain.max_step + 1e-12)
        assert domain.motion_free(tr.b.q, nxt.q, env)
    assert domain.goal_check(path.states[-1], goal)


def start_goal(q0, g, tol=1e-9):
    return ReducedState("point", q0), GoalSpec([g], tol)


def test_check_transition_without_classifier(point, empty_env):
    t = Transition(ReducedState("point", [1, 1]), Command("point", [0.1, 0]), empty_env.id)
    out = check_transition(point, t, empty_env, np.random.default_rng(0))
    np.testing.assert_allclose(out.q, [1.1, 1])


@pytest.mark.parametrize("k, p_acc", [(1.0, 0.99), (10.0, 0.91), (0.0, 0.5)])
def test_unreliable_acceptance_rate(point, empty_env, k, p_acc):
    cfg = PlannerConfig(k=k, p_acc=p_acc, classifier=ConstantClassifier())
    p = math.exp(-k * p_acc)
    assert cfg.acceptance == pytest.approx(p)
    rng = np.random.default_rng(11)
    t = Transition(ReducedState("point", [1, 1]), Command("point", [0.1, 0]), empty_env.id)
    n = 20_000
    hits = sum(check_transition(point, t, empty_env, rng, cfg.classifier, cfg.acceptance) is not None for _ in range(n))
    assert abs(hits / n - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_acceptance_uses_classifier_p_acc_by_default():
    cfg = PlannerConfig(k=2.0, classifier=ConstantClassifier(p_acc=0.5))
    assert cfg.acceptance == pytest.approx(math.exp(-1.0))
    assert PlannerConfig(k=3.0).acceptance == pytest.approx(math.exp(-3.0))
    with pytest.raises(ValueError):
        PlannerConfig(k=-1)


def test_empty_scene_plan_is_fast_and_valid(point, empty_env):
    import time

    start, goal = start_goal([0.2, 0.2], [3.8, 2.8])
    t0 = time.perf_counter()
    rrt = RRTConnect(point, empty_env, PlannerConfig(seed=0))
    path = rrt.plan(start, goal)
    assert time.perf_counter() - t0 < 1.0
    validate_path(point, path, empty_env, goal)
    # after smoothing, close to the straight segment
    assert path_length(point, rrt.smooth(path)) < 1.05 * np.hypot(3.6, 2.6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_box_scene_paths_are_valid(seed):
    box_env = Environment("box", [0, 0, 4, 3], [[[1.5, 1.0], [2.5, 1.0], [2.5, 2.0], [1.5, 2.0]]])
    dom = PointDomain()
    rng = np.random.default_rng(seed)
    x0, goal = dom.sample_query(rng, box_env)
    rrt = RRTConnect(dom, box_env, PlannerConfig(seed=seed))
    path = rrt.plan(dom.reduce(x0), goal)
    validate_path(dom, path, box_env, goal)
    short = rrt.smooth(path)
    validate_path(dom, short, box_env, goal)
    assert path_length(dom, short) <= path_length(dom, path) + 1e-9


def test_goal_in_obstacle_raises(point, box_env):
    start, goal = start_goal([0.5, 0.5], [2.0, 1.5])
    with pytest.raises(PlanNotFound):
        rrt_connect(point, start, goal, PlannerConfig(max_iterations=100), box_env)


def test_iteration_budget_raises(point):
    # goal in a pocket closed on all sides
    walls = [[[2, 1], [3, 1], [3, 1.2], [2, 1.2]], [[2, 1.8], [3, 1.8], [3, 2], [2, 2]],
             [[2, 1.2], [2.2, 1.2], [2.2, 1.8], [2, 1.8]], [[2.8, 1.2], [3, 1.2], [3, 1.8], [2.8, 1.8]]]
    env = Environment("pocket", [0, 0, 4, 3], walls)
    start, goal = start_goal([0.5, 0.5], [2.5, 1.5])
    with pytest.raises(PlanNotFound, match="200 iterations"):
        rrt_connect(point, start, goal, PlannerConfig(max_iterations=200), env)


def test_planning_is_deterministic(point, box_env):
    start, goal = start_goal([0.5, 1.5], [3.5, 1.5])
    a = rrt_connect(point, start, goal, PlannerConfig(seed=4), box_env)
    b = rrt_connect(point, start, goal, PlannerConfig(seed=4), box_env)
    np.testing.assert_array_equal(a.configs, b.configs)


def zigzag_path(dom, env, n=12):
    qs = [np.array([0.3 + 0.25 * i, 0.3 + 0.09 * (i % 2)]) for i in range(n)]
    states = [ReducedState("point", qs[0])]
    cmds = []
    for q in qs[1:]:
        for s in (0.5, 1.0):
            u = dom.command_to(states[-1], states[-1].q + s * (q - states[-1].q) if s == 0.5 else q)
            cmds.append(u)
            states.append(dom.reduced_step(states[-1], u))
    return _make_path(states, cmds, env)


def test_smoothing_shortens_zigzag(point, empty_env):
    path = zigzag_path(point, empty_env)
    rrt = RRTConnect(point, empty_env, PlannerConfig(seed=0))
    short = rrt.smooth(path)
    assert path_length(point, short) < path_length(point, path) - 0.05
    np.testing.assert_array_equal(short.states[-1].q, path.states[-1].q)
    validate_path(point, short, empty_env, GoalSpec([path.states[-1].q], 1e-9))


def test_smoothing_leaves_straight_path_alone(point, empty_env):
    states, cmds = [ReducedState("point", [0.2, 0.2])], []
    for _ in range(10):
        cmds.append(Command("point", [0.1, 0.0]))
        states.append(point.reduced_step(states[-1], cmds[-1]))
    path = _make_path(states, cmds, empty_env)
    rrt = RRTConnect(point, empty_env, PlannerConfig(seed=0))
    np.testing.assert_allclose(rrt.smooth(path).configs, path.configs)


class Strip:
    """Unreliable inside a vertical strip that leaves a free gap at the top."""

    p_acc = 1.0

    def __call__(self, t, env, b_next=None):
        x, y = b_next.q
        return Label.UNRELIABLE if 1.8 < x < 2.2 and y < 2.4 else Label.RELIABLE


def polyline_path(dom, env, corners):
    states, cmds = [ReducedState("point", corners[0])], []
    for a, b in zip(corners, corners[1:]):
        a, b = np.array(a, dtype=float), np.array(b, dtype=float)
        m = dom.n_substeps(a, b)
        for s in range(1, m + 1):
            cmds.append(dom.command_to(states[-1], a + (b - a) * s / m))
            states.append(dom.reduced_step(states[-1], cmds[-1]))
    return _make_path(states, cmds, env)


def in_strip(configs):
    return (configs[:, 0] > 1.8) & (configs[:, 0] < 2.2) & (configs[:, 1] < 2.4)


def test_smoothing_respects_classifier(point):
    env = Environment("wide", [0, 0, 4, 3])
    # over the top of the strip; most shortcuts would cut through it
    path = polyline_path(point, env, [[0.5, 0.5], [0.5, 2.7], [3.5, 2.7], [3.5, 0.5]])
    guarded = RRTConnect(point, env, PlannerConfig(k=60.0, classifier=Strip(), seed=0)).smooth(path, attempts=500)
    free = RRTConnect(point, env, PlannerConfig(seed=0)).smooth(path, attempts=500)
    assert not np.any(in_strip(guarded.configs))
    assert path_length(point, guarded) < path_length(point, path)
    assert np.any(in_strip(free.configs))  # control: without the classifier it cuts through


def test_classifier_steers_plan_away_from_unreliable_region(point):
    env = Environment("wide", [0, 0, 4, 3])
    start, goal = start_goal([0.5, 0.5], [3.5, 0.5])
    for seed in range(5):
        path = rrt_connect(point, start, goal, PlannerConfig(k=60.0, classifier=Strip(), seed=seed), env)
        assert not np.any(in_strip(path.configs))


def test_plan_from_goal_returns_empty_path(point, empty_env):
    start, goal = start_goal([1.0, 1.0], [1.0, 1.0])
    path = rrt_connect(point, start, goal, PlannerConfig(), empty_env)
    assert len(path) == 0 and len(path.states) == 1


def test_execute_reports_divergence(empty_env):
    dom = PointDomain(drift=(0.0, 0.1), drift_from=2.0)
    start, goal = start_goal([0.5, 0.5], [3.5, 0.5], tol=0.01)
    path = rrt_connect(dom, start, goal, PlannerConfig(seed=0), empty_env)
    rep = execute(dom, path, TrueState("point", [0.5, 0.5]), empty_env, goal)
    assert not rep.success
    first = next(i for i, s in enumerate(path.states) if s.q[0] > 2.0)
    assert rep.divergence_index == first
    clean = execute(PointDomain(), path, TrueState("point", [0.5, 0.5]), empty_env, goal)
    assert clean.success and clean.divergence_index is None and clean.goal_distance < 1e-9

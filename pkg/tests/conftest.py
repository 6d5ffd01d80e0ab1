from __future__ import annotations

import numpy as np
import pytest

from relplan.core import Command, Domain, Environment, GoalSpec, ReducedState, TrueState

_ACCEPTANCE: list[tuple[int, str, bool, str]] = []


class AcceptanceLog:
    def record(self, number: int, name: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((number, name, bool(ok), detail))
        return bool(ok)


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def box_env():
    """4 x 3 workspace with one square obstacle in the middle."""
    return Environment("box", [0, 0, 4, 3], [[[1.5, 1.0], [2.5, 1.0], [2.5, 2.0], [1.5, 2.0]]])


@pytest.fixture
def empty_env():
    return Environment("empty", [0, 0, 4, 3])


class PointDomain(Domain):
    """Holonomic point in the plane. The rollout adds ``drift`` to every move made
    while x > ``drift_from``, so tests can force divergence where they want it."""

    name = "point"

    def __init__(self, step: float = 0.1, drift=(0.0, 0.0), drift_from: float = np.inf):
        self.max_step = np.array([step, step])
        self.drift = np.asarray(drift, dtype=float)
        self.drift_from = drift_from

    def reduce(self, x, env=None):
        return ReducedState(self.name, x.q)

    def reduced_step(self, b, u, env=None):
        self.check(b, u)
        return ReducedState(self.name, b.q + u.u)

    def rollout(self, x, u, env=None, seed=0):
        q = x.q + u.u
        if q[0] > self.drift_from:
            q = q + self.drift
        return TrueState(self.name, q)

    def close(self, b1, b2, env=None):
        return bool(np.linalg.norm(b1.q - b2.q) < 0.05)

    def distance(self, q1, q2):
        return float(np.linalg.norm(np.asarray(q2) - np.asarray(q1)))

    def distances(self, qs, q):
        return np.linalg.norm(np.asarray(qs) - np.asarray(q), axis=1)

    def sample_config(self, rng, env):
        xmin, ymin, xmax, ymax = env.bounds
        return np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])

    def config_free(self, q, env):
        return bool(env.points_free(np.asarray(q)[None])[0])

    def motion_free(self, q1, q2, env):
        return bool(env.segments_free(np.asarray(q1)[None], np.asarray(q2)[None])[0])

    def command_to(self, b, q_next):
        return Command(self.name, np.asarray(q_next) - b.q)

    def featurize(self, t, env=None, b_next=None):
        if b_next is None:
            b_next = self.reduced_step(t.b, t.u, env)
        return np.concatenate([t.b.q, b_next.q])

    def sample_query(self, rng, env):
        while True:
            q0 = self.sample_config(rng, env)
            g = self.sample_config(rng, env)
            if self.config_free(q0, env) and self.config_free(g, env):
                return TrueState(self.name, q0), GoalSpec(g[None], 1e-9)


@pytest.fixture
def point():
    return PointDomain()

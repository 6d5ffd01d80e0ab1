"""RRT-Connect in the reduced space with classifier-biased edge checks.

Every motion is cut into substeps no longer than the domain's ``max_step``.
A substep is one planner transition: it must be collision-free and pass
:func:`check_transition`, which rejects classifier-Unreliable transitions
except with probability ``exp(-k * p_acc)``.

When reduced states carry more than the planner configuration (the tether's
band), only the start tree knows them. Goal-tree edges are then checked for
collisions alone and the band is pushed through the goal branch, with full
transition checks, when the two trees meet.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import NetworkParams, classify
from .core import (
    Command,
    Domain,
    Environment,
    GoalSpec,
    Label,
    Overstretch,
    PlanNotFound,
    ReducedState,
    Transition,
    TrueState,
)


class NetworkClassifier:
    """Adapts trained network params to the ``(transition, env, b_next) -> Label`` call."""

    def __init__(self, params: NetworkParams, domain: Domain):
        self.params = params
        self.domain = domain
        self.p_acc = params.p_acc

    def __call__(self, t: Transition, env: Environment, b_next: ReducedState | None = None) -> Label:
        return classify(self.params, self.domain.featurize(t, env, b_next))


class ConstantClassifier:
    """Always returns the same label; a stub for probing the acceptance rule."""

    def __init__(self, label: Label = Label.UNRELIABLE, p_acc: float = 1.0):
        self.label = label
        self.p_acc = p_acc

    def __call__(self, t, env, b_next=None) -> Label:
        return self.label


@dataclass
class PlannerConfig:
    k: float = 1.0
    p_acc: float | None = None  # defaults to the classifier's recorded validation accuracy
    goal_bias: float = 0.1
    max_iterations: int = 20000
    timeout: float = 60.0
    seed: int = 0
    classifier: object | None = None
    extend_substeps: int | None = None  # None uses the domain's default
    smoothing_attempts: int = 200

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")

    @property
    def acceptance(self) -> float:
        """Probability of accepting a transition classified Unreliable."""
        p_acc = self.p_acc
        if p_acc is None:
            p_acc = getattr(self.classifier, "p_acc", 1.0)
        return math.exp(-self.k * p_acc)


def check_transition(
    domain: Domain,
    t: Transition,
    env: Environment,
    rng: np.random.Generator,
    classifier=None,
    acceptance: float = 1.0,
) -> ReducedState | None:
    """Predicted next state, or ``None`` when the transition is rejected."""
    try:
        b_next = domain.reduced_step(t.b, t.u, env)
    except Overstretch:
        return None
    if classifier is None or classifier(t, env, b_next) == Label.RELIABLE:
        return b_next
    if rng.random() < acceptance:
        return b_next
    return None


@dataclass
class Path:
    transitions: list[Transition]
    states: list[ReducedState]  # predicted b_0 .. b_N

    @property
    def configs(self) -> np.ndarray:
        return np.array([s.q for s in self.states])

    def __len__(self) -> int:
        return len(self.transitions)


def path_length(domain: Domain, path: Path) -> float:
    q = path.configs
    return float(sum(domain.distance(q[i], q[i + 1]) for i in range(len(q) - 1)))


class _Tree:
    def __init__(self, dim: int):
        self.q = np.zeros((64, dim))
        self.n = 0
        self.parent: list[int] = []
        self.state: list[ReducedState | None] = []
        self.cmd: list[Command | None] = []

    def add(self, q, parent: int, state, cmd=None) -> int:
        if self.n == len(self.q):
            self.q = np.vstack([self.q, np.zeros_like(self.q)])
        self.q[self.n] = q
        self.parent.append(parent)
        self.state.append(state)
        self.cmd.append(cmd)
        self.n += 1
        return self.n - 1

    def branch(self, i: int) -> list[int]:
        out = []
        while i >= 0:
            out.append(i)
            i = self.parent[i]
        return out


class RRTConnect:
    def __init__(self, domain: Domain, env: Environment, cfg: PlannerConfig):
        self.domain = domain
        self.env = env
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.acceptance = cfg.acceptance
        self.stats = {"iterations": 0, "checks": 0, "rejections": 0}

    # -- edge checks ----------------------------------------------------------------
    def step_forward(self, b: ReducedState, q_next: np.ndarray) -> tuple[ReducedState, Command] | None:
        d = self.domain
        if not d.motion_free(b.q, q_next, self.env):
            return None
        self.stats["checks"] += 1
        u = d.command_to(b, q_next)
        out = check_transition(d, Transition(b, u, self.env.id), self.env, self.rng, self.cfg.classifier, self.acceptance)
        if out is None:
            self.stats["rejections"] += 1
            return None
        return out, u

    def _goal_edge_ok(self, q_child: np.ndarray, q_parent: np.ndarray) -> bool:
        d = self.domain
        if not d.motion_free(q_child, q_parent, self.env):
            return False
        if not d.config_is_state:
            return d.config_plausible(q_parent, self.env)
        return self.step_forward(d.state_from_config(q_child), q_parent) is not None

    # -- tree growth ----------------------------------------------------------------
    def _grow(self, tree: _Tree, forward: bool, i_near: int, q_target: np.ndarray) -> tuple[int, bool]:
        """Add substep nodes from ``i_near`` toward ``q_target``; return (last node, reached)."""
        d = self.domain
        q0 = tree.q[i_near].copy()
        n = d.n_substeps(q0, q_target)
        last = i_near
        for s in range(1, n + 1):
            q_next = q_target if s == n else d.interpolate(q0, q_target, s / n)
            if forward:
                step = self.step_forward(tree.state[last], q_next)
                if step is None:
                    return last, False
                last = tree.add(step[0].q, last, step[0], step[1])
            else:
                if not self._goal_edge_ok(q_next, tree.q[last]):
                    return last, False
                state = d.state_from_config(q_next) if d.config_is_state else None
                last = tree.add(q_next, last, state)
        return last, True

    def _extend(self, tree: _Tree, forward: bool, q_rand: np.ndarray) -> tuple[int, bool]:
        d = self.domain
        i_near = int(np.argmin(d.distances(tree.q[: tree.n], q_rand)))
        q_near = tree.q[i_near]
        n = d.n_substeps(q_near, q_rand)
        cap = self.cfg.extend_substeps or d.extend_substeps
        if n > cap:
            q_rand = d.interpolate(q_near, q_rand, cap / n)
        last, _ = self._grow(tree, forward, i_near, q_rand)
        return last, last != i_near

    def _connect(self, tree: _Tree, forward: bool, q_target: np.ndarray) -> tuple[int, bool]:
        d = self.domain
        i_near = int(np.argmin(d.distances(tree.q[: tree.n], q_target)))
        if d.distance(tree.q[i_near], q_target) < 1e-12:
            return i_near, True
        return self._grow(tree, forward, i_near, q_target)

    def _assemble(self, fwd: _Tree, i_fwd: int, bwd: _Tree, i_bwd: int) -> Path | None:
        """Join the start branch ending at ``i_fwd`` with the goal branch from ``i_bwd``."""
        d = self.domain
        start_ids = fwd.branch(i_fwd)[::-1]
        states = [fwd.state[i] for i in start_ids]
        cmds = [fwd.cmd[i] for i in start_ids[1:]]
        for i in bwd.branch(i_bwd)[1:]:  # node i_bwd duplicates fwd node i_fwd
            b = states[-1]
            if d.config_is_state:
                u = d.command_to(b, bwd.q[i])
                states.append(d.reduced_step(b, u, self.env))
                cmds.append(u)
            else:
                step = self.step_forward(b, bwd.q[i])
                if step is None:
                    return None
                states.append(step[0])
                cmds.append(step[1])
        return _make_path(states, cmds, self.env)

    def plan(self, start: ReducedState, goal: GoalSpec) -> Path:
        d = self.domain
        d.check(start)
        t0 = time.perf_counter()
        if not d.config_free(start.q, self.env):
            raise PlanNotFound("start configuration is in collision")
        fwd = _Tree(len(start.q))
        fwd.add(start.q, -1, start)
        if d.goal_check(start, goal):
            return Path([], [start])
        bwd = _Tree(len(start.q))
        for q in goal.targets:
            if d.config_free(q, self.env):
                bwd.add(q, -1, d.state_from_config(q) if d.config_is_state else None)
        if bwd.n == 0:
            raise PlanNotFound("every goal configuration is in collision")

        a, b = (fwd, True), (bwd, False)
        for it in range(self.cfg.max_iterations):
            self.stats["iterations"] = it + 1
            if time.perf_counter() - t0 > self.cfg.timeout:
                raise PlanNotFound(f"timeout after {it} iterations")
            if self.rng.random() < self.cfg.goal_bias:
                q_rand = goal.targets[self.rng.integers(len(goal.targets))] if a[1] else start.q
            else:
                q_rand = d.sample_config(self.rng, self.env)
            i_new, grew = self._extend(a[0], a[1], q_rand)
            if grew:
                i_other, reached = self._connect(b[0], b[1], a[0].q[i_new])
                if reached:
                    path = (
                        self._assemble(a[0], i_new, b[0], i_other)
                        if a[1]
                        else self._assemble(b[0], i_other, a[0], i_new)
                    )
                    if path is not None:
                        return path
            a, b = b, a
        raise PlanNotFound(f"no path after {self.cfg.max_iterations} iterations")

    # -- smoothing ------------------------------------------------------------------
    def _propagate(self, b: ReducedState, qs):
        states, cmds = [], []
        for q in qs:
            step = self.step_forward(b, q)
            if step is None:
                return None
            b = step[0]
            states.append(b)
            cmds.append(step[1])
        return states, cmds

    def smooth(self, path: Path, attempts: int | None = None) -> Path:
        """Random shortcutting; a shortcut is kept only if it shortens the path and
        every substep passes the same checks as planning."""
        d = self.domain
        attempts = self.cfg.smoothing_attempts if attempts is None else attempts
        states = list(path.states)
        cmds = [t.u for t in path.transitions]
        for _ in range(attempts):
            n = len(states)
            if n < 3:
                break
            i, j = sorted(int(v) for v in self.rng.choice(n, size=2, replace=False))
            if j - i < 2:
                continue
            qi, qj = states[i].q, states[j].q
            old = sum(d.distance(states[k].q, states[k + 1].q) for k in range(i, j))
            if d.distance(qi, qj) >= old - 1e-9:
                continue
            m = d.n_substeps(qi, qj)
            new = self._propagate(states[i], [qj if s == m else d.interpolate(qi, qj, s / m) for s in range(1, m + 1)])
            if new is None:
                continue
            new_states, new_cmds = new
            tail = [s.q for s in states[j + 1 :]]
            if d.config_is_state:
                rest_states, rest_cmds = [], []
                b = new_states[-1]
                for q in tail:
                    u = d.command_to(b, q)
                    b = d.reduced_step(b, u, self.env)
                    rest_states.append(b)
                    rest_cmds.append(u)
            elif d.same_band(new_states[-1], states[j]):
                rest_states, rest_cmds = states[j + 1 :], cmds[j:]
            else:
                rest = self._propagate(new_states[-1], tail)
                if rest is None:
                    continue
                rest_states, rest_cmds = rest
            states = states[: i + 1] + new_states + rest_states
            cmds = cmds[:i] + new_cmds + rest_cmds
        return _make_path(states, cmds, self.env)


def _make_path(states, cmds, env: Environment) -> Path:
    return Path([Transition(b, u, env.id) for b, u in zip(states[:-1], cmds)], list(states))


def rrt_connect(domain: Domain, start: ReducedState, goal: GoalSpec, cfg: PlannerConfig, env: Environment) -> Path:
    return RRTConnect(domain, env, cfg).plan(start, goal)


def smooth(domain: Domain, path: Path, cfg: PlannerConfig, env: Environment, rng_seed: int | None = None) -> Path:
    planner = RRTConnect(domain, env, cfg)
    if rng_seed is not None:
        planner.rng = np.random.default_rng(rng_seed)
    return planner.smooth(path)


@dataclass
class ExecutionReport:
    trace: list[TrueState]
    final: ReducedState
    success: bool
    goal_distance: float
    divergence_index: int | None
    reduced_trace: list[ReducedState] = field(default_factory=list)


def execute(domain: Domain, path: Path, x0: TrueState, env: Environment, goal: GoalSpec, seed: int = 0) -> ExecutionReport:
    """Roll the plan out under the true dynamics, one transition at a time."""
    trace = [x0]
    for t in path.transitions:
        trace.append(domain.rollout(trace[-1], t.u, env, seed))
    reduced = [domain.reduce(x, env) for x in trace]
    divergence = None
    for k, (pred, got) in enumerate(zip(path.states, reduced)):
        if not domain.close(pred, got, env):
            divergence = k
            break
    final = reduced[-1]
    dist = domain.goal_distance(final, goal)
    return ExecutionReport(trace, final, dist <= goal.tolerance, dist, divergence, reduced)

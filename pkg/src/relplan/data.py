"""Training data: plan without a classifier, roll out, reduce, label.

A transition is Reliable only if the plan and the rollout agree (under the
domain's ``close``) both before and after it. If they already disagree
before the transition there is no meaningful ground truth, and it is labeled
Unreliable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Domain, Environment, GoalSpec, Label, PlanNotFound, ReducedState, Transition, TrueState
from .planner import PlannerConfig, RRTConnect

log = logging.getLogger(__name__)


@dataclass
class Episode:
    plan: list[Transition]
    rollout_trace: list[TrueState]
    reduced_trace: list[ReducedState]
    env_id: str
    seed: int
    goal: GoalSpec | None = None


@dataclass
class LabeledTransition:
    transition: Transition
    next_predicted: ReducedState
    label: Label
    plan_id: int
    t: int


def label_from_close(close_before: bool, close_after: bool) -> Label:
    return Label.RELIABLE if (close_before and close_after) else Label.UNRELIABLE


def rollout_plan(domain: Domain, plan: list[Transition], x0: TrueState, env: Environment, seed: int = 0) -> Episode:
    trace = [x0]
    for t in plan:
        trace.append(domain.rollout(trace[-1], t.u, env, seed))
    return Episode(list(plan), trace, [domain.reduce(x, env) for x in trace], env.id, seed)


def generate_episode(
    domain: Domain,
    env: Environment,
    seed: int,
    planner: PlannerConfig | None = None,
    smooth: bool = True,
) -> Episode:
    """One random query, planned without a classifier and executed.

    Raises :class:`PlanNotFound` when the planner gives up.
    """
    rng = np.random.default_rng(seed)
    x0, goal = domain.sample_training_query(rng, env)
    base = planner or PlannerConfig()
    cfg = PlannerConfig(
        k=base.k,
        goal_bias=base.goal_bias,
        max_iterations=base.max_iterations,
        timeout=base.timeout,
        seed=int(rng.integers(2**63)),
        classifier=None,
        extend_substeps=base.extend_substeps,
        smoothing_attempts=base.smoothing_attempts,
    )
    rrt = RRTConnect(domain, env, cfg)
    path = rrt.plan(domain.reduce(x0, env), goal)
    if smooth:
        path = rrt.smooth(path)
    ep = rollout_plan(domain, path.transitions, x0, env, seed)
    ep.goal = goal
    return ep


def generate_episodes(domain: Domain, env: Environment, n: int, seed: int, planner: PlannerConfig | None = None, smooth: bool = True):
    """Yield ``n`` episodes; seeds whose query cannot be planned are skipped."""
    made = 0
    s = seed
    while made < n:
        try:
            ep = generate_episode(domain, env, s, planner, smooth)
        except PlanNotFound as e:
            log.info("seed %d skipped: %s", s, e)
        else:
            made += 1
            yield ep
        s += 1


def label_episode(domain: Domain, ep: Episode, env: Environment, plan_id: int = 0) -> list[LabeledTransition]:
    out = []
    for t, tr in enumerate(ep.plan):
        pred_next = domain.reduced_step(tr.b, tr.u, env)
        before = domain.close(tr.b, ep.reduced_trace[t], env)
        after = domain.close(pred_next, ep.reduced_trace[t + 1], env)
        out.append(LabeledTransition(tr, pred_next, label_from_close(before, after), plan_id, t))
    return out


# -- dataset records ---------------------------------------------------------------


class DatasetError(ValueError):
    pass


@dataclass
class Record:
    domain: str
    env_id: str
    plan_id: int
    t: int
    features: np.ndarray
    label: int

    def to_json(self) -> str:
        feats = self.features
        if np.all(feats == np.round(feats)) and np.all(np.abs(feats) < 2**31):
            vals = [int(v) for v in feats]
        else:
            vals = [float(v) for v in feats]
        return json.dumps(
            {
                "domain": self.domain,
                "env_id": self.env_id,
                "plan_id": self.plan_id,
                "t": self.t,
                "features": vals,
                "label": int(self.label),
            },
            separators=(",", ":"),
        )


def records_from_episode(domain: Domain, ep: Episode, env: Environment, plan_id: int) -> list[Record]:
    return [
        Record(
            domain.name,
            env.id,
            plan_id,
            lt.t,
            np.asarray(domain.featurize(lt.transition, env, lt.next_predicted), dtype=float),
            int(lt.label),
        )
        for lt in label_episode(domain, ep, env, plan_id)
    ]


def build_dataset(
    domain: Domain,
    env: Environment,
    n_transitions: int,
    seed: int,
    planner: PlannerConfig | None = None,
    progress=None,
    n_episodes: int | None = None,
) -> list[Record]:
    """Collect at least ``n_transitions`` labeled records (whole episodes only),
    or exactly ``n_episodes`` episodes when that is given."""
    records: list[Record] = []
    for plan_id, ep in enumerate(generate_episodes(domain, env, n_episodes or 10**9, seed, planner)):
        records.extend(records_from_episode(domain, ep, env, plan_id))
        if progress is not None:
            progress(plan_id, len(records))
        if n_episodes is None and len(records) >= n_transitions:
            break
    return records


def to_arrays(records: list[Record]) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        return np.zeros((0, 0)), np.zeros(0, dtype=int)
    return np.stack([r.features for r in records]), np.array([r.label for r in records], dtype=int)


def class_balance(records: list[Record]) -> float:
    """Fraction of records labeled Unreliable."""
    if not records:
        return float("nan")
    return sum(1 for r in records if r.label == Label.UNRELIABLE) / len(records)


_FIELDS = {"domain": str, "env_id": str, "plan_id": int, "t": int, "features": list, "label": int}


def write_dataset(path, records: list[Record]) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(r.to_json() + "\n")


def read_dataset(path) -> list[Record]:
    out = []
    with open(path) as f:
        for n, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{n}: invalid JSON ({e})") from None
            for key, typ in _FIELDS.items():
                if key not in d:
                    raise DatasetError(f"{path}:{n}: missing field {key!r}")
                if not isinstance(d[key], typ) or (typ is int and isinstance(d[key], bool)):
                    raise DatasetError(f"{path}:{n}: field {key!r} has wrong type")
            if d["label"] not in (0, 1):
                raise DatasetError(f"{path}:{n}: label must be 0 or 1")
            feats = np.array(d["features"], dtype=float)
            if feats.ndim != 1 or not np.all(np.isfinite(feats)):
                raise DatasetError(f"{path}:{n}: features must be a flat list of finite numbers")
            out.append(Record(d["domain"], d["env_id"], d["plan_id"], d["t"], feats, d["label"]))
    return out

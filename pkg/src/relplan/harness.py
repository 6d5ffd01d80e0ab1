"""Experiment driver: paired classifier-vs-none comparisons and output files.

Each trial is a pure function of (config, scene, arm, query index), so trials
can be fanned out to worker processes and the aggregate is independent of the
order in which they finish.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path as FsPath

import numpy as np

from .classifier import NetworkParams, load_params
from .core import Domain, Environment, PlanNotFound, load_scene
from .planner import NetworkClassifier, PlannerConfig, RRTConnect, execute

ARMS = ("none", "trained")

_DEFAULT_QUERIES = {"arm": 100, "tether": 30, "car": 30}
_DEFAULT_SCENES = {"arm": ("arm_free",), "tether": ("simple_hook_2d",), "car": ("car_gap",)}
_DEFAULT_K = {"arm": 1.0, "tether": 10.0, "car": 1.0}
_ARM_BETAS = tuple(round(0.05 * i, 2) for i in range(1, 13))


@dataclass
class ExperimentConfig:
    domain: str = "arm"
    scenes: tuple[str, ...] = ()  # a tether scene may carry a rope length: "simple_hook_2d@1.1"
    n_queries: int = 0  # 0 picks the per-domain default
    k: float | None = None
    p_acc: float | None = None  # None uses the model's recorded validation accuracy
    seed: int = 0
    betas: tuple[float, ...] | None = None
    out_dir: str = "results"
    model: str | None = None
    success_tol: float | None = None  # None uses the query's own tolerance (arm: alpha)
    max_iterations: int = 20000
    # the iteration budget is what bounds a trial; the wall-clock limit is only a
    # safety net, since hitting it would make results depend on machine speed
    timeout: float = 3600.0
    smoothing_attempts: int = 200
    jobs: int = 1

    def __post_init__(self):
        if isinstance(self.scenes, str):
            self.scenes = tuple(s for s in self.scenes.split(",") if s)
        self.scenes = tuple(self.scenes) or _DEFAULT_SCENES.get(self.domain, ())
        if not self.n_queries:
            self.n_queries = _DEFAULT_QUERIES.get(self.domain, 30)
        if self.k is None:
            self.k = _DEFAULT_K.get(self.domain, 1.0)
        if self.success_tol is None and self.domain == "arm":
            from .domains.arm import ArmParams

            self.success_tol = ArmParams().alpha
        if isinstance(self.betas, str):
            self.betas = tuple(float(b) for b in self.betas.split(",") if b)
        if self.betas is None:
            self.betas = _ARM_BETAS if self.domain == "arm" else ()
        self.betas = tuple(float(b) for b in self.betas)
        if self.n_queries <= 0:
            raise ValueError("n_queries must be positive")
        if any(b <= 0 for b in self.betas) or any(b2 <= b1 for b1, b2 in zip(self.betas, self.betas[1:])):
            raise ValueError("betas must be positive and strictly ascending")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        """Build from string values such as those in a key=value config file."""
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kw[key] = _coerce(types[key], raw)
        return cls(**kw)


def _coerce(type_name: str, raw):
    if not isinstance(raw, str):
        return raw
    t = str(type_name)
    if raw.lower() in ("none", "") and "None" in t:
        return None
    if t.startswith("int"):
        return int(raw)
    if t.startswith("float"):
        return float(raw)
    return raw


@dataclass
class TrialResult:
    scene: str
    classifier: str
    query: int
    found: bool
    success: bool
    goal_distance: float  # inf when no plan was found
    plan_time: float
    smooth_time: float
    n_transitions: int


@dataclass
class ResultRow:
    scene: str
    classifier: str
    successes: int
    trials: int
    mean_plan_time: float
    mean_smooth_time: float
    goal_distances: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes must be in [0, trials]")


# -- scenes and domains ------------------------------------------------------------


def parse_scene(entry: str) -> tuple[str, float | None]:
    name, _, length = entry.partition("@")
    return name, (float(length) if length else None)


def build_domain(domain: str, scene: str) -> tuple[Domain, Environment]:
    name, length = parse_scene(scene)
    env = load_scene(name)
    if domain == "arm":
        from .domains.arm import ArmDomain

        return ArmDomain(), env
    if domain == "car":
        from .domains.car import CarDomain

        return CarDomain(), env
    if domain == "tether":
        from .domains.tether import TetherDomain, TetherParams, load_query_regions

        params = TetherParams() if length is None else TetherParams(rest_length=length)
        return TetherDomain(params, load_query_regions(name)), env
    raise ValueError(f"unknown domain {domain!r}")


def query_rng(seed: int, scene: str, i: int) -> np.random.Generator:
    """RNG for the i-th query of a scene; shared by both arms of a comparison."""
    return np.random.default_rng([int(seed), zlib.crc32(scene.encode()), int(i)])


# -- trials ------------------------------------------------------------------------


def run_trial(cfg: ExperimentConfig, scene: str, arm: str, i: int, params: NetworkParams | None = None) -> TrialResult:
    d, env = build_domain(cfg.domain, scene)
    rng = query_rng(cfg.seed, scene, i)
    x0, goal = d.sample_query(rng, env)
    plan_seed = int(rng.integers(2**63))
    classifier = None
    if arm == "trained":
        if params is None:
            raise ValueError("the trained arm needs a model")
        classifier = NetworkClassifier(params, d)
    pcfg = PlannerConfig(
        k=cfg.k,
        p_acc=cfg.p_acc,
        max_iterations=cfg.max_iterations,
        timeout=cfg.timeout,
        seed=plan_seed,
        classifier=classifier,
        smoothing_attempts=cfg.smoothing_attempts,
    )
    rrt = RRTConnect(d, env, pcfg)
    tol = goal.tolerance if cfg.success_tol is None else cfg.success_tol
    t0 = time.perf_counter()
    try:
        path = rrt.plan(d.reduce(x0, env), goal)
    except PlanNotFound:
        return TrialResult(scene, arm, i, False, False, math.inf, time.perf_counter() - t0, 0.0, 0)
    t1 = time.perf_counter()
    path = rrt.smooth(path)
    t2 = time.perf_counter()
    rep = execute(d, path, x0, env, goal, seed=plan_seed % (2**31))
    return TrialResult(scene, arm, i, True, bool(rep.goal_distance < tol), rep.goal_distance, t1 - t0, t2 - t1, len(path))


def _trial_job(args):
    cfg, scene, arm, i, params = args
    return run_trial(cfg, scene, arm, i, params)


def run_trials(cfg: ExperimentConfig, params: NetworkParams | None = None, arms=ARMS) -> list[TrialResult]:
    jobs = [(cfg, s, a, i, params if a == "trained" else None) for s in cfg.scenes for a in arms for i in range(cfg.n_queries)]
    if cfg.jobs == 1:
        out = [_trial_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            out = list(ex.map(_trial_job, jobs, chunksize=4))
    return sorted(out, key=lambda t: (t.scene, t.classifier, t.query))


def aggregate(trials: list[TrialResult]) -> list[ResultRow]:
    groups: dict[tuple[str, str], list[TrialResult]] = {}
    for t in trials:
        groups.setdefault((t.scene, t.classifier), []).append(t)
    rows = []
    for (scene, arm), ts in sorted(groups.items()):
        ts = sorted(ts, key=lambda t: t.query)
        rows.append(
            ResultRow(
                scene,
                arm,
                sum(t.success for t in ts),
                len(ts),
                float(np.mean([t.plan_time for t in ts])),
                float(np.mean([t.smooth_time for t in ts])),
                tuple(t.goal_distance for t in ts),
            )
        )
    return rows


def run_comparison(cfg: ExperimentConfig, params: NetworkParams | None = None, arms=ARMS) -> list[ResultRow]:
    if "trained" in arms and params is None:
        if cfg.model is None:
            raise ValueError("the trained arm needs a model")
        params = load_params(cfg.model)
    return aggregate(run_trials(cfg, params, arms))


def beta_sweep(rows: list[ResultRow], betas) -> list[tuple[float, str, str, int, int]]:
    """``(beta, scene, classifier, successes, trials)`` with success meaning final distance < beta."""
    out = []
    for beta in betas:
        for r in rows:
            out.append((float(beta), r.scene, r.classifier, sum(d < beta for d in r.goal_distances), r.trials))
    return out


# -- output files ------------------------------------------------------------------

RESULT_COLUMNS = ("scene", "classifier", "successes", "trials")
SWEEP_COLUMNS = ("beta", "scene", "classifier", "successes", "trials")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def results_csv(rows: list[ResultRow]) -> str:
    return _csv_text(RESULT_COLUMNS, [(r.scene, r.classifier, r.successes, r.trials) for r in rows])


def sweep_csv(sweep) -> str:
    return _csv_text(SWEEP_COLUMNS, [(f"{b:.4f}", s, c, n, t) for b, s, c, n, t in sweep])


def read_results(path) -> list[ResultRow]:
    with open(path, newline="") as f:
        return [ResultRow(r["scene"], r["classifier"], int(r["successes"]), int(r["trials"]), math.nan, math.nan) for r in csv.DictReader(f)]


def read_sweep(path):
    with open(path, newline="") as f:
        return [(float(r["beta"]), r["scene"], r["classifier"], int(r["successes"]), int(r["trials"])) for r in csv.DictReader(f)]


def emit_outputs(rows: list[ResultRow], out_dir, betas=()) -> list[FsPath]:
    """Write ``results.csv``, ``success_vs_beta.csv`` and their SVG plots.

    The CSV and SVG files depend only on the rows. Wall-clock timings go to
    ``timings.json`` because they differ from run to run.
    """
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sweep = beta_sweep(rows, betas)
    files = {
        "results.csv": results_csv(rows),
        "success_vs_beta.csv": sweep_csv(sweep),
        "results.svg": results_svg(rows),
        "success_vs_beta.svg": sweep_svg(sweep),
    }
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        written.append(p)
    timings = [
        {"scene": r.scene, "classifier": r.classifier, "mean_plan_time_s": r.mean_plan_time, "mean_smooth_time_s": r.mean_smooth_time}
        for r in rows
    ]
    p = out / "timings.json"
    p.write_text(json.dumps(timings, indent=1) + "\n")
    written.append(p)
    return written


# -- minimal SVG writer ------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def line_plot(series: dict[str, tuple[list[float], list[float]]], title: str, xlabel: str, ylabel: str,
              xticks: list[tuple[float, str]] | None = None, width: int = 480, height: int = 320) -> str:
    """One polyline per series on shared linear axes."""
    left, right, top, bottom = 60, 130, 30, 45
    xs = [x for v in series.values() for x in v[0]] or [0.0, 1.0]
    ys = [y for v in series.values() for y in v[1]] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(ys)), max(ys)
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-12:
        y1 = y0 + 1.0
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="11">{_esc(xlabel)}</text>',
        f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="11" transform="rotate(-90 14 {top + ph / 2:.1f})">{_esc(ylabel)}</text>',
    ]
    ticks = xticks if xticks is not None else [(x0 + (x1 - x0) * i / 4, f"{x0 + (x1 - x0) * i / 4:.2f}") for i in range(5)]
    for x, lab in ticks:
        out.append(f'<text x="{sx(x):.1f}" y="{top + ph + 15}" text-anchor="middle" font-size="10">{_esc(lab)}</text>')
    for i in range(5):
        y = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{left - 6}" y="{sy(y) + 3:.1f}" text-anchor="end" font-size="10">{y:.3g}</text>')
    for n, (name, (px, py)) in enumerate(sorted(series.items())):
        color = _COLORS[n % len(_COLORS)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(px, py))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = top + 14 * n + 8
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly + 4}" font-size="10">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def results_svg(rows: list[ResultRow]) -> str:
    scenes = sorted({r.scene for r in rows})
    series: dict[str, tuple[list[float], list[float]]] = {}
    for r in rows:
        xs, ys = series.setdefault(r.classifier, ([], []))
        xs.append(float(scenes.index(r.scene)))
        ys.append(r.successes / r.trials if r.trials else 0.0)
    return line_plot(series, "Success rate by scene", "scene", "success rate", [(float(i), s) for i, s in enumerate(scenes)])


def sweep_svg(sweep) -> str:
    series: dict[str, tuple[list[float], list[float]]] = {}
    for beta, scene, arm, n, _ in sweep:
        xs, ys = series.setdefault(f"{scene}/{arm}", ([], []))
        xs.append(beta)
        ys.append(float(n))
    return line_plot(series, "Successes vs threshold", "beta", "successes")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)

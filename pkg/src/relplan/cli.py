"""Command-line entry point: ``relplan VERB [options]``.

Verbs: gen-data, train, plan, exec, eval, plot. Global options come before
the verb. ``--config FILE`` reads ``key=value`` lines; a key supplies the
default for the option of the same name (dashes become underscores) and,
for ``eval``, any ExperimentConfig field. Options given on the command line
win over the file.

Exit codes: 0 on success, 2 when the only failure is that no plan was found,
1 on any other error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path as FsPath

import numpy as np

from . import harness
from .classifier import TrainConfig, load_params, save_params, train
from .core import GoalSpec, PlanNotFound
from .data import build_dataset, class_balance, read_dataset, to_arrays, write_dataset
from .planner import NetworkClassifier, Path, PlannerConfig, RRTConnect, _make_path, execute

log = logging.getLogger("relplan")

EXIT_OK, EXIT_ERROR, EXIT_NO_PLAN = 0, 1, 2


def read_config(path) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for n, line in enumerate(FsPath(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _dump(path, obj) -> None:
    FsPath(path).parent.mkdir(parents=True, exist_ok=True)
    FsPath(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _scene(args) -> str:
    return args.scene or harness._DEFAULT_SCENES[args.domain][0]


# -- verbs -------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    d, env = harness.build_domain(args.domain, _scene(args))
    records = build_dataset(
        d, env, args.transitions, args.seed, PlannerConfig(max_iterations=args.max_iterations),
        progress=lambda i, n: log.info("episode %d, %d records", i, n), n_episodes=args.episodes,
    )
    if not records:
        return EXIT_NO_PLAN
    write_dataset(args.out, records)
    log.info("%d records, %.3f Unreliable", len(records), class_balance(records))
    return EXIT_OK


def cmd_train(args) -> int:
    x, y = to_arrays(read_dataset(args.data))
    cfg = TrainConfig(epochs=args.epochs, val_fraction=args.val_fraction, seed=args.seed, feature_schema=args.schema or "")
    params, metrics = train(x, y, cfg, on_epoch=lambda r: log.info("epoch %d val_acc %.4f", r["epoch"], r["val_acc"]))
    save_params(params, args.out)
    metrics_path = args.metrics or str(FsPath(args.out).with_suffix(".metrics.csv"))
    FsPath(metrics_path).write_text(metrics.csv())
    sys.stdout.write(metrics.csv())
    log.info("p_acc %.4f", params.p_acc)
    return EXIT_OK


def _query_json(d, x0, goal: GoalSpec) -> dict:
    return {"x0": d.true_state_to_json(x0), "goal": {"targets": goal.targets.tolist(), "tolerance": goal.tolerance}}


def cmd_plan(args) -> int:
    scene = _scene(args)
    d, env = harness.build_domain(args.domain, scene)
    rng = harness.query_rng(args.seed, scene, args.query)
    x0, goal = d.sample_query(rng, env)
    plan_seed = int(rng.integers(2**63))
    classifier = None
    if args.model and args.model != "none":
        classifier = NetworkClassifier(load_params(args.model), d)
    cfg = PlannerConfig(k=args.k, p_acc=args.p_acc, seed=plan_seed, classifier=classifier, max_iterations=args.max_iterations)
    rrt = RRTConnect(d, env, cfg)
    out = {"domain": args.domain, "scene": scene, "seed": args.seed, "query_index": args.query, "plan_seed": plan_seed,
           "query": _query_json(d, x0, goal)}
    try:
        path = rrt.smooth(rrt.plan(d.reduce(x0, env), goal))
    except PlanNotFound as e:
        out["error"] = str(e)
        _dump(args.out, out)
        log.warning("no plan: %s", e)
        return EXIT_NO_PLAN
    out["states"] = [d.state_to_json(s) for s in path.states]
    out["commands"] = [t.u.u.tolist() for t in path.transitions]
    _dump(args.out, out)
    return EXIT_OK


def _load_plan(d, env, doc) -> Path:
    from .core import Command

    states = [d.state_from_json(s) for s in doc["states"]]
    cmds = [Command(d.name, u) for u in doc["commands"]]
    return _make_path(states, cmds, env)


def cmd_exec(args) -> int:
    doc = json.loads(FsPath(args.plan).read_text())
    d, env = harness.build_domain(doc["domain"], doc["scene"])
    if "states" not in doc:
        log.warning("plan file holds no path: %s", doc.get("error"))
        return EXIT_NO_PLAN
    q = doc["query"]
    x0 = d.true_state_from_json(q["x0"])
    goal = GoalSpec(np.asarray(q["goal"]["targets"]), q["goal"]["tolerance"])
    rep = execute(d, _load_plan(d, env, doc), x0, env, goal, seed=doc["plan_seed"] % (2**31))
    _dump(args.out, {
        "success": rep.success,
        "goal_distance": rep.goal_distance,
        "divergence_index": rep.divergence_index,
        "final": d.state_to_json(rep.final),
        "trace": [d.true_state_to_json(x) for x in rep.trace],
    })
    return EXIT_OK


def cmd_eval(args, file_cfg: dict) -> int:
    values = {k: v for k, v in file_cfg.items() if k in {f for f in harness.ExperimentConfig.__dataclass_fields__}}
    for item in args.set or []:
        k, _, v = item.partition("=")
        values[k.strip().replace("-", "_")] = v.strip()
    for key in ("domain", "model", "out_dir"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    values["seed"] = str(args.seed)
    values["jobs"] = str(args.jobs)
    cfg = harness.ExperimentConfig.from_mapping(values)
    rows = harness.run_comparison(cfg)
    harness.emit_outputs(rows, cfg.out_dir, cfg.betas)
    for r in rows:
        log.info("%s %s %d/%d", r.scene, r.classifier, r.successes, r.trials)
    return EXIT_OK


def cmd_plot(args) -> int:
    out = FsPath(args.dir)
    rows = harness.read_results(out / "results.csv")
    (out / "results.svg").write_text(harness.results_svg(rows))
    sweep_file = out / "success_vs_beta.csv"
    if sweep_file.exists():
        (out / "success_vs_beta.svg").write_text(harness.sweep_svg(harness.read_sweep(sweep_file)))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relplan", description="Reliability-aware planning in reduced state spaces.")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--config", default=None, help="key=value file supplying option defaults")
    ap.add_argument("--jobs", type=int, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen-data", help="plan without a classifier, execute and label transitions")
    g.add_argument("--domain", choices=("arm", "car", "tether"))
    g.add_argument("--scene", "--env", dest="scene", help="shipped scene name or scene JSON file")
    g.add_argument("--transitions", type=int, help="stop once this many records exist")
    g.add_argument("--episodes", type=int, help="stop after this many episodes instead")
    g.add_argument("--max-iterations", type=int)
    g.add_argument("--out")

    t = sub.add_parser("train", help="train a reliability classifier")
    t.add_argument("--data")
    t.add_argument("--out")
    t.add_argument("--epochs", type=int)
    t.add_argument("--val-fraction", "--val-frac", dest="val_fraction", type=float)
    t.add_argument("--metrics")
    t.add_argument("--schema")

    p = sub.add_parser("plan", help="plan one sampled query")
    p.add_argument("--domain", choices=("arm", "car", "tether"))
    p.add_argument("--scene", "--env", dest="scene", help="shipped scene name or scene JSON file")
    p.add_argument("--model", help="model file, or 'none' for no classifier")
    p.add_argument("--query", type=int, help="query index")
    p.add_argument("--k", type=float)
    p.add_argument("--p-acc", type=float)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--out")

    e = sub.add_parser("exec", help="execute a plan file under the true dynamics")
    e.add_argument("--plan")
    e.add_argument("--out")

    v = sub.add_parser("eval", help="paired classifier-vs-none comparison")
    v.add_argument("--domain", choices=("arm", "car", "tether"))
    v.add_argument("--model")
    v.add_argument("--out-dir")
    v.add_argument("--set", action="append", help="extra key=value for the experiment config")

    pl = sub.add_parser("plot", help="re-render SVG plots from the CSV files in a directory")
    pl.add_argument("--dir")
    return ap


_DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "domain": "arm",
    "transitions": 20000,
    "max_iterations": 20000,
    "epochs": 64,
    "val_fraction": 0.2,
    "query": 0,
    "k": 1.0,
    "model": "none",
}

_REQUIRED = {"gen-data": ("out",), "train": ("data", "out"), "plan": ("out",), "exec": ("plan", "out"), "plot": ("dir",)}

_TYPES = {"seed": int, "jobs": int, "transitions": int, "episodes": int, "max_iterations": int, "epochs": int, "query": int,
          "val_fraction": float, "k": float, "p_acc": float}


def _fill(args, file_cfg: dict) -> None:
    """Command line first, then the config file, then built-in defaults."""
    for key, value in vars(args).items():
        if value is not None or key in ("verb", "config", "set"):
            continue
        if key in file_cfg:
            setattr(args, key, _TYPES.get(key, str)(file_cfg[key]))
        elif key in _DEFAULTS and not (args.verb == "eval" and key in ("domain", "model")):
            setattr(args, key, _DEFAULTS[key])
    for key in _REQUIRED.get(args.verb, ()):
        if getattr(args, key) is None:
            raise ValueError(f"--{key.replace('_', '-')} is required")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        file_cfg = read_config(args.config) if args.config else {}
        _fill(args, file_cfg)
        if args.verb == "eval":
            return cmd_eval(args, file_cfg)
        return {"gen-data": cmd_gen_data, "train": cmd_train, "plan": cmd_plan, "exec": cmd_exec, "plot": cmd_plot}[args.verb](args)
    except PlanNotFound as e:
        log.error("no plan: %s", e)
        return EXIT_NO_PLAN
    except Exception as e:  # noqa: BLE001 - report and map to the error exit code
        log.error("%s: %s", type(e).__name__, e)
        if args.verbose:
            raise
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: task generation, curation, training, evaluation,
single-decision planning, and report rendering.

A JSON config file supplies default option values; explicit flags always
win. The PUZZLERL_OUT environment variable sets the fallback output
directory for evaluation reports.
"""

import argparse
from dataclasses import replace
import json
import os
import sys

from .actions import action_to_jsonable
from .curation import curate_dataset, default_config, load_dataset, records_to_training
from .harness import (
    RunConfig,
    compare_reports,
    default_out_dir,
    evaluate,
    render_report_file,
    render_table,
    train_policy,
    write_report,
)
from .planner import PlannerConfig, plan, write_trace
from .policy import Policy
from .sim.bodies import load_scene
from .tasks import generate_suite, load_suite, save_suite
from .worldmodel import WorldModel, train_world_model

_DEFAULTS = {
    "gen-tasks": {"env": "griddrop", "count": 20, "seed": 0, "out": None},
    "curate": {"suite": None, "out": None, "seed": 0, "eps": None,
               "max_draws": None},
    "train-wm": {"dataset": None, "env": None, "epochs": 30, "lr": 0.01,
                 "seed": 0, "label_col": "label", "out": None},
    "train-policy": {"suite": None, "tasks": None, "iters": 50, "seed": 0,
                     "group_size": 8, "max_turns": 10, "lr": 0.01,
                     "out": None, "metrics": None},
    "eval": {"agent": "mock", "env": "griddrop", "tasks": 20, "k": 10,
             "runs": 3, "seed": 0, "task_seed": None, "suite": None,
             "policy": None, "wm": None, "strategy": 1,
             "planner_samples": 32, "planner_budget": 32, "out": None},
    "plan": {"scene": None, "suite": None, "index": 0, "policy": None,
             "wm": None, "seed": 0, "strategy": 1, "samples": 32,
             "budget": 32, "trace": None},
    "report": {},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="puzzlerl",
        description="physics puzzle RL: tasks, curation, training, eval",
    )
    parser.add_argument("--config", default=None,
                        help="JSON file of option defaults; flags override")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-tasks", help="generate a solvable task suite")
    g.add_argument("--env", choices=("griddrop", "timedremove"))
    g.add_argument("--count", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="suite directory to write")

    c = sub.add_parser("curate", help="build a balanced outcome dataset")
    c.add_argument("--suite", help="task suite directory")
    c.add_argument("--out", help="dataset directory to write")
    c.add_argument("--seed", type=int)
    c.add_argument("--eps", type=float, help="diversity distance threshold")
    c.add_argument("--max-draws", type=int)

    w = sub.add_parser("train-wm", help="train the outcome model")
    w.add_argument("--dataset", help="dataset.jsonl path")
    w.add_argument("--env", choices=("griddrop", "timedremove"))
    w.add_argument("--epochs", type=int)
    w.add_argument("--lr", type=float)
    w.add_argument("--seed", type=int)
    w.add_argument("--label-col", choices=("label", "label_terminal"),
                   help="which outcome labeling to fit")
    w.add_argument("--out", help="checkpoint path to write")

    t = sub.add_parser("train-policy", help="group-relative policy training")
    t.add_argument("--suite", help="task suite directory")
    t.add_argument("--tasks", type=int, help="use only the first N tasks")
    t.add_argument("--iters", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--group-size", type=int)
    t.add_argument("--max-turns", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--out", help="checkpoint path to write")
    t.add_argument("--metrics", help="metrics jsonl path")

    e = sub.add_parser("eval", help="attempt-protocol evaluation")
    e.add_argument("--agent", choices=("mock", "policy-only", "full"))
    e.add_argument("--env", choices=("griddrop", "timedremove"))
    e.add_argument("--tasks", type=int)
    e.add_argument("--k", type=int, help="attempt limit per episode")
    e.add_argument("--runs", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--task-seed", type=int)
    e.add_argument("--suite", help="evaluate an existing suite directory")
    e.add_argument("--policy", help="policy checkpoint")
    e.add_argument("--wm", help="outcome model checkpoint")
    e.add_argument("--strategy", type=int, choices=(1, 2))
    e.add_argument("--planner-samples", type=int)
    e.add_argument("--planner-budget", type=int)
    e.add_argument("--out", help="report directory")

    p = sub.add_parser("plan", help="one planned decision with a trace")
    p.add_argument("--scene", help="scene file")
    p.add_argument("--suite", help="suite directory (with --index)")
    p.add_argument("--index", type=int)
    p.add_argument("--policy", help="policy checkpoint")
    p.add_argument("--wm", help="outcome model checkpoint")
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", type=int, choices=(1, 2))
    p.add_argument("--samples", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--trace", help="trace file to write")

    r = sub.add_parser("report", help="render or compare report files")
    r.add_argument("paths", nargs="+", help="report.jsonl file(s)")
    r.add_argument("--out", default=None, help="write instead of printing")

    return parser


def _load_config(parser, path):
    if path is None:
        return {}
    if not os.path.exists(path):
        parser.error(f"config file not found: {path}")
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        parser.error(f"malformed config: {exc}")
    if not isinstance(data, dict):
        parser.error("config must be a JSON object of option values")
    return data


def _merge(parser, args, command) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(_DEFAULTS[command])
    for key, value in _load_config(parser, args.config).items():
        k = key.replace("-", "_")
        if k in merged:
            merged[k] = value
    for key in merged:
        given = getattr(args, key, None)
        if given is not None:
            merged[key] = given
    return merged


def _need(parser, value, what):
    if value is None:
        parser.error(f"{what} is required")
    return value


def _need_path(parser, value, what):
    _need(parser, value, what)
    if not os.path.exists(value):
        parser.error(f"{what} not found: {value}")
    return value


def _cmd_gen_tasks(parser, m) -> int:
    out = _need(parser, m["out"], "--out")
    tasks, infos = generate_suite(m["env"], m["count"], m["seed"])
    save_suite(tasks, infos, out)
    mean_sols = sum(i["solutions"] for i in infos) / len(infos)
    print(f"wrote {len(tasks)} {m['env']} tasks to {out} "
          f"(mean solutions {mean_sols:.1f})")
    return 0


def _cmd_curate(parser, m) -> int:
    suite = _need_path(parser, m["suite"], "--suite")
    out = _need(parser, m["out"], "--out")
    tasks, _ = load_suite(suite)
    config = default_config(tasks[0].env, m["seed"])
    if m["eps"] is not None:
        config = replace(config, eps_div=m["eps"])
    if m["max_draws"] is not None:
        config = replace(config, max_draws=m["max_draws"])
    manifest = curate_dataset(tasks, config, out)
    counts = manifest["counts"]
    print(f"curated {counts['records']} records "
          f"({counts['positive']} positive / {counts['negative']} negative), "
          f"skipped {len(manifest['skipped'])} tasks -> {out}")
    return 0


def _cmd_train_wm(parser, m) -> int:
    dataset = _need_path(parser, m["dataset"], "--dataset")
    out = _need(parser, m["out"], "--out")
    records = load_dataset(dataset)
    if not records:
        parser.error(f"dataset is empty: {dataset}")
    env = m["env"] or records[0]["env"]
    rows = records_to_training(records, label_col=m["label_col"])
    model = WorldModel.create(env, seed=m["seed"])
    history = train_world_model(model, rows, epochs=m["epochs"],
                                lr=m["lr"], seed=m["seed"])
    model.save(out)
    print(f"trained {env} model on {len(rows)} records, "
          f"final epoch loss {history[-1]:.4f} -> {out}")
    return 0


def _cmd_train_policy(parser, m) -> int:
    suite = _need_path(parser, m["suite"], "--suite")
    out = _need(parser, m["out"], "--out")
    tasks, _ = load_suite(suite)
    if m["tasks"] is not None:
        tasks = tasks[:m["tasks"]]
    policy, metrics = train_policy(
        tasks, iters=m["iters"], seed=m["seed"],
        group_size=m["group_size"], max_turns=m["max_turns"], lr=m["lr"],
        metrics_path=m["metrics"],
    )
    policy.save(out)
    last = metrics[-1] if metrics else {}
    print(f"trained policy for {m['iters']} iterations "
          f"(last mean reward {last.get('mean_reward', 0.0):.3f}) -> {out}")
    return 0


def _cmd_eval(parser, m) -> int:
    if m["suite"] is not None:
        _need_path(parser, m["suite"], "--suite")
    if m["policy"] is not None:
        _need_path(parser, m["policy"], "--policy")
    if m["wm"] is not None:
        _need_path(parser, m["wm"], "--wm")
    config = RunConfig(
        env=m["env"], agent=m["agent"], tasks=m["tasks"], k=m["k"],
        runs=m["runs"], seed=m["seed"], task_seed=m["task_seed"],
        suite_dir=m["suite"], policy_path=m["policy"], wm_path=m["wm"],
        strategy=m["strategy"], planner_samples=m["planner_samples"],
        planner_budget=m["planner_budget"],
    )
    results = evaluate(config)
    out_dir = m["out"] or default_out_dir()
    paths = write_report(results, out_dir)
    print(render_table(results), end="")
    print(f"report: {paths['jsonl']}")
    return 0


def _cmd_plan(parser, m) -> int:
    if m["scene"] is not None:
        scene = load_scene(_need_path(parser, m["scene"], "--scene"))
    elif m["suite"] is not None:
        tasks, _ = load_suite(_need_path(parser, m["suite"], "--suite"))
        if not 0 <= m["index"] < len(tasks):
            parser.error(f"--index out of range 0..{len(tasks) - 1}")
        scene = tasks[m["index"]].scene
    else:
        parser.error("plan needs --scene or --suite")
    if m["policy"] is not None:
        policy = Policy.load(_need_path(parser, m["policy"], "--policy"))
    else:
        policy = Policy.create(scene.env, seed=m["seed"])
    if m["wm"] is not None:
        model = WorldModel.load(_need_path(parser, m["wm"], "--wm"))
    else:
        model = WorldModel.create(scene.env, seed=m["seed"])
    config = PlannerConfig(samples=m["samples"], budget=m["budget"],
                           strategy=m["strategy"])
    action, trace = plan(scene, (), policy, model, config, m["seed"])
    if m["trace"] is not None:
        write_trace(trace, m["trace"])
    result = trace[-1]
    print(json.dumps({
        "action": action_to_jsonable(action),
        "stop": result["stop"],
        "iterations": result["iterations"],
    }))
    return 0


def _cmd_report(parser, args) -> int:
    for path in args.paths:
        _need_path(parser, path, "report file")
    if len(args.paths) == 1:
        text = render_report_file(args.paths[0])
    else:
        text = compare_reports(args.paths)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


_HANDLERS = {
    "gen-tasks": _cmd_gen_tasks,
    "curate": _cmd_curate,
    "train-wm": _cmd_train_wm,
    "train-policy": _cmd_train_policy,
    "eval": _cmd_eval,
    "plan": _cmd_plan,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return _cmd_report(parser, args)
        return _HANDLERS[args.command](parser, _merge(parser, args, args.command))
    except SystemExit:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Episode protocol, agents, attempt metrics, reports, and policy training.

An episode gives an agent up to K attempts at one task; failures accumulate
into a history the agent sees on later attempts. Evaluation repeats the
episode sweep over several runs with run-derived seeds and reports the
cumulative success rate at attempt marks plus the average attempts over
solved episodes only. Reports are line-delimited records plus a rendered
text table, carry a full config echo, and reproduce byte-for-byte.
"""

from dataclasses import asdict, dataclass, field
import json
import os
from typing import Optional

import numpy as np

from .actions import ActionCodec, encode_action
from .grpo import (
    GROUP_SIZE,
    LEARNING_RATE,
    MAX_TURNS,
    attempt_reward,
    collect_group,
    train_step,
)
from .planner import PlannerConfig, plan
from .policy import Policy
from .rng import child_seed, make_rng
from .sim.envs import render_observation
from .tasks import enumerate_actions, generate_suite, load_suite
from .worldmodel import WorldModel

ATTEMPT_MARKS = (1, 4, 7, 10)
REPORT_FORMAT = "puzzlerl-report"
REPORT_VERSION = 1
OUT_ENV_VAR = "PUZZLERL_OUT"

AGENT_KINDS = ("mock", "policy-only", "full")


@dataclass(frozen=True)
class RunConfig:
    env: str = "griddrop"
    agent: str = "mock"
    tasks: int = 20
    k: int = 10
    runs: int = 3
    seed: int = 0
    task_seed: Optional[int] = None   # falls back to seed
    suite_dir: Optional[str] = None
    policy_path: Optional[str] = None
    wm_path: Optional[str] = None
    strategy: int = 1
    planner_samples: int = 32
    planner_budget: int = 32
    temperature: float = 0.7
    top_p: float = 0.95

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("attempt limit k must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"agent must be one of {AGENT_KINDS}")

    def effective_task_seed(self) -> int:
        return self.seed if self.task_seed is None else self.task_seed


@dataclass(frozen=True)
class EpisodeRecord:
    task_id: str
    solved: bool
    attempts_used: int
    solve_attempt: Optional[int]   # 1-based, None when unsolved
    rewards: tuple
    errors: tuple = ()


class MockAgent:
    """Uniform random draw from the enumerable action space, per attempt."""

    def __init__(self):
        self._spaces = {}

    def act(self, task, codec, features, history, *, seed):
        space = self._spaces.get(task.task_id)
        if space is None:
            space = [encode_action(codec, a)
                     for a in enumerate_actions(task.scene)]
            self._spaces[task.task_id] = space
        rng = make_rng("mock-act", seed)
        return space[int(rng.integers(0, len(space)))]


class PolicyAgent:
    """Samples directly from the policy conditioned on the failure history."""

    def __init__(self, policy: Policy, temperature: float = 0.7,
                 top_p: float = 0.95):
        self.policy = policy
        self.temperature = temperature
        self.top_p = top_p

    def act(self, task, codec, features, history, *, seed):
        rng = make_rng("policy-act", seed)
        return self.policy.sample_sequence(codec, features, history, rng,
                                           temperature=self.temperature,
                                           top_p=self.top_p)


class FullAgent:
    """Policy proposals re-ranked by the learned model via root search."""

    def __init__(self, policy: Policy, model: WorldModel,
                 config: Optional[PlannerConfig] = None):
        self.policy = policy
        self.model = model
        self.config = config or PlannerConfig()

    def act(self, task, codec, features, history, *, seed):
        action, _ = plan(task.scene, history, self.policy, self.model,
                         self.config, seed)
        return encode_action(codec, action)


def build_agent(config: RunConfig):
    if config.agent == "mock":
        return MockAgent()
    if config.policy_path:
        policy = Policy.load(config.policy_path)
    else:
        policy = Policy.create(config.env, seed=config.seed)
    if config.agent == "policy-only":
        return PolicyAgent(policy, config.temperature, config.top_p)
    if config.wm_path:
        model = WorldModel.load(config.wm_path)
    else:
        model = WorldModel.create(config.env, seed=config.seed)
    pconf = PlannerConfig(samples=config.planner_samples,
                          budget=config.planner_budget,
                          strategy=config.strategy,
                          temperature=config.temperature,
                          top_p=config.top_p)
    return FullAgent(policy, model, pconf)


def run_episode(task, agent, k: int, seed) -> EpisodeRecord:
    """Up to k attempts with a growing failure history; never aborts.

    Agent exceptions count as failed attempts and are recorded.
    """
    codec = ActionCodec.for_scene(task.scene)
    features = np.asarray(render_observation(task.scene).features)
    history = []
    rewards = []
    errors = []
    solved = False
    for attempt in range(1, k + 1):
        attempt_seed = child_seed("attempt", seed, attempt)
        try:
            tokens = agent.act(task, codec, features, history,
                               seed=attempt_seed)
            reward = attempt_reward(task.scene, codec, tokens)
        except Exception as exc:
            tokens, reward = (), 0.0
            errors.append(f"attempt {attempt}: {exc}")
        rewards.append(reward)
        if reward > 0.0:
            solved = True
            break
        history.append((tuple(tokens), False))
    return EpisodeRecord(
        task_id=task.task_id,
        solved=solved,
        attempts_used=len(rewards),
        solve_attempt=len(rewards) if solved else None,
        rewards=tuple(rewards),
        errors=tuple(errors),
    )


def success_rate_at(records, n: int) -> float:
    """Fraction solved within the first n attempts."""
    hits = sum(1 for r in records
               if r.solve_attempt is not None and r.solve_attempt <= n)
    return hits / len(records)


def average_attempts(records) -> Optional[float]:
    """Mean attempts over solved episodes only; None when nothing solved."""
    used = [r.attempts_used for r in records if r.solved]
    if not used:
        return None
    return sum(used) / len(used)


def summarize(records, k: int) -> dict:
    if not records:
        return {"sr": {str(n): None for n in ATTEMPT_MARKS},
                "avg_att": None, "solved": 0, "episodes": 0}
    return {
        "sr": {str(n): success_rate_at(records, n) for n in ATTEMPT_MARKS},
        "avg_att": average_attempts(records),
        "solved": sum(1 for r in records if r.solved),
        "episodes": len(records),
    }


@dataclass
class Results:
    config: RunConfig
    tasks_info: list
    per_run: list
    mean: dict
    episodes: list          # dicts: run, task, seed, record
    errors: list = field(default_factory=list)


def _mean_summary(per_run) -> dict:
    sr = {}
    for n in ATTEMPT_MARKS:
        vals = [r["sr"][str(n)] for r in per_run if r["sr"][str(n)] is not None]
        sr[str(n)] = sum(vals) / len(vals) if vals else None
    atts = [r["avg_att"] for r in per_run if r["avg_att"] is not None]
    return {
        "sr": sr,
        "avg_att": sum(atts) / len(atts) if atts else None,
        "solved": sum(r["solved"] for r in per_run),
        "episodes": sum(r["episodes"] for r in per_run),
    }


def evaluate(config: RunConfig, tasks=None, agent=None) -> Results:
    """runs x tasks episodes with run-derived seeds; failures are logged."""
    config.validate()
    if tasks is None:
        if config.suite_dir:
            tasks, _ = load_suite(config.suite_dir)
            tasks = tasks[:config.tasks]
        else:
            tasks, _ = generate_suite(config.env, config.tasks,
                                      config.effective_task_seed())
    if not tasks:
        raise ValueError("task set is empty")
    if agent is None:
        agent = build_agent(config)
    episodes = []
    errors = []
    for run in range(config.runs):
        for task in tasks:
            ep_seed = child_seed("episode", config.seed, run, task.task_id)
            try:
                record = run_episode(task, agent, config.k, ep_seed)
            except Exception as exc:
                errors.append({"run": run, "task": task.task_id,
                               "error": str(exc)})
                continue
            episodes.append({"run": run, "task": task.task_id,
                             "seed": ep_seed, "record": record})
    per_run = []
    for run in range(config.runs):
        recs = [e["record"] for e in episodes if e["run"] == run]
        entry = summarize(recs, config.k)
        entry["run"] = run
        per_run.append(entry)
    return Results(
        config=config,
        tasks_info=[{"task": t.task_id, "seed": t.seed} for t in tasks],
        per_run=per_run,
        mean=_mean_summary(per_run),
        episodes=episodes,
        errors=errors,
    )


def _fmt_rate(v) -> str:
    return "-" if v is None else f"{100.0 * v:.1f}%"


def _fmt_att(v) -> str:
    return "-" if v is None else f"{v:.2f}"


def render_table(results: Results) -> str:
    """Human-readable table: one row per run plus the mean."""
    c = results.config
    lines = [
        f"agent={c.agent} env={c.env} tasks={len(results.tasks_info)} "
        f"k={c.k} runs={c.runs} seed={c.seed}",
        f"{'run':<6}{'S.R.@1':>9}{'S.R.@4':>9}{'S.R.@7':>9}{'S.R.@10':>10}"
        f"{'Avg.Att.':>10}{'solved':>9}",
    ]
    rows = [(str(r["run"]), r) for r in results.per_run]
    rows.append(("mean", results.mean))
    for name, r in rows:
        lines.append(
            f"{name:<6}"
            f"{_fmt_rate(r['sr']['1']):>9}{_fmt_rate(r['sr']['4']):>9}"
            f"{_fmt_rate(r['sr']['7']):>9}{_fmt_rate(r['sr']['10']):>10}"
            f"{_fmt_att(r['avg_att']):>10}"
            f"{str(r['solved']) + '/' + str(r['episodes']):>9}"
        )
    return "\n".join(lines) + "\n"


def report_lines(results: Results) -> list:
    """Machine-readable report records (header, episodes, summaries)."""
    header = {
        "type": "report-header",
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "config": asdict(results.config),
        "tasks": results.tasks_info,
        "attempt_marks": list(ATTEMPT_MARKS),
    }
    lines = [header]
    ordered = sorted(results.episodes, key=lambda e: (e["task"], e["run"]))
    for e in ordered:
        r = e["record"]
        lines.append({
            "type": "episode",
            "task": e["task"],
            "run": e["run"],
            "seed": e["seed"],
            "solved": r.solved,
            "attempts": r.attempts_used,
            "solve_attempt": r.solve_attempt,
            "rewards": list(r.rewards),
            "errors": list(r.errors),
        })
    for err in results.errors:
        lines.append({"type": "error", **err})
    for r in results.per_run:
        lines.append({"type": "run-summary", **r})
    lines.append({"type": "aggregate", **results.mean})
    return lines


def write_report(results: Results, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    jsonl_path = os.path.join(out_dir, "report.jsonl")
    table_path = os.path.join(out_dir, "report.txt")
    with open(jsonl_path, "w") as fh:
        for rec in report_lines(results):
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    with open(table_path, "w") as fh:
        fh.write(render_table(results))
    return {"jsonl": jsonl_path, "table": table_path}


def load_report(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def render_report_file(path) -> str:
    """Re-render the text table from a machine-readable report."""
    lines = load_report(path)
    header = lines[0]
    if header.get("format") != REPORT_FORMAT:
        raise ValueError(f"not a report file: {path}")
    cfg = header["config"]
    out = [
        f"agent={cfg['agent']} env={cfg['env']} tasks={len(header['tasks'])} "
        f"k={cfg['k']} runs={cfg['runs']} seed={cfg['seed']}",
        f"{'run':<6}{'S.R.@1':>9}{'S.R.@4':>9}{'S.R.@7':>9}{'S.R.@10':>10}"
        f"{'Avg.Att.':>10}{'solved':>9}",
    ]
    rows = [(str(l["run"]), l) for l in lines if l["type"] == "run-summary"]
    rows += [("mean", l) for l in lines if l["type"] == "aggregate"]
    for name, r in rows:
        out.append(
            f"{name:<6}"
            f"{_fmt_rate(r['sr']['1']):>9}{_fmt_rate(r['sr']['4']):>9}"
            f"{_fmt_rate(r['sr']['7']):>9}{_fmt_rate(r['sr']['10']):>10}"
            f"{_fmt_att(r['avg_att']):>10}"
            f"{str(r['solved']) + '/' + str(r['episodes']):>9}"
        )
    return "\n".join(out) + "\n"


def compare_reports(paths, labels=None) -> str:
    """Side-by-side aggregate rows from several reports (same columns)."""
    if labels is None:
        labels = []
        for p in paths:
            lines = load_report(p)
            cfg = lines[0]["config"]
            tag = cfg.get("wm_path") or cfg.get("policy_path") or cfg["agent"]
            labels.append(os.path.basename(str(tag)))
    width = max(12, max(len(l) for l in labels) + 2)
    out = [
        f"{'report':<{width}}{'S.R.@1':>9}{'S.R.@4':>9}{'S.R.@7':>9}"
        f"{'S.R.@10':>10}{'Avg.Att.':>10}{'solved':>9}",
    ]
    for label, path in zip(labels, paths):
        agg = [l for l in load_report(path) if l["type"] == "aggregate"][0]
        out.append(
            f"{label:<{width}}"
            f"{_fmt_rate(agg['sr']['1']):>9}{_fmt_rate(agg['sr']['4']):>9}"
            f"{_fmt_rate(agg['sr']['7']):>9}{_fmt_rate(agg['sr']['10']):>10}"
            f"{_fmt_att(agg['avg_att']):>10}"
            f"{str(agg['solved']) + '/' + str(agg['episodes']):>9}"
        )
    return "\n".join(out) + "\n"


def default_out_dir() -> str:
    return os.environ.get(OUT_ENV_VAR, "out")


def train_policy(tasks, *, iters: int, seed, policy: Optional[Policy] = None,
                 env: Optional[str] = None, group_size: int = GROUP_SIZE,
                 max_turns: int = MAX_TURNS, lr: float = LEARNING_RATE,
                 metrics_path=None):
    """Round-robin group rollouts over the task list with ascent steps.

    The frozen starting snapshot anchors the KL term for the whole run.
    Returns (policy, per-iteration metrics).
    """
    if not tasks:
        raise ValueError("task list is empty")
    if policy is None:
        policy = Policy.create(env or tasks[0].env, seed=seed)
    ref = policy.snapshot()
    metrics = []
    sink = open(metrics_path, "w") if metrics_path else None
    try:
        for i in range(iters):
            task = tasks[i % len(tasks)]
            group = collect_group(policy, task.scene, group_size, max_turns,
                                  seed=child_seed("train", seed, i,
                                                  task.task_id))
            m = train_step(policy, group, ref, lr=lr)
            m["iteration"] = i
            m["task"] = task.task_id
            metrics.append(m)
            if sink is not None:
                sink.write(json.dumps(m, separators=(",", ":")) + "\n")
    finally:
        if sink is not None:
            sink.close()
    return policy, metrics

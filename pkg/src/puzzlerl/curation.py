"""World-model dataset curation.

Per task: exhaustively enumerate the action space to find every solution,
rejection-sample an equal number of diverse failures (minimum lattice
distance from all previously accepted actions), re-simulate each kept action,
and compile records carrying the initial observation, five frames, the
binary outcome, and two rule-based outcome labels (one computed from the
full trace summary, one from the terminal state only). Output is a JSONL
dataset plus a manifest with counts, seeds, the config echo, and a content
hash; with a fixed seed the output is byte-identical across runs.
"""

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from puzzlerl.action_types import EventSeq, GridPlace
from puzzlerl.actions import ActionCodec, action_from_jsonable, action_to_jsonable
from puzzlerl.rng import make_rng
from puzzlerl.sim.bodies import Scene, scene_to_text
from puzzlerl.sim.envs import GRID_N, render_observation
from puzzlerl.tasks import Task, enumerate_actions, simulate_action
from puzzlerl.worldmodel import OUTCOME_LABELS, action_features

DATASET_FORMAT = "puzzlerl-wmdataset"
DATASET_VERSION = 1

_NEVER = -(10 ** 6)  # lattice sentinel: differing removal sets are far apart
_TIME_QUANTUM = 0.5

# labels a success record may legally carry
SUCCESS_LABELS = ("green-reaches-target", "ball-falls-abyss")


class CurationError(RuntimeError):
    pass


class CurationInfeasibleError(CurationError):
    """Failure sampling hit the draw cap before reaching the target count."""


class ConsistencyError(CurationError):
    """Stored outcome disagrees with re-simulation."""


@dataclass(frozen=True)
class CurationConfig:
    eps_div: int
    max_draws: int
    frames: int
    seed: int

    def validate(self) -> None:
        if self.eps_div <= 0:
            raise ValueError("eps_div must be positive")
        if self.frames != 5:
            raise ValueError("records carry exactly 5 frames")


def default_config(env: str, seed) -> CurationConfig:
    # one placement lattice unit for griddrop, one second for timedremove
    eps = 1 if env == "griddrop" else 2
    return CurationConfig(eps_div=eps, max_draws=10000, frames=5, seed=seed)


def action_coords(codec: ActionCodec, action) -> tuple:
    """Quantized lattice coordinates used by the diversity metric."""
    if isinstance(action, GridPlace):
        idx = action.cell - 1
        return (idx % GRID_N, idx // GRID_N, action.radius)
    if isinstance(action, EventSeq):
        times = dict(action.events)
        return tuple(
            int(round(times[i] / _TIME_QUANTUM)) if i in times else _NEVER
            for i in codec.removable_ids
        )
    raise TypeError(f"no lattice coordinates for {type(action).__name__}")


def action_distance(a: tuple, b: tuple) -> int:
    return max(abs(x - y) for x, y in zip(a, b))


_solution_cache = {}


def enumerate_solutions(task: Task) -> tuple:
    """Every solving action, in enumeration order. Cached per task."""
    digest = hashlib.sha256(scene_to_text(task.scene).encode()).hexdigest()[:16]
    key = (task.task_id, task.seed, digest)
    if key not in _solution_cache:
        sols = []
        for action in enumerate_actions(task.scene):
            if simulate_action(task.scene, action)[2]:
                sols.append(action)
        _solution_cache[key] = tuple(sols)
    return _solution_cache[key]


def sample_balanced_failures(task: Task, solutions, config: CurationConfig):
    """Rejection-sample len(solutions) failing actions, each at lattice
    distance >= eps_div from every solution and every earlier failure.

    Returns (failures, draws). Raises CurationInfeasibleError at the cap.
    """
    config.validate()
    actions = enumerate_actions(task.scene)
    codec = ActionCodec.for_scene(task.scene)
    taken = [action_coords(codec, a) for a in solutions]
    rng = make_rng("curate", config.seed, task.task_id)
    failures = []
    draws = 0
    while len(failures) < len(solutions):
        if draws >= config.max_draws:
            raise CurationInfeasibleError(
                f"task {task.task_id}: {draws} draws produced only "
                f"{len(failures)}/{len(solutions)} diverse failures"
            )
        candidate = actions[int(rng.integers(0, len(actions)))]
        draws += 1
        coords = action_coords(codec, candidate)
        if any(action_distance(coords, c) < config.eps_div for c in taken):
            continue
        if simulate_action(task.scene, candidate)[2]:
            continue
        failures.append(candidate)
        taken.append(coords)
    return failures, draws


# ------------------------------------------------------------------ labeling

def _overlaps(a, b) -> bool:
    tol = 1e-6
    if a.shape == "segment" and b.shape == "segment":
        return False
    if a.shape == "segment":
        a, b = b, a
    x, y, r = a.pos[0], a.pos[1], a.radius
    if b.shape == "circle":
        dx, dy = x - b.pos[0], y - b.pos[1]
        return math.hypot(dx, dy) <= r + b.radius + tol
    ax, ay = b.a
    bx, by = b.b
    ex, ey = bx - ax, by - ay
    t = ((x - ax) * ex + (y - ay) * ey) / (ex * ex + ey * ey)
    t = min(1.0, max(0.0, t))
    return math.hypot(x - (ax + t * ex), y - (ay + t * ey)) <= r + tol


def label_with_trace(terminal: Scene, action) -> str:
    """Outcome label from the latched trace summary on the terminal scene."""
    if terminal.env == "griddrop":
        ev = terminal.events
        if ev is None:
            raise ValueError("trace labeling needs a terminal scene with events")
        greens = [b.id for b in terminal.bodies if b.role == "green-target-ball"]
        targets = [b.id for b in terminal.bodies if b.role == "target-region"]
        agents = [b.id for b in terminal.bodies if b.role == "agent"]
        if any(ev.touched(g, t) for g in greens for t in targets):
            return "green-reaches-target"
        if any(ev.touched(a, g) for a in agents for g in greens):
            return "agent-hits-green"
        rest = [b.id for b in terminal.bodies
                if b.role not in ("agent", "green-target-ball")]
        if any(ev.touched(a, r) for a in agents for r in rest):
            return "blocked"
        if agents:
            return "no-contact"
        return "other"

    reds = [b for b in terminal.bodies if b.role == "red-ball"]
    ev = terminal.events
    fallen = ev.fallen if ev is not None else frozenset()
    below = [b for b in reds if b.id in fallen or b.pos[1] < terminal.abyss_y]
    if reds and len(below) == len(reds):
        return "ball-falls-abyss"
    if not action.events:
        return "no-contact"
    if below:
        return "other"
    return "blocked"


def label_terminal_only(terminal: Scene, action) -> str:
    """Outcome label from final body positions alone (the reduced-signal
    labeler variant); never reads the trace summary."""
    if terminal.env == "griddrop":
        greens = [b for b in terminal.bodies if b.role == "green-target-ball"]
        targets = [b for b in terminal.bodies if b.role == "target-region"]
        agents = [b for b in terminal.bodies if b.role == "agent"]
        if any(_overlaps(g, t) for g in greens for t in targets):
            return "green-reaches-target"
        if any(_overlaps(a, g) for a in agents for g in greens):
            return "agent-hits-green"
        rest = [b for b in terminal.bodies
                if b.role not in ("agent", "green-target-ball")]
        if any(_overlaps(a, r) for a in agents for r in rest):
            return "blocked"
        if agents:
            return "no-contact"
        return "other"

    reds = [b for b in terminal.bodies if b.role == "red-ball"]
    below = [b for b in reds if b.pos[1] < terminal.abyss_y]
    if reds and len(below) == len(reds):
        return "ball-falls-abyss"
    if not action.events:
        return "no-contact"
    if below:
        return "other"
    return "blocked"


def compile_record(task: Task, action, y: int, config: CurationConfig) -> dict:
    """Re-simulate one kept action and build its dataset record."""
    frames, terminal, success = simulate_action(task.scene, action)
    if int(success) != int(y):
        raise ConsistencyError(
            f"task {task.task_id}: stored y={y} but re-simulation gives {int(success)}"
        )
    obs = render_observation(task.scene)
    codec = ActionCodec.for_scene(task.scene)
    feats = action_features(codec, action)
    return {
        "task": task.task_id,
        "env": task.env,
        "action": action_to_jsonable(action),
        "y": int(y),
        "label": label_with_trace(terminal, action),
        "label_terminal": label_terminal_only(terminal, action),
        "verified": True,
        "obs_grid": [v for row in obs.raw_grid for v in row],
        "obs_annotations": [[i, role, cell] for i, role, cell in obs.annotations],
        "obs_features": list(obs.features),
        "act_features": [float(v) for v in feats],
        "frames": [
            {"t": t, "grid": [v for row in fr.raw_grid for v in row]}
            for fr, t in zip(frames.frames, frames.timestamps)
        ],
        "stable": bool(frames.stable),
    }


def _subsample(solutions, k: int, task_id, seed) -> list:
    rng = make_rng("subsample", seed, task_id, k)
    idx = sorted(rng.permutation(len(solutions))[:k].tolist())
    return [solutions[i] for i in idx]


def curate_dataset(tasks, config: CurationConfig, out_dir) -> dict:
    """Curate every task into out_dir/dataset.jsonl plus a manifest.

    Tasks are processed in task-id order. Unsolvable and infeasible tasks
    are skipped with a recorded reason; when 1:1 balance is impossible at
    the full solution count, the solutions are subsampled by halving.
    """
    config.validate()
    os.makedirs(out_dir, exist_ok=True)
    entries, skipped, lines = [], [], []
    positives = negatives = 0
    for task in sorted(tasks, key=lambda t: t.task_id):
        solutions = enumerate_solutions(task)
        if not solutions:
            skipped.append({"task": task.task_id, "reason": "no solutions"})
            continue
        kept = list(solutions)
        failures, draws = None, 0
        while kept:
            try:
                failures, draws = sample_balanced_failures(task, kept, config)
                break
            except CurationInfeasibleError:
                half = len(kept) // 2
                if half == 0:
                    break
                kept = _subsample(solutions, half, task.task_id, config.seed)
        if failures is None:
            skipped.append({
                "task": task.task_id,
                "reason": "no diverse failure set at any solution count",
            })
            continue
        for action in kept:
            lines.append(compile_record(task, action, 1, config))
            positives += 1
        for action in failures:
            lines.append(compile_record(task, action, 0, config))
            negatives += 1
        entries.append({
            "task": task.task_id,
            "seed": task.seed,
            "solutions": len(solutions),
            "kept": len(kept),
            "records": 2 * len(kept),
            "draws": draws,
        })
    data = "".join(json.dumps(rec, separators=(",", ":")) + "\n" for rec in lines)
    dataset_path = os.path.join(out_dir, "dataset.jsonl")
    with open(dataset_path, "w", encoding="utf-8") as fh:
        fh.write(data)
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "env": tasks[0].env if tasks else "",
        "config": asdict(config),
        "tasks": entries,
        "skipped": skipped,
        "counts": {
            "records": positives + negatives,
            "positive": positives,
            "negative": negatives,
        },
        "labels": list(OUTCOME_LABELS),
        "sha256": hashlib.sha256(data.encode()).hexdigest(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_dataset(path) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def records_to_training(records, label_col: str = "label") -> list:
    """(obs features, action features, y, label index) rows for training."""
    rows = []
    for rec in records:
        rows.append((
            np.asarray(rec["obs_features"], dtype=np.float64),
            np.asarray(rec["act_features"], dtype=np.float64),
            int(rec["y"]),
            OUTCOME_LABELS.index(rec[label_col]),
        ))
    return rows


def record_action(rec: dict):
    return action_from_jsonable(rec["action"])

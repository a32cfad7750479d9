"""Seeded task generation: solvable puzzle scenes with enumerable solutions.

A task is a named initial scene. Suites are produced by drawing candidate
layouts from a seeded generator and keeping the ones whose exhaustively
enumerated solution set is nonempty but small; doing nothing must fail on
timed-removal tasks. Suites round-trip through a directory of scene files
plus a manifest.
"""

import json
import math
import os
from dataclasses import dataclass

from puzzlerl.action_types import EventSeq, GridPlace
from puzzlerl.actions import ActionCodec, action_space
from puzzlerl.rng import make_rng
from puzzlerl.sim.bodies import Scene, circle, load_scene, save_scene, segment
from puzzlerl.sim.engine import simulate_until_stable
from puzzlerl.sim.envs import apply_action, check_success

# removal times enumerated during generation and curation; the episode
# grammar still accepts the full [0, 10] lattice
TR_TIMES = tuple(i * 0.5 for i in range(11))

GRIDDROP_SOLUTION_CAP = 10

SUITE_FORMAT = "puzzlerl-suite"
SUITE_VERSION = 1

_MAX_CANDIDATES = 4000


@dataclass(frozen=True)
class Task:
    task_id: str
    env: str
    seed: int  # candidate index within the generator stream
    scene: Scene


def solution_cap(env: str, n_actions: int) -> int:
    """Largest admissible solution count for a generated task."""
    if env == "griddrop":
        return GRIDDROP_SOLUTION_CAP
    return max(1, n_actions // 6)


def enumerate_actions(scene: Scene) -> list:
    codec = ActionCodec.for_scene(scene)
    if scene.env == "timedremove":
        return action_space(codec, times=TR_TIMES)
    return action_space(codec)


def simulate_action(scene: Scene, action):
    """Apply an action and run the simulator to rest or the step cap."""
    staged = apply_action(scene, action)
    frames, terminal = simulate_until_stable(staged)
    return frames, terminal, check_success(terminal)


def find_solutions(scene: Scene, actions) -> tuple:
    out = []
    for action in actions:
        _, _, success = simulate_action(scene, action)
        if success:
            out.append(action)
    return tuple(out)


def _clamp(v, lo, hi):
    return min(hi, max(lo, v))


def _candidate_griddrop(rng) -> Scene:
    plen = float(rng.choice([2.0, 2.5, 3.0]))
    py = float(rng.choice([3.0, 3.5, 4.0, 4.5, 5.0]))
    x0 = float(rng.uniform(0.6, 8.0 - plen - 0.6))
    gr = float(rng.choice([0.25, 0.3, 0.35]))
    gx = float(rng.uniform(x0 + 0.4, x0 + plen - 0.4))
    # target on the floor, beyond one platform edge so a knocked-off ball
    # can reach it
    if rng.random() < 0.5:
        tx = x0 + plen + float(rng.uniform(0.2, 2.2))
    else:
        tx = x0 - float(rng.uniform(0.2, 2.2))
    tr = float(rng.choice([0.35, 0.45]))
    bodies = [
        segment(0, "static", x0, py, x0 + plen, py),
        circle(1, "green-target-ball", gx, py + gr, gr),
        circle(2, "target-region", _clamp(tx, 0.5, 7.5), tr, tr, static=True),
    ]
    if rng.random() < 0.5:
        # a tilted deflector somewhere between platform height and the floor
        dx = float(rng.uniform(0.8, 6.0))
        dy = float(rng.uniform(1.2, py - 0.8))
        ddx = float(rng.choice([-1.3, 1.3]))
        ddy = float(rng.uniform(-0.7, -0.3))
        bodies.append(segment(
            3, "static",
            dx, dy,
            _clamp(dx + ddx, 0.2, 7.8), _clamp(dy + ddy, 0.4, 7.6),
        ))
    return Scene(env="griddrop", bodies=tuple(bodies))


def _candidate_timedremove(rng) -> Scene:
    # A red ball sits on a removable ramp, held back by a removable wall.
    # Below is a shelf floor with a curbed gap over the abyss: the curbs
    # block rolling entry, so the ball only drops through on a direct
    # aerial landing, which makes the removal times matter.
    ax = float(rng.uniform(0.4, 1.2))
    ay = float(rng.uniform(3.8, 5.2))
    length = float(rng.uniform(2.6, 3.6))
    drop = float(rng.uniform(0.6, 1.1))
    bx, by = ax + length, ay - drop
    seg_len = math.hypot(length, drop)
    nx, ny = drop / seg_len, length / seg_len  # upward unit normal
    rr = 0.3
    t0 = float(rng.uniform(0.04, 0.18))
    px, py = ax + t0 * length, ay - t0 * drop
    bodies = [
        segment(0, "removable-block", ax, ay, bx, by, removable=True),
        circle(1, "red-ball", px + nx * rr, py + ny * rr, rr),
    ]
    # holding wall slightly downhill of the ball
    tw = t0 + float(rng.uniform(0.12, 0.22))
    wx, wy = ax + tw * length, ay - tw * drop
    bodies.append(segment(
        2, "removable-block", wx, wy - 0.2, wx, wy + 0.9, removable=True,
    ))
    sy = float(rng.uniform(1.2, 2.0))
    g0 = _clamp(float(rng.uniform(bx - 0.5, bx + 2.0)), 1.5, 5.8)
    gw = float(rng.uniform(1.2, 1.8))
    g1 = min(g0 + gw, 7.6)
    ch = float(rng.uniform(0.5, 0.8))
    bodies.append(segment(3, "static", 0.0, sy, g0, sy))
    bodies.append(segment(4, "static", g1, sy, 8.0, sy))
    bodies.append(segment(5, "static", g0, sy, g0, sy + ch))
    bodies.append(segment(6, "static", g1, sy, g1, sy + ch))
    return Scene(env="timedremove", bodies=tuple(bodies))


def _acceptable(scene: Scene):
    """Solution count if the candidate makes a usable task, else None."""
    try:
        scene.validate()
    except ValueError:
        return None
    actions = enumerate_actions(scene)
    cap = solution_cap(scene.env, len(actions))
    if scene.env == "timedremove":
        # doing nothing must fail, otherwise the task is degenerate
        _, _, success = simulate_action(scene, EventSeq(()))
        if success:
            return None
    n = 0
    for action in actions:
        _, _, success = simulate_action(scene, action)
        if success:
            n += 1
            if n > cap:
                return None
    if n < 1:
        return None
    return n


def generate_suite(env: str, count: int, seed) -> tuple:
    """Generate `count` solvable tasks; returns (tasks, infos).

    Deterministic in (env, count, seed): candidate layouts are drawn from a
    per-candidate seeded stream and accepted when solvable with a solution
    count under the cap.
    """
    make = _candidate_griddrop if env == "griddrop" else _candidate_timedremove
    tasks, infos = [], []
    for j in range(_MAX_CANDIDATES):
        if len(tasks) == count:
            break
        scene = make(make_rng("task", env, seed, j))
        n = _acceptable(scene)
        if n is None:
            continue
        task_id = f"{env}-{seed}-{len(tasks):03d}"
        tasks.append(Task(task_id=task_id, env=env, seed=j, scene=scene))
        infos.append({"id": task_id, "seed": j, "solutions": n})
    if len(tasks) < count:
        raise RuntimeError(
            f"generator exhausted {_MAX_CANDIDATES} candidates with only "
            f"{len(tasks)}/{count} tasks accepted"
        )
    return tasks, infos


def save_suite(tasks, infos, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    entries = []
    for task, info in zip(tasks, infos):
        fname = f"{task.task_id}.scene"
        save_scene(task.scene, os.path.join(directory, fname))
        entries.append({
            "id": task.task_id,
            "seed": task.seed,
            "file": fname,
            "solutions": info["solutions"],
        })
    manifest = {
        "format": SUITE_FORMAT,
        "version": SUITE_VERSION,
        "env": tasks[0].env if tasks else "",
        "count": len(tasks),
        "tasks": entries,
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_suite(directory) -> tuple:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != SUITE_FORMAT:
        raise ValueError("not a task suite manifest")
    if manifest.get("version") != SUITE_VERSION:
        raise ValueError(f"unsupported suite version {manifest.get('version')}")
    tasks = []
    for entry in manifest["tasks"]:
        scene = load_scene(os.path.join(directory, entry["file"]))
        tasks.append(Task(
            task_id=entry["id"], env=manifest["env"],
            seed=entry["seed"], scene=scene,
        ))
    return tasks, manifest

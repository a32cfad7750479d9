"""Simulation driver: kernel selection, stepping, stability, frame sampling.

The hot loop lives in a compiled extension (puzzlerl.sim._kernel) with a pure
Python fallback (puzzlerl.sim.kernel_py). Both implement the same arithmetic
in the same order and produce bit-identical trajectories; selection happens at
import time, or set PUZZLERL_PURE_PY=1 to force the fallback.
"""

import math
import os
from dataclasses import dataclass, replace

from puzzlerl.sim.bodies import Body, Scene, SimEvents
from puzzlerl.sim import kernel_py

DT = 0.01
MAX_STEPS = 2000
V_EPS = 1e-3
STABILITY_WINDOW = 25
PGS_ITERS = 16
N_FRAMES = 5

if os.environ.get("PUZZLERL_PURE_PY", "") == "1":
    _impl = kernel_py
    _KERNEL_NAME = "python"
else:
    try:
        from puzzlerl.sim import _kernel as _impl
        _KERNEL_NAME = "compiled"
    except ImportError:
        _impl = kernel_py
        _KERNEL_NAME = "python"


class SimulationDiverged(RuntimeError):
    """Raised when body state becomes non-finite."""


def kernel_name() -> str:
    return _KERNEL_NAME


def _pack(scene: Scene, dt: float):
    circles = sorted((b for b in scene.bodies if b.shape == "circle"), key=lambda b: b.id)
    segments = sorted((b for b in scene.bodies if b.shape == "segment"), key=lambda b: b.id)
    cx = [b.pos[0] for b in circles]
    cy = [b.pos[1] for b in circles]
    cvx = [b.vel[0] for b in circles]
    cvy = [b.vel[1] for b in circles]
    cr = [b.radius for b in circles]
    cim = [0.0 if b.static else 1.0 / b.mass for b in circles]
    cact = [1] * len(circles)
    crem = [int(round(b.remove_at / dt)) if b.remove_at >= 0.0 else -1 for b in circles]
    sax = [b.a[0] for b in segments]
    say = [b.a[1] for b in segments]
    sbx = [b.b[0] for b in segments]
    sby = [b.b[1] for b in segments]
    sact = [1] * len(segments)
    srem = [int(round(b.remove_at / dt)) if b.remove_at >= 0.0 else -1 for b in segments]
    return circles, segments, (
        cx, cy, cvx, cvy, cr, cim, cact, crem,
        sax, say, sbx, sby, sact, srem,
    )


def run_kernel(scene: Scene, dt: float = DT, max_steps: int = MAX_STEPS,
               v_eps: float = V_EPS, stability_window: int = STABILITY_WINDOW,
               pgs_iters: int = PGS_ITERS, kernel=None):
    """Run the stepping kernel and return (circles, segments, raw result dict)."""
    circles, segments, packed = _pack(scene, dt)
    impl = kernel if kernel is not None else _impl
    xmin, ymin, xmax, ymax = scene.bounds
    try:
        res = impl.run_sim(
            *packed,
            scene.gravity[0], scene.gravity[1], scene.restitution,
            xmin, ymin, xmax, ymax, scene.open_bottom, scene.abyss_y,
            dt, max_steps, v_eps, stability_window, pgs_iters,
        )
    except FloatingPointError as exc:
        raise SimulationDiverged(str(exc)) from exc
    return circles, segments, res


def _scene_at(scene: Scene, circles, segments, res, idx: int, terminal: bool) -> Scene:
    """Rebuild a Scene from recorded kernel state at buffer index idx.

    Removed bodies are dropped. Bodies deactivated by falling past the abyss
    are kept only on terminal scenes (success checks need their position).
    """
    fallen = res["fallen"]
    bodies = []
    for i, b in enumerate(circles):
        active = res["bact"][idx][i]
        if not active and not (terminal and fallen[i]):
            continue
        bodies.append(replace(
            b,
            pos=(res["bx"][idx][i], res["by"][idx][i]),
            vel=(res["bvx"][idx][i], res["bvy"][idx][i]),
        ))
    for s, b in enumerate(segments):
        if res["bsact"][idx][s]:
            bodies.append(b)
    bodies.sort(key=lambda b: b.id)
    return replace(scene, bodies=tuple(bodies), events=None)


def _events(circles, segments, res) -> SimEvents:
    contacts = set()
    for i in range(len(circles)):
        for j in range(i + 1, len(circles)):
            if res["cc_latch"][i][j]:
                a, b = circles[i].id, circles[j].id
                contacts.add((a, b) if a < b else (b, a))
        for s in range(len(segments)):
            if res["cs_latch"][i][s]:
                a, b = circles[i].id, segments[s].id
                contacts.add((a, b) if a < b else (b, a))
    fallen_ids = frozenset(circles[i].id for i in range(len(circles)) if res["fallen"][i])
    return SimEvents(
        contacts=frozenset(contacts),
        fallen=fallen_ids,
        stable=res["stable"],
        steps=res["steps"],
    )


@dataclass(frozen=True)
class FrameSet:
    """Exactly five observation snapshots, uniformly spaced over the run."""

    frames: tuple
    timestamps: tuple
    stable: bool


def step(scene: Scene, dt: float = DT) -> Scene:
    """Advance the scene by one fixed timestep and return the new scene.

    Helper for tests and debugging; scheduled removal times are interpreted
    relative to this call, so chains of step() calls do not preserve a
    removal countdown. Use simulate_until_stable for full rollouts.
    """
    circles, segments, res = run_kernel(scene, dt=dt, max_steps=1, stability_window=1 << 30)
    idx = res["steps"]
    return _scene_at(scene, circles, segments, res, idx, terminal=True)


def simulate_until_stable(scene: Scene, max_steps: int = MAX_STEPS, *,
                          dt: float = DT, v_eps: float = V_EPS,
                          stability_window: int = STABILITY_WINDOW):
    """Simulate until all speeds stay below v_eps for a full stability window
    or until max_steps. Returns (FrameSet, terminal Scene).

    The terminal scene carries a SimEvents record with latched contacts and
    fallen bodies. Frames are rendered observations at five uniformly spaced
    times over the executed span.
    """
    from puzzlerl.sim.envs import render_observation

    circles, segments, res = run_kernel(
        scene, dt=dt, max_steps=max_steps, v_eps=v_eps,
        stability_window=stability_window,
    )
    steps = res["steps"]
    idxs = [int(j * steps * 0.25 + 0.5) for j in range(N_FRAMES)]
    frames = tuple(
        render_observation(_scene_at(scene, circles, segments, res, k, terminal=False))
        for k in idxs
    )
    timestamps = tuple(k * dt for k in idxs)
    terminal = _scene_at(scene, circles, segments, res, steps, terminal=True)
    terminal = replace(terminal, events=_events(circles, segments, res))
    return FrameSet(frames=frames, timestamps=timestamps, stable=res["stable"]), terminal


def scene_energy(scene: Scene) -> float:
    """Kinetic plus gravitational potential energy of the dynamic bodies."""
    gx, gy = scene.gravity
    total = 0.0
    for b in scene.bodies:
        if b.shape != "circle" or b.static:
            continue
        m = b.mass
        total += 0.5 * m * (b.vel[0] ** 2 + b.vel[1] ** 2)
        total -= m * (gx * b.pos[0] + gy * b.pos[1])
    return total


def trace_energies(scene: Scene, circles, res) -> list:
    """Per recorded step: energy of the bodies active at that step."""
    gx, gy = scene.gravity
    masses = [0.0 if b.static else b.mass for b in circles]
    out = []
    for k in range(len(res["bx"])):
        total = 0.0
        for i, m in enumerate(masses):
            if m == 0.0 or not res["bact"][k][i]:
                continue
            vx, vy = res["bvx"][k][i], res["bvy"][k][i]
            total += 0.5 * m * (vx * vx + vy * vy)
            total -= m * (gx * res["bx"][k][i] + gy * res["by"][k][i])
        out.append(total)
    return out

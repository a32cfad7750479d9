"""Environment semantics on top of the simulator: action application,
success predicates, and observation rendering for the two puzzle kinds.

GridDrop: single-shot placement of an agent ball on an 8x8 grid; success when
the green ball touches a target region at any step (contact is latched).

TimedRemove: schedule removals of removable bodies at times on a 0.5 s
lattice; success when every red ball has fallen below the abyss line at
termination.
"""

import math
from dataclasses import dataclass, replace

from puzzlerl.action_types import (
    EventSeq,
    GRID_CELLS,
    GridPlace,
    RADIUS_LEVELS,
    on_time_lattice,
)
from puzzlerl.sim.bodies import Body, Scene

GRID_N = 8

# raster role codes, higher wins when bodies share a cell
_ROLE_CODE = {
    "static": 1,
    "target-region": 2,
    "removable-block": 3,
    "red-ball": 4,
    "green-target-ball": 5,
    "agent": 6,
}
ROLE_CODE_MAX = 6


class InvalidActionError(ValueError):
    """Action is outside the legal action space for the scene."""


@dataclass(frozen=True)
class Observation:
    env: str
    raw_grid: tuple  # GRID_N rows, top row first, role codes
    annotations: tuple  # (body_id, role, cell) per body
    overlay: str  # "8x8-grid" | "index-ids"
    features: tuple  # fixed-length numeric encoding, constant per env


def _cell_geometry(bounds):
    xmin, ymin, xmax, ymax = bounds
    return xmin, ymin, (xmax - xmin) / GRID_N, (ymax - ymin) / GRID_N


def cell_center(cell: int, bounds) -> tuple:
    """Physical center of grid cell 1..64, row-major from the top-left."""
    xmin, ymin, cw, ch = _cell_geometry(bounds)
    idx = cell - 1
    row, col = idx // GRID_N, idx % GRID_N
    return (xmin + (col + 0.5) * cw, ymin + (GRID_N - row - 0.5) * ch)


def cell_of(x: float, y: float, bounds) -> int:
    xmin, ymin, cw, ch = _cell_geometry(bounds)
    col = min(GRID_N - 1, max(0, int((x - xmin) / cw)))
    row_up = min(GRID_N - 1, max(0, int((y - ymin) / ch)))
    row = GRID_N - 1 - row_up
    return row * GRID_N + col + 1


def agent_radius(radius_level: int, bounds) -> float:
    """Radius level 1..8 maps to level/16 of the cell width."""
    cw = _cell_geometry(bounds)[2]
    return radius_level / 16.0 * cw


def apply_action(scene: Scene, action) -> Scene:
    """Apply an action to an initial scene, returning the scene to simulate.

    Raises InvalidActionError for actions outside the legal space; the caller
    records those as failed attempts.
    """
    if scene.env == "griddrop":
        if not isinstance(action, GridPlace):
            raise InvalidActionError(f"griddrop expects GridPlace, got {type(action).__name__}")
        if not 1 <= action.cell <= GRID_CELLS:
            raise InvalidActionError(f"cell {action.cell} outside [1, {GRID_CELLS}]")
        if not 1 <= action.radius <= RADIUS_LEVELS:
            raise InvalidActionError(f"radius level {action.radius} outside [1, {RADIUS_LEVELS}]")
        x, y = cell_center(action.cell, scene.bounds)
        new_id = max((b.id for b in scene.bodies), default=-1) + 1
        agent = Body(
            id=new_id, role="agent", shape="circle",
            pos=(x, y), vel=(0.0, 0.0),
            radius=agent_radius(action.radius, scene.bounds),
        )
        return scene.with_bodies(scene.bodies + (agent,))

    if scene.env == "timedremove":
        if not isinstance(action, EventSeq):
            raise InvalidActionError(f"timedremove expects EventSeq, got {type(action).__name__}")
        if not action.is_canonical():
            raise InvalidActionError("event sequence not in canonical order")
        by_id = {b.id: b for b in scene.bodies}
        seen = set()
        for body_id, t in action.events:
            if body_id not in by_id:
                raise InvalidActionError(f"unknown body id {body_id}")
            if not by_id[body_id].removable:
                raise InvalidActionError(f"body {body_id} is not removable")
            if body_id in seen:
                raise InvalidActionError(f"body {body_id} removed more than once")
            if t < 0.0 or not on_time_lattice(t):
                raise InvalidActionError(f"time {t} not on the 0.5 s lattice in [0, 10]")
            seen.add(body_id)
        bodies = tuple(
            replace(b, remove_at=dict(action.events).get(b.id, b.remove_at))
            if b.id in seen else b
            for b in scene.bodies
        )
        return scene.with_bodies(bodies)

    raise InvalidActionError(f"unknown env kind {scene.env!r}")


def check_success(terminal: Scene) -> bool:
    """Success predicate on a terminal scene from simulate_until_stable."""
    if terminal.env == "griddrop":
        if terminal.events is None:
            raise ValueError("griddrop success needs a terminal scene with events")
        greens = [b.id for b in terminal.bodies if b.role == "green-target-ball"]
        targets = [b.id for b in terminal.bodies if b.role == "target-region"]
        return any(terminal.events.touched(g, t) for g in greens for t in targets)
    if terminal.env == "timedremove":
        reds = [b for b in terminal.bodies if b.role == "red-ball"]
        if not reds:
            raise ValueError("timedremove scene has no red balls")
        return all(b.pos[1] < terminal.abyss_y for b in reds)
    raise ValueError(f"unknown env kind {terminal.env!r}")


def _mark_cells(grid, scene, body):
    """Mark raster cells overlapped by the body with its role code."""
    code = _ROLE_CODE.get(body.role, 1)
    xmin, ymin, cw, ch = _cell_geometry(scene.bounds)
    if body.shape == "circle":
        x, y, r = body.pos[0], body.pos[1], body.radius
        c0 = max(0, int((x - r - xmin) / cw))
        c1 = min(GRID_N - 1, int((x + r - xmin) / cw))
        u0 = max(0, int((y - r - ymin) / ch))
        u1 = min(GRID_N - 1, int((y + r - ymin) / ch))
        for col in range(c0, c1 + 1):
            for up in range(u0, u1 + 1):
                # closest point of the cell rectangle to the circle center
                rx0, ry0 = xmin + col * cw, ymin + up * ch
                px = min(max(x, rx0), rx0 + cw)
                py = min(max(y, ry0), ry0 + ch)
                if (x - px) ** 2 + (y - py) ** 2 <= r * r:
                    row = GRID_N - 1 - up
                    if code > grid[row][col]:
                        grid[row][col] = code
    else:
        ax, ay = body.a
        bx, by = body.b
        length = math.hypot(bx - ax, by - ay)
        n = max(2, int(length / (min(cw, ch) * 0.25)) + 1)
        for k in range(n + 1):
            t = k / n
            x = ax + t * (bx - ax)
            y = ay + t * (by - ay)
            col = min(GRID_N - 1, max(0, int((x - xmin) / cw)))
            up = min(GRID_N - 1, max(0, int((y - ymin) / ch)))
            row = GRID_N - 1 - up
            if code > grid[row][col]:
                grid[row][col] = code


def _body_cell(body: Body, bounds) -> int:
    if body.shape == "circle":
        return cell_of(body.pos[0], body.pos[1], bounds)
    mx = (body.a[0] + body.b[0]) * 0.5
    my = (body.a[1] + body.b[1]) * 0.5
    return cell_of(mx, my, bounds)


_REDS_MAX = 2
_REMOVABLES_MAX = 4


def _features_griddrop(scene: Scene, grid) -> tuple:
    xmin, ymin, xmax, ymax = scene.bounds
    w, h = xmax - xmin, ymax - ymin
    greens = [b for b in scene.bodies if b.role == "green-target-ball"]
    targets = [b for b in scene.bodies if b.role == "target-region"]
    if greens:
        gx_, gy_ = greens[0].pos
    else:
        gx_, gy_ = xmin, ymin
    if targets:
        pts = []
        for t in targets:
            if t.shape == "circle":
                pts.append(t.pos)
            else:
                pts.append(((t.a[0] + t.b[0]) * 0.5, (t.a[1] + t.b[1]) * 0.5))
        tx = sum(p[0] for p in pts) / len(pts)
        ty = sum(p[1] for p in pts) / len(pts)
    else:
        tx, ty = xmin, ymin
    head = [
        (gx_ - xmin) / w, (gy_ - ymin) / h,
        (tx - xmin) / w, (ty - ymin) / h,
        (tx - gx_) / w, (ty - gy_) / h,
    ]
    flat = [grid[r][c] / ROLE_CODE_MAX for r in range(GRID_N) for c in range(GRID_N)]
    return tuple(head + flat)


def _features_timedremove(scene: Scene, grid) -> tuple:
    xmin, ymin, xmax, ymax = scene.bounds
    w, h = xmax - xmin, ymax - ymin
    reds = sorted((b for b in scene.bodies if b.role == "red-ball"), key=lambda b: b.id)
    removables = sorted((b for b in scene.bodies if b.removable), key=lambda b: b.id)
    head = []
    for i in range(_REDS_MAX):
        if i < len(reds):
            head += [(reds[i].pos[0] - xmin) / w, (reds[i].pos[1] - ymin) / h]
        else:
            head += [0.0, 0.0]
    for i in range(_REMOVABLES_MAX):
        if i < len(removables):
            b = removables[i]
            if b.shape == "circle":
                cx_, cy_, half = b.pos[0], b.pos[1], b.radius
            else:
                cx_ = (b.a[0] + b.b[0]) * 0.5
                cy_ = (b.a[1] + b.b[1]) * 0.5
                half = math.hypot(b.b[0] - b.a[0], b.b[1] - b.a[1]) * 0.5
            head += [1.0, (cx_ - xmin) / w, (cy_ - ymin) / h, half / w]
        else:
            head += [0.0, 0.0, 0.0, 0.0]
    head.append((scene.abyss_y - ymin) / h)
    flat = [grid[r][c] / ROLE_CODE_MAX for r in range(GRID_N) for c in range(GRID_N)]
    return tuple(head + flat)


def render_observation(scene: Scene) -> Observation:
    """Deterministic observation: role raster, per-body annotations, features."""
    grid = [[0] * GRID_N for _ in range(GRID_N)]
    for b in scene.bodies:
        _mark_cells(grid, scene, b)
    annotations = tuple(
        (b.id, b.role, _body_cell(b, scene.bounds))
        for b in sorted(scene.bodies, key=lambda b: b.id)
    )
    if scene.env == "griddrop":
        overlay = "8x8-grid"
        features = _features_griddrop(scene, grid)
    else:
        overlay = "index-ids"
        features = _features_timedremove(scene, grid)
    return Observation(
        env=scene.env,
        raw_grid=tuple(tuple(row) for row in grid),
        annotations=annotations,
        overlay=overlay,
        features=features,
    )


def feature_dim(env: str) -> int:
    if env == "griddrop":
        return 6 + GRID_N * GRID_N
    if env == "timedremove":
        return 2 * _REDS_MAX + 4 * _REMOVABLES_MAX + 1 + GRID_N * GRID_N
    raise ValueError(f"unknown env kind {env!r}")


def render_ascii(obs: Observation) -> str:
    """Debug view of the raster (top row first)."""
    chars = ".STBRGA"
    return "\n".join("".join(chars[v] for v in row) for row in obs.raw_grid)

from puzzlerl.sim.bodies import (
    ROLES,
    Body,
    Scene,
    SceneFormatError,
    SimEvents,
    circle,
    load_scene,
    parse_scene,
    save_scene,
    scene_to_text,
    segment,
)
from puzzlerl.sim.engine import (
    FrameSet,
    SimulationDiverged,
    kernel_name,
    scene_energy,
    simulate_until_stable,
    step,
)
from puzzlerl.sim.envs import (
    GRID_N,
    InvalidActionError,
    Observation,
    apply_action,
    cell_center,
    check_success,
    render_observation,
)

__all__ = [
    "ROLES",
    "Body",
    "Scene",
    "SceneFormatError",
    "SimEvents",
    "circle",
    "segment",
    "load_scene",
    "parse_scene",
    "save_scene",
    "scene_to_text",
    "FrameSet",
    "SimulationDiverged",
    "kernel_name",
    "scene_energy",
    "simulate_until_stable",
    "step",
    "GRID_N",
    "InvalidActionError",
    "Observation",
    "apply_action",
    "cell_center",
    "check_success",
    "render_observation",
]

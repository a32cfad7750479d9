"""Environment layer tests: grid geometry, action application, success
predicates, and observation rendering."""

import math

import pytest

from puzzlerl.action_types import EventSeq, GridPlace
from puzzlerl.sim import (
    GRID_N,
    InvalidActionError,
    Scene,
    apply_action,
    cell_center,
    check_success,
    circle,
    render_observation,
    segment,
    simulate_until_stable,
)
from puzzlerl.sim.envs import agent_radius, cell_of, feature_dim, render_ascii

BOUNDS = (0.0, 0.0, 8.0, 8.0)


# ------------------------------------------------------------- grid geometry

def test_cell_centers_match_row_major_layout():
    # row-major from the top-left on the unit grid: cell 1 is the top-left
    # cell, cell 64 the bottom-right
    for cell, want in ((1, (0.5, 7.5)), (8, (7.5, 7.5)), (9, (0.5, 6.5)),
                       (12, (3.5, 6.5)), (57, (0.5, 0.5)), (64, (7.5, 0.5))):
        assert cell_center(cell, BOUNDS) == want
    for cell in range(1, 65):
        row, col = (cell - 1) // 8, (cell - 1) % 8
        assert cell_center(cell, BOUNDS) == (col + 0.5, 7.5 - row)


def test_cell_of_inverts_cell_center():
    for cell in range(1, 65):
        x, y = cell_center(cell, BOUNDS)
        assert cell_of(x, y, BOUNDS) == cell


def test_agent_radius_levels():
    assert agent_radius(1, BOUNDS) == 1.0 / 16.0
    assert agent_radius(4, BOUNDS) == 0.25
    assert agent_radius(8, BOUNDS) == 0.5


# ---------------------------------------------------------------- grid drop

def griddrop_scene(target_x0=3.0, target_x1=5.0):
    return Scene(env="griddrop", bodies=(
        circle(0, "green-target-ball", 4.0, 3.0, r=0.3),
        segment(1, "target-region", target_x0, 1.0, target_x1, 1.0),
        segment(2, "static", 0.5, 0.4, 7.5, 0.4),
    ))


def test_place_action_appends_agent_ball():
    sc = griddrop_scene()
    out = apply_action(sc, GridPlace(cell=12, radius=4))
    assert len(out.bodies) == len(sc.bodies) + 1
    agent = out.bodies[-1]
    assert agent.role == "agent"
    assert agent.id == 3
    assert agent.pos == cell_center(12, sc.bounds)
    assert agent.radius == 0.25
    assert not agent.static
    # the input scene is untouched
    assert len(sc.bodies) == 3


def test_place_action_validates_ranges():
    sc = griddrop_scene()
    for bad in (GridPlace(0, 4), GridPlace(65, 4), GridPlace(12, 0), GridPlace(12, 9)):
        with pytest.raises(InvalidActionError):
            apply_action(sc, bad)
    with pytest.raises(InvalidActionError):
        apply_action(sc, EventSeq.make([(1, 0.5)]))


def test_griddrop_success_is_latched_green_target_contact():
    sc = griddrop_scene()
    _, terminal = simulate_until_stable(sc)
    assert check_success(terminal) is True  # green falls straight onto the strip

    far = griddrop_scene(target_x0=6.8, target_x1=7.4)
    _, terminal2 = simulate_until_stable(far)
    assert check_success(terminal2) is False


def test_griddrop_success_requires_events():
    with pytest.raises(ValueError):
        check_success(griddrop_scene())


def test_contact_counts_even_if_green_later_bounces_away():
    # green starts touching the target, then a heavy agent knocks it away;
    # the latched contact still counts
    sc = Scene(env="griddrop", bodies=(
        circle(0, "green-target-ball", 4.0, 1.3, r=0.3),
        segment(1, "target-region", 3.0, 1.0, 5.0, 1.0),
    ))
    out = apply_action(sc, GridPlace(cell=28, radius=8))  # directly above
    _, terminal = simulate_until_stable(out)
    assert check_success(terminal) is True


# --------------------------------------------------------------- timed remove

def timedremove_scene():
    return Scene(env="timedremove", bodies=(
        circle(0, "red-ball", 4.0, 3.0, r=0.3),
        segment(1, "removable-block", 3.0, 2.5, 5.0, 2.5, removable=True),
        segment(2, "static", 0.5, 0.2, 2.0, 0.2),
    ), abyss_y=-1.0)


def test_remove_action_schedules_removals():
    sc = timedremove_scene()
    out = apply_action(sc, EventSeq.make([(1, 1.5)]))
    assert out.body_by_id(1).remove_at == 1.5
    assert sc.body_by_id(1).remove_at == -1.0


def test_remove_action_validates():
    sc = timedremove_scene()
    with pytest.raises(InvalidActionError):
        apply_action(sc, EventSeq.make([(2, 1.0)]))  # not removable
    with pytest.raises(InvalidActionError):
        apply_action(sc, EventSeq.make([(9, 1.0)]))  # unknown id
    with pytest.raises(InvalidActionError):
        apply_action(sc, EventSeq.make([(1, 0.7)]))  # off the 0.5 s lattice
    with pytest.raises(InvalidActionError):
        apply_action(sc, EventSeq.make([(1, 0.5), (1, 1.0)]))  # duplicate body
    with pytest.raises(InvalidActionError):
        apply_action(sc, EventSeq(events=((1, 1.0), (1, 0.5))))  # not canonical
    with pytest.raises(InvalidActionError):
        apply_action(sc, GridPlace(1, 1))


def test_timedremove_success_when_all_reds_fall():
    sc = timedremove_scene()
    out = apply_action(sc, EventSeq.make([(1, 0.0)]))
    _, terminal = simulate_until_stable(out)
    assert check_success(terminal) is True
    assert 0 in terminal.events.fallen

    _, terminal2 = simulate_until_stable(sc)  # bridge stays, ball rests on it
    assert check_success(terminal2) is False


def test_timedremove_success_requires_red_balls():
    bad = Scene(env="timedremove", bodies=(
        segment(1, "static", 1.0, 1.0, 2.0, 1.0),
    ))
    with pytest.raises(ValueError):
        check_success(bad)


def test_event_seq_make_sorts_canonically():
    e = EventSeq.make([(3, 1.0), (1, 0.5), (2, 1.0)])
    assert e.events == ((1, 0.5), (2, 1.0), (3, 1.0))
    assert e.is_canonical()
    assert not EventSeq(events=((2, 1.0), (1, 0.5))).is_canonical()


# --------------------------------------------------------------- observations

def test_observation_is_deterministic_and_annotated():
    sc = griddrop_scene()
    a = render_observation(sc)
    b = render_observation(sc)
    assert a == b
    assert a.env == "griddrop"
    assert a.overlay == "8x8-grid"
    ids = [ann[0] for ann in a.annotations]
    assert ids == sorted(ids) == [0, 1, 2]
    roles = {ann[0]: ann[1] for ann in a.annotations}
    assert roles[0] == "green-target-ball"


def test_raster_marks_roles_with_priority():
    sc = griddrop_scene()
    obs = render_observation(sc)
    # green ball at (4, 3): column 4, up-row 3 -> raster row 4
    assert obs.raw_grid[4][4] == 5
    # target strip along y=1: raster row 6
    assert obs.raw_grid[6][3] >= 2
    assert len(obs.raw_grid) == GRID_N
    assert all(len(row) == GRID_N for row in obs.raw_grid)


def test_feature_vectors_have_fixed_length():
    g = render_observation(griddrop_scene())
    assert len(g.features) == feature_dim("griddrop")
    t1 = render_observation(timedremove_scene())
    two_reds = timedremove_scene().with_bodies(
        timedremove_scene().bodies + (circle(5, "red-ball", 1.0, 1.0, r=0.2),)
    )
    t2 = render_observation(two_reds)
    assert len(t1.features) == len(t2.features) == feature_dim("timedremove")


def test_griddrop_feature_head_values():
    obs = render_observation(griddrop_scene())
    assert obs.features[0] == 4.0 / 8.0
    assert obs.features[1] == 3.0 / 8.0
    assert obs.features[2] == 4.0 / 8.0  # target centroid x
    assert math.isclose(obs.features[4], 0.0, abs_tol=1e-12)


def test_render_ascii_shape():
    art = render_ascii(render_observation(griddrop_scene()))
    lines = art.splitlines()
    assert len(lines) == GRID_N
    assert all(len(ln) == GRID_N for ln in lines)

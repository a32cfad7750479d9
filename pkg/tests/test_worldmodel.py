"""World model tests: zero-parameter baselines, loss values, gradients
against finite differences, perturbation neighborhoods, value blending,
lower-confidence-bound scoring, and checkpoints."""

import math

import numpy as np
import pytest

from puzzlerl.action_types import EventSeq, GridPlace, LaunchParams
from puzzlerl.actions import ActionCodec
from puzzlerl.rng import make_rng
from puzzlerl.sim import Scene, circle, render_observation, segment
from puzzlerl.worldmodel import (
    OUTCOME_LABELS,
    WorldModel,
    action_features,
    calibration_report,
    lcb_score,
    perturb_neighbors,
    stability_score,
    strategy1_value,
    train_world_model,
    wm_loss,
)


def griddrop_obs():
    sc = Scene(env="griddrop", bodies=(
        circle(0, "green-target-ball", 4.0, 3.0, r=0.3),
        segment(1, "target-region", 3.0, 1.0, 5.0, 1.0),
    ))
    return np.asarray(render_observation(sc).features)


# ------------------------------------------------------------ zero baselines

def test_zero_parameters_predict_half_and_uniform():
    wm = WorldModel("griddrop")
    obs = griddrop_obs()
    act = action_features(ActionCodec(env="griddrop"), GridPlace(12, 4))
    assert wm.predict(obs, act) == 0.5
    logp = wm.label_log_probs(obs, act)
    assert len(logp) == len(OUTCOME_LABELS) == 6
    probs = np.exp(logp)
    assert np.allclose(probs, 1.0 / 6.0, rtol=0, atol=1e-15)


def test_wm_loss_zero_model_oracle():
    # success prob 0.5 and a uniform 4-way label head: ln 2 + 0.2 ln 4
    loss = wm_loss(0.0, 1, np.zeros(4), 2, lam=0.2)
    assert math.isclose(loss, math.log(2.0) + 0.2 * math.log(4.0), rel_tol=1e-12)
    loss0 = wm_loss(0.0, 0, np.zeros(4), 0, lam=0.2)
    assert math.isclose(loss0, math.log(2.0) + 0.2 * math.log(4.0), rel_tol=1e-12)


def test_wm_loss_hand_computed_case():
    s_logit = math.log(3.0)  # p = 3/4
    label_logits = np.asarray([math.log(2.0), 0.0, 0.0])
    # label probs = (1/2, 1/4, 1/4)
    want = -math.log(0.75) + 0.2 * -math.log(0.25)
    got = wm_loss(s_logit, 1, label_logits, 1, lam=0.2)
    assert math.isclose(got, want, rel_tol=1e-12)
    want_n = -math.log(0.25) + 0.2 * -math.log(0.5)
    got_n = wm_loss(s_logit, 0, label_logits, 0, lam=0.2)
    assert math.isclose(got_n, want_n, rel_tol=1e-12)


def test_predict_temperature_scales_logit():
    wm = WorldModel.create("griddrop", seed=1)
    obs = griddrop_obs()
    act = action_features(ActionCodec(env="griddrop"), GridPlace(30, 5))
    s_logit, _, _ = wm.forward(obs, act)
    for temp in (0.25, 1.0, 2.0):
        want = 1.0 / (1.0 + math.exp(-s_logit / temp))
        assert math.isclose(wm.predict(obs, act, temperature=temp), want, rel_tol=1e-12)


# ------------------------------------------------------------------ gradient

def test_loss_gradient_matches_finite_differences():
    wm = WorldModel.create("timedremove", seed=2)
    codec = ActionCodec(env="timedremove", removable_ids=(4, 7))
    obs = make_rng("wm-obs").uniform(0, 1, size=wm.obs_dim)
    act = action_features(codec, EventSeq.make([(4, 1.0), (7, 2.5)]))
    y, y_label = 1, 3

    grad = np.zeros_like(wm.params)
    wm.loss_and_grad(obs, act, y, y_label, lam=0.2, grad_out=grad)

    def scalar():
        s, ll, _ = wm.forward(obs, act)
        return wm_loss(s, y, ll, y_label, lam=0.2)

    rng = make_rng("wm-fd")
    h = 1e-5
    for idx in rng.choice(wm.params.size, size=60, replace=False):
        saved = wm.params[idx]
        wm.params[idx] = saved + h
        up = scalar()
        wm.params[idx] = saved - h
        down = scalar()
        wm.params[idx] = saved
        fd = (up - down) / (2.0 * h)
        denom = max(1.0, abs(fd), abs(grad[idx]))
        assert abs(fd - grad[idx]) / denom < 1e-4, (int(idx), fd, grad[idx])


# ------------------------------------------------------------------- training

def test_training_fits_a_separable_rule():
    codec = ActionCodec(env="griddrop")
    obs = griddrop_obs()
    records = []
    for cell in range(1, 65):
        col = (cell - 1) % 8
        y = 1 if col < 4 else 0
        label = 2 if y else 4
        records.append((obs, action_features(codec, GridPlace(cell, 4)), y, label))
    wm = WorldModel.create("griddrop", seed=3)
    history = train_world_model(wm, records, epochs=200, lr=0.01, seed=4)
    assert history[-1] < history[0]
    correct = 0
    for o, a, y, _ in records:
        correct += int((wm.predict(o, a) >= 0.5) == bool(y))
    assert correct / len(records) >= 0.95


# ------------------------------------------------------------- perturbations

def test_griddrop_neighbors_full_interior_set():
    codec = ActionCodec(env="griddrop")
    rng = make_rng("perturb", 0)
    action = GridPlace(cell=28, radius=4)  # interior cell, interior radius
    nbrs = perturb_neighbors(codec, action, rng, j=12)
    assert len(nbrs) == 12
    assert action not in nbrs
    # exactly the 4-neighborhood of the cell crossed with radius -1, 0, +1
    row, col = (28 - 1) // 8, (28 - 1) % 8
    want = set()
    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        for drad in (-1, 0, 1):
            want.add(GridPlace(cell=(row + dr) * 8 + (col + dc) + 1,
                               radius=4 + drad))
    assert set(nbrs) == want


def test_griddrop_neighbors_corner_pads_with_valid_resamples():
    codec = ActionCodec(env="griddrop")
    rng = make_rng("perturb", 1)
    action = GridPlace(cell=1, radius=1)
    nbrs = perturb_neighbors(codec, action, rng, j=12)
    assert len(nbrs) == 12
    valid = {GridPlace(cell=2, radius=1), GridPlace(cell=2, radius=2),
             GridPlace(cell=9, radius=1), GridPlace(cell=9, radius=2)}
    assert set(nbrs) == valid  # only 4 distinct neighbors exist, padded
    for a in nbrs:
        assert 1 <= a.cell <= 64 and 1 <= a.radius <= 8


def test_griddrop_neighbors_are_seeded():
    codec = ActionCodec(env="griddrop")
    a = perturb_neighbors(codec, GridPlace(1, 1), make_rng("p", 5), j=12)
    b = perturb_neighbors(codec, GridPlace(1, 1), make_rng("p", 5), j=12)
    assert a == b


def test_timedremove_neighbors_stay_canonical_on_lattice():
    codec = ActionCodec(env="timedremove", removable_ids=(3, 5, 9))
    action = EventSeq.make([(3, 0.0), (5, 9.5), (9, 4.0)])
    rng = make_rng("perturb", 2)
    nbrs = perturb_neighbors(codec, action, rng, j=12)
    assert len(nbrs) == 12
    for seq in nbrs:
        assert seq.is_canonical()
        ids = sorted(b for b, _ in seq.events)
        assert ids == [3, 5, 9]  # jitter changes times, never membership
        for _, t in seq.events:
            assert 0.0 <= t <= 10.0
            assert math.isclose(t % 0.5, 0.0, abs_tol=1e-9) or math.isclose(t % 0.5, 0.5, abs_tol=1e-9)


def test_launch_variant_neighbors():
    rng = make_rng("perturb", 3)
    nbrs = perturb_neighbors(None, LaunchParams(theta_deg=45.0, power=0.5), rng, j=12)
    assert len(nbrs) == 12
    allowed = set()
    for dt in (-5.0, 0.0, 5.0):
        for dp in (-0.1, 0.0, 0.1):
            if dt == 0.0 and dp == 0.0:
                continue
            allowed.add((45.0 + dt, round(0.5 + dp, 10)))
    for a in nbrs:
        assert (a.theta_deg, round(a.power, 10)) in allowed
    edge = perturb_neighbors(None, LaunchParams(0.0, 1.0), make_rng("p", 6), j=12)
    assert len(edge) == 12
    for a in edge:
        assert 0.0 <= a.theta_deg <= 90.0 and 0.0 <= a.power <= 1.0
        assert not (a.theta_deg == 0.0 and a.power == 1.0)


# ------------------------------------------------------------------- scoring

def test_stability_score_averages_neighbor_predictions():
    codec = ActionCodec(env="griddrop")
    action = GridPlace(cell=28, radius=4)
    nbrs = perturb_neighbors(codec, action, make_rng("stab", 7), j=12)
    table = {a: (1.0 if a.radius == 4 else 0.25) for a in set(nbrs)}
    got = stability_score(lambda a: table[a], codec, action, seed=7)
    want = sum(table[a] for a in nbrs) / 12.0
    assert math.isclose(got, want, rel_tol=1e-12)


def test_strategy1_value_blends_success_and_stability():
    assert math.isclose(strategy1_value(0.8, 0.4, alpha=0.25), 0.7, rel_tol=1e-12)
    assert strategy1_value(1.0, 1.0) == 1.0
    assert strategy1_value(0.0, 0.0) == 0.0


def test_lcb_score_zero_logit_is_exactly_half():
    assert lcb_score(0.0, seed=0) == 0.5
    assert lcb_score(0.0, seed=123) == 0.5


def test_lcb_score_matches_hand_computation():
    s_logit = 1.3
    seed = 9
    temps = make_rng("lcb", seed).uniform(0.1, 1.0, size=8)
    ps = 1.0 / (1.0 + np.exp(-s_logit / temps))
    want = float(ps.mean() - 0.2 * ps.std())
    assert math.isclose(lcb_score(s_logit, seed=seed), want, rel_tol=1e-12)
    assert lcb_score(s_logit, seed=seed) == lcb_score(s_logit, seed=seed)


# -------------------------------------------------------------- calibration

def test_calibration_report_structure():
    wm = WorldModel.create("griddrop", seed=5)
    codec = ActionCodec(env="griddrop")
    obs = griddrop_obs()
    records = [(obs, action_features(codec, GridPlace(c, 4)), c % 2, 0)
               for c in range(1, 33)]
    rep = calibration_report(wm, records, bins=10)
    assert len(rep["bins"]) == 10
    assert 0.0 <= rep["ece"] <= 1.0
    assert 0.0 <= rep["brier"] <= 1.0
    assert rep["count"] == 32


# --------------------------------------------------------------- checkpoints

def test_world_model_checkpoint_round_trip(tmp_path):
    wm = WorldModel.create("timedremove", seed=6)
    wm.params[:] = make_rng("wm-noise").uniform(-1, 1, size=wm.params.size)
    path = tmp_path / "wm.ckpt"
    wm.save(path)
    back = WorldModel.load(path)
    assert back.env == wm.env
    assert np.array_equal(back.params, wm.params)
    assert back.params.tobytes() == wm.params.tobytes()


def test_world_model_checkpoint_rejects_dim_mismatch(tmp_path):
    wm = WorldModel.create("griddrop", seed=7)
    path = tmp_path / "wm.ckpt"
    wm.save(path)
    raw = path.read_bytes()
    head, _, body = raw.partition(b"\n")
    import json
    meta = json.loads(head)
    meta["n_labels"] = 9
    path.write_bytes(json.dumps(meta).encode() + b"\n" + body)
    with pytest.raises(ValueError):
        WorldModel.load(path)

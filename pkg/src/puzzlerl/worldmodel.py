"""Offline world model: predicts attempt success and a coarse outcome label
from scene features and action features, without running the simulator.

The model is a one-hidden-layer numpy MLP with two heads. The training loss
is binary cross entropy on the success head plus a weighted cross entropy on
the label head. On top of the raw success probability sit three scoring
utilities used by the planner: a stability score averaging predictions over
perturbed neighbor actions, a blended value of success and stability, and a
lower confidence bound over a small ensemble of prediction temperatures.
"""

import json
import math

import numpy as np

from puzzlerl.action_types import EventSeq, GridPlace, LaunchParams, RADIUS_LEVELS
from puzzlerl.rng import make_rng
from puzzlerl.sim.envs import GRID_N, feature_dim

OUTCOME_LABELS = (
    "no-contact",
    "agent-hits-green",
    "green-reaches-target",
    "ball-falls-abyss",
    "blocked",
    "other",
)

HIDDEN = 64
LAMBDA_LABEL = 0.2
STABILITY_NEIGHBORS = 12
VALUE_ALPHA = 0.25
LCB_DRAWS = 8
LCB_COEFF = 0.2

CHECKPOINT_FORMAT = "puzzlerl-worldmodel"
CHECKPOINT_VERSION = 1

_REMOVABLE_SLOTS = 8


def act_dim(env: str) -> int:
    return 3 if env == "griddrop" else 2 * _REMOVABLE_SLOTS


def action_features(codec, action) -> np.ndarray:
    """Fixed-length numeric encoding of an action for the world model."""
    if isinstance(action, GridPlace):
        row, col = (action.cell - 1) // GRID_N, (action.cell - 1) % GRID_N
        return np.asarray([
            (col + 0.5) / GRID_N,
            (row + 0.5) / GRID_N,
            action.radius / RADIUS_LEVELS,
        ])
    if isinstance(action, EventSeq):
        out = np.zeros(2 * _REMOVABLE_SLOTS)
        times = dict(action.events)
        for slot, body_id in enumerate(codec.removable_ids[:_REMOVABLE_SLOTS]):
            if body_id in times:
                out[2 * slot] = 1.0
                out[2 * slot + 1] = times[body_id] / 10.0
        return out
    raise TypeError(f"no feature encoding for {type(action).__name__}")


def _softplus(x: float) -> float:
    if x > 30.0:
        return x
    return math.log1p(math.exp(x))


def wm_loss(s_logit: float, y: int, label_logits, y_label: int,
            lam: float = LAMBDA_LABEL) -> float:
    """Binary cross entropy on success plus lam * cross entropy on the label.

    The label vocabulary size is whatever length label_logits has.
    """
    bce = _softplus(s_logit) - y * s_logit
    z = np.asarray(label_logits, dtype=np.float64)
    z = z - z.max()
    logp = z - math.log(np.exp(z).sum())
    return float(bce - lam * logp[y_label])


class WorldModel:
    def __init__(self, env: str, n_labels: int = len(OUTCOME_LABELS), params=None):
        self.env = env
        self.obs_dim = feature_dim(env)
        self.act_dim = act_dim(env)
        self.n_labels = n_labels
        d_in = self.obs_dim + self.act_dim
        self._layout = [
            ("w1", (HIDDEN, d_in)),
            ("b1", (HIDDEN,)),
            ("ws", (HIDDEN,)),
            ("bs", (1,)),
            ("wl", (n_labels, HIDDEN)),
            ("bl", (n_labels,)),
        ]
        self.param_count = sum(int(np.prod(s)) for _, s in self._layout)
        if params is None:
            params = np.zeros(self.param_count, dtype=np.float64)
        self.params = np.ascontiguousarray(params, dtype=np.float64)
        if self.params.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters")
        self.views = self._make_views(self.params)

    def _make_views(self, vec) -> dict:
        views = {}
        off = 0
        for name, shape in self._layout:
            size = int(np.prod(shape))
            views[name] = vec[off:off + size].reshape(shape)
            off += size
        return views

    @staticmethod
    def create(env: str, seed, n_labels: int = len(OUTCOME_LABELS)) -> "WorldModel":
        wm = WorldModel(env, n_labels=n_labels)
        rng = make_rng("wm-init", env, seed)
        wm.params[:] = rng.uniform(-0.05, 0.05, size=wm.param_count)
        return wm

    def forward(self, obs_feats, act_feats):
        v = self.views
        z = np.concatenate([
            np.asarray(obs_feats, dtype=np.float64),
            np.asarray(act_feats, dtype=np.float64),
        ])
        h = np.tanh(v["w1"] @ z + v["b1"])
        s_logit = float(v["ws"] @ h + v["bs"][0])
        label_logits = v["wl"] @ h + v["bl"]
        return s_logit, label_logits, (z, h)

    def predict(self, obs_feats, act_feats, temperature: float = 1.0) -> float:
        s_logit, _, _ = self.forward(obs_feats, act_feats)
        return 1.0 / (1.0 + math.exp(-s_logit / temperature))

    def label_log_probs(self, obs_feats, act_feats) -> np.ndarray:
        _, label_logits, _ = self.forward(obs_feats, act_feats)
        z = label_logits - label_logits.max()
        return z - math.log(np.exp(z).sum())

    def loss_and_grad(self, obs_feats, act_feats, y: int, y_label: int,
                      lam: float = LAMBDA_LABEL, grad_out=None) -> float:
        s_logit, label_logits, (z, h) = self.forward(obs_feats, act_feats)
        loss = wm_loss(s_logit, y, label_logits, y_label, lam=lam)
        if grad_out is None:
            return loss
        v = self.views
        g = self._make_views(grad_out)
        ds = 1.0 / (1.0 + math.exp(-s_logit)) - y
        zl = label_logits - label_logits.max()
        p_label = np.exp(zl)
        p_label = p_label / p_label.sum()
        dlab = lam * p_label
        dlab[y_label] -= lam
        g["ws"] += ds * h
        g["bs"][0] += ds
        g["wl"] += np.outer(dlab, h)
        g["bl"] += dlab
        dh = ds * v["ws"] + v["wl"].T @ dlab
        du = dh * (1.0 - h * h)
        g["w1"] += np.outer(du, z)
        g["b1"] += du
        return loss

    # ----------------------------------------------------------- checkpoint

    def save(self, path) -> None:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "env": self.env,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "n_labels": self.n_labels,
            "hidden": HIDDEN,
            "param_count": self.param_count,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
            fh.write(self.params.tobytes())

    @staticmethod
    def load(path) -> "WorldModel":
        with open(path, "rb") as fh:
            head = fh.readline()
            body = fh.read()
        meta = json.loads(head)
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a world model checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        if meta.get("hidden") != HIDDEN:
            raise ValueError("hidden width mismatch")
        params = np.frombuffer(body, dtype=np.float64).copy()
        wm = WorldModel(meta["env"], n_labels=int(meta["n_labels"]), params=params)
        if wm.obs_dim != meta.get("obs_dim") or wm.act_dim != meta.get("act_dim"):
            raise ValueError("feature dimension mismatch")
        if wm.param_count != meta.get("param_count"):
            raise ValueError("parameter count mismatch")
        return wm


def train_world_model(model: WorldModel, records, *, epochs: int, lr: float,
                      seed, lam: float = LAMBDA_LABEL) -> list:
    """Adam over per-record losses; returns the mean loss per epoch.

    records: iterable of (obs_features, action_features, success, label_idx).
    """
    data = list(records)
    m = np.zeros_like(model.params)
    v = np.zeros_like(model.params)
    b1, b2, eps_adam = 0.9, 0.999, 1e-8
    t = 0
    history = []
    for epoch in range(epochs):
        order = make_rng("wm-train", seed, epoch).permutation(len(data))
        total = 0.0
        for j in order:
            obs, act, y, y_label = data[int(j)]
            grad = np.zeros_like(model.params)
            total += model.loss_and_grad(obs, act, int(y), int(y_label),
                                         lam=lam, grad_out=grad)
            t += 1
            m = b1 * m + (1.0 - b1) * grad
            v = b2 * v + (1.0 - b2) * grad * grad
            m_hat = m / (1.0 - b1 ** t)
            v_hat = v / (1.0 - b2 ** t)
            model.params -= lr * m_hat / (np.sqrt(v_hat) + eps_adam)
        history.append(total / max(1, len(data)))
    return history


# ------------------------------------------------------------- perturbations

def _griddrop_neighbors(action: GridPlace, rng, j: int) -> list:
    row, col = (action.cell - 1) // GRID_N, (action.cell - 1) % GRID_N
    valid = []
    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        r2, c2 = row + dr, col + dc
        if not (0 <= r2 < GRID_N and 0 <= c2 < GRID_N):
            continue
        for drad in (-1, 0, 1):
            rad2 = action.radius + drad
            if 1 <= rad2 <= RADIUS_LEVELS:
                valid.append(GridPlace(cell=r2 * GRID_N + c2 + 1, radius=rad2))
    out = list(valid)
    while len(out) < j:
        out.append(valid[int(rng.integers(0, len(valid)))])
    return out[:j]


def _timedremove_neighbors(action: EventSeq, rng, j: int) -> list:
    deltas = (-1.0, -0.5, 0.5, 1.0)
    out = []
    for _ in range(j):
        events = []
        for body_id, t in action.events:
            if rng.random() < 0.5:
                t = t + deltas[int(rng.integers(0, len(deltas)))]
                t = min(10.0, max(0.0, t))
            events.append((body_id, t))
        out.append(EventSeq.make(events))
    return out


def _launch_neighbors(action: LaunchParams, rng, j: int) -> list:
    valid = []
    for dt in (-5.0, 0.0, 5.0):
        for dp in (-0.1, 0.0, 0.1):
            if dt == 0.0 and dp == 0.0:
                continue
            theta = action.theta_deg + dt
            power = action.power + dp
            if 0.0 <= theta <= 90.0 and 0.0 <= power <= 1.0:
                valid.append(LaunchParams(theta_deg=theta, power=power))
    out = list(valid)
    while len(out) < j:
        out.append(valid[int(rng.integers(0, len(valid)))])
    return out[:j]


def perturb_neighbors(codec, action, rng, j: int = STABILITY_NEIGHBORS) -> list:
    """J perturbed variants of an action for the stability score.

    Grid placements move one cell in each direction crossed with a radius
    level shift; out-of-range variants are dropped and the list padded by
    seeded resampling. Removal schedules jitter each event independently
    with probability one half by a half- or full-second, clamped to the
    lattice and re-sorted. Launch actions shift angle and power on a small
    cross. The identity never appears for placements and launches; a jitter
    draw may leave a removal schedule unchanged.
    """
    if isinstance(action, GridPlace):
        return _griddrop_neighbors(action, rng, j)
    if isinstance(action, EventSeq):
        return _timedremove_neighbors(action, rng, j)
    if isinstance(action, LaunchParams):
        return _launch_neighbors(action, rng, j)
    raise TypeError(f"no perturbation scheme for {type(action).__name__}")


# ------------------------------------------------------------------- scoring

def stability_score(predict_fn, codec, action, *, seed,
                    j: int = STABILITY_NEIGHBORS) -> float:
    """Mean predicted success over the perturbation neighborhood."""
    nbrs = perturb_neighbors(codec, action, make_rng("stab", seed), j=j)
    return sum(predict_fn(a) for a in nbrs) / float(len(nbrs))


def strategy1_value(p_succ: float, p_stab: float, alpha: float = VALUE_ALPHA) -> float:
    """Blend of predicted success and stability."""
    return (1.0 - alpha) * p_succ + alpha * p_stab


def lcb_parts(s_logit: float, *, seed, k: int = LCB_DRAWS,
              coeff: float = LCB_COEFF) -> tuple:
    """(mean, lower bound) of the tempered predictions behind lcb_score."""
    temps = make_rng("lcb", seed).uniform(0.1, 1.0, size=k)
    ps = 1.0 / (1.0 + np.exp(-s_logit / temps))
    return float(ps.mean()), float(ps.mean() - coeff * ps.std())


def lcb_score(s_logit: float, *, seed, k: int = LCB_DRAWS,
              coeff: float = LCB_COEFF) -> float:
    """Lower confidence bound over k prediction temperatures.

    Temperatures are drawn uniformly from [0.1, 1.0] with a seeded stream;
    the score is mean - coeff * population std of the tempered predictions.
    A zero logit gives exactly one half at any temperature.
    """
    return lcb_parts(s_logit, seed=seed, k=k, coeff=coeff)[1]


def calibration_report(model: WorldModel, records, bins: int = 10) -> dict:
    """Reliability summary of the success head on labeled records."""
    edges = [i / bins for i in range(bins + 1)]
    stats = [{"count": 0, "sum_pred": 0.0, "sum_y": 0.0} for _ in range(bins)]
    brier = 0.0
    n = 0
    for obs, act, y, _label in records:
        p = model.predict(obs, act)
        b = min(bins - 1, int(p * bins))
        stats[b]["count"] += 1
        stats[b]["sum_pred"] += p
        stats[b]["sum_y"] += float(y)
        brier += (p - float(y)) ** 2
        n += 1
    out_bins = []
    ece = 0.0
    for b, st in enumerate(stats):
        if st["count"]:
            conf = st["sum_pred"] / st["count"]
            acc = st["sum_y"] / st["count"]
            ece += st["count"] / n * abs(acc - conf)
        else:
            conf, acc = 0.0, 0.0
        out_bins.append({
            "lo": edges[b], "hi": edges[b + 1], "count": st["count"],
            "mean_pred": conf, "mean_y": acc,
        })
    return {
        "bins": out_bins,
        "ece": ece,
        "brier": brier / n if n else 0.0,
        "count": n,
    }

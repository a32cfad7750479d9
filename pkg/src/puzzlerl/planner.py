"""Root-node lookahead over policy-proposed candidate actions.

The policy proposes a small candidate set for the current scene; sample
frequencies become the prior. A fixed iteration budget then cycles
select / score / update: selection balances current value against prior
and visit counts, scoring queries the learned outcome model (memoized per
action, so repeat visits are free), and the update folds the score into a
running per-action average. Two rules stop the search early: selecting
the same action several times in a row, or a scored action whose raw
predicted success clears a confidence bar. Every run emits a trace that
replays byte-for-byte under the same seed.
"""

from dataclasses import dataclass
import hashlib
import json
import math
from typing import Optional

import numpy as np

from .actions import (
    ActionCodec,
    MalformedActionError,
    action_space,
    action_to_jsonable,
    decode_action,
)
from .rng import child_seed, make_rng
from .sim.envs import render_observation
from .tasks import TR_TIMES
from .worldmodel import action_features, lcb_parts, stability_score, strategy1_value

TRACE_FORMAT = "puzzlerl-plan-trace"
TRACE_VERSION = 1


@dataclass(frozen=True)
class PlannerConfig:
    samples: int = 32          # policy draws used to build the candidate set
    budget: int = 32           # max select/score/update iterations
    c_puct: float = 1.5
    strategy: int = 1          # 1 = blended stability value, 2 = temperature LCB
    mu_star: float = 0.8       # stop once a scored action predicts above this
    stop_repeat: int = 3       # stop on this many consecutive selections
    alpha: float = 0.25
    neighbors: int = 12
    lcb_draws: int = 8
    lcb_coeff: float = 0.2
    temperature: float = 0.7
    top_p: float = 0.95

    def validate(self) -> None:
        if self.samples < 1 or self.budget < 0:
            raise ValueError("samples must be >= 1 and budget >= 0")
        if self.strategy not in (1, 2):
            raise ValueError(f"unknown scoring strategy {self.strategy}")
        if self.stop_repeat < 2:
            raise ValueError("stop_repeat must be at least 2")


@dataclass
class SearchState:
    """Mutable per-search bookkeeping; lists are indexed by candidate."""

    actions: list
    prior: list
    visits: list
    values: list
    last_idx: Optional[int] = None
    n_same: int = 0


def action_key(action) -> str:
    """Canonical string identity of an action (memo and seed key)."""
    return json.dumps(action_to_jsonable(action), sort_keys=True,
                      separators=(",", ":"))


def update(state: SearchState, idx: int, value: float) -> None:
    """Fold a score into the running average for one candidate."""
    state.visits[idx] += 1
    state.values[idx] += (value - state.values[idx]) / state.visits[idx]


def puct_select(state: SearchState, c_puct: float) -> int:
    """Index maximizing value + c * prior * sqrt(total) / (1 + visits).

    Ties keep the earliest candidate (strict improvement only).
    """
    n_tot = sum(state.visits)
    best, best_val = 0, None
    for i in range(len(state.actions)):
        val = state.values[i] + c_puct * state.prior[i] * math.sqrt(n_tot) / (1 + state.visits[i])
        if best_val is None or val > best_val:
            best, best_val = i, val
    return best


def select_best(state: SearchState) -> int:
    """Final answer: highest running value, earliest candidate on ties."""
    best, best_q = 0, state.values[0]
    for i in range(1, len(state.actions)):
        if state.values[i] > best_q:
            best, best_q = i, state.values[i]
    return best


def generate_candidates(policy, codec: ActionCodec, features, history,
                        config: PlannerConfig, seed) -> tuple:
    """Sample the policy and build (actions, prior) for the search root.

    Malformed samples are dropped. The prior is each action's frequency
    among the valid samples; candidates keep first-appearance order. If
    every sample is malformed, fall back to a greedy decode, and failing
    that to a seeded uniform draw from the full action space.
    """
    rng = make_rng("plan-candidates", seed)
    decoded = []
    for _ in range(config.samples):
        tokens = policy.sample_sequence(codec, features, history, rng,
                                        temperature=config.temperature,
                                        top_p=config.top_p)
        try:
            decoded.append(decode_action(codec, tokens))
        except MalformedActionError:
            continue
    if not decoded:
        tokens = policy.sample_sequence(codec, features, history, rng,
                                        temperature=0.0, top_p=config.top_p)
        try:
            decoded.append(decode_action(codec, tokens))
        except MalformedActionError:
            times = TR_TIMES if codec.env == "timedremove" else None
            space = action_space(codec, times=times)
            pick = int(make_rng("plan-fallback", seed).integers(0, len(space)))
            decoded.append(space[pick])
    actions, counts = [], {}
    for a in decoded:
        k = action_key(a)
        if k not in counts:
            counts[k] = 0
            actions.append(a)
        counts[k] += 1
    total = len(decoded)
    prior = [counts[action_key(a)] / total for a in actions]
    return actions, prior


def score_action(model, obs_features, codec: ActionCodec, action,
                 config: PlannerConfig, seed) -> tuple:
    """Model-based (value, mu) for one action.

    mu is the raw success statistic checked against mu_star. Strategy 1
    blends the direct prediction with its perturbation-neighborhood mean;
    strategy 2 uses the temperature-ensemble lower bound as the value and
    the ensemble mean as mu. Both stay inside [0, 1].
    """
    score_seed = child_seed("plan-score", seed, action_key(action))
    feats = action_features(codec, action)
    if config.strategy == 1:
        p = model.predict(obs_features, feats)

        def predict_fn(a):
            return model.predict(obs_features, action_features(codec, a))

        stab = stability_score(predict_fn, codec, action,
                               seed=score_seed, j=config.neighbors)
        return strategy1_value(p, stab, alpha=config.alpha), p
    s_logit, _, _ = model.forward(obs_features, feats)
    mu, lcb = lcb_parts(s_logit, seed=score_seed,
                        k=config.lcb_draws, coeff=config.lcb_coeff)
    return lcb, mu


def _q_hash(state: SearchState) -> str:
    payload = json.dumps([state.visits, state.values], separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _iter_record(i: int, idx: int, scored: bool, value, mu,
                 state: SearchState) -> dict:
    return {
        "type": "iter",
        "i": i,
        "action": idx,
        "scored": scored,
        "v": value,
        "mu": mu,
        "n": state.visits[idx],
        "q": state.values[idx],
        "n_same": state.n_same,
        "q_hash": _q_hash(state),
    }


def plan(scene, history, policy, model, config: PlannerConfig, seed) -> tuple:
    """Pick an action for a scene; returns (action, trace records).

    history is the (tokens, solved) attempt list fed to the policy prompt.
    """
    config.validate()
    obs = render_observation(scene)
    features = np.asarray(obs.features, dtype=np.float64)
    codec = ActionCodec.for_scene(scene)
    actions, prior = generate_candidates(policy, codec, features, history,
                                         config, seed)
    state = SearchState(actions=list(actions), prior=list(prior),
                        visits=[0] * len(actions), values=[0.0] * len(actions))
    trace = [{
        "type": "plan",
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "env": scene.env,
        "seed": seed,
        "strategy": config.strategy,
        "budget": config.budget,
        "c_puct": config.c_puct,
        "mu_star": config.mu_star,
        "stop_repeat": config.stop_repeat,
        "candidates": [action_to_jsonable(a) for a in actions],
        "prior": prior,
    }]
    memo = {}
    stop = "budget"
    iterations = 0
    for it in range(1, config.budget + 1):
        iterations = it
        idx = puct_select(state, config.c_puct)
        state.n_same = state.n_same + 1 if idx == state.last_idx else 1
        state.last_idx = idx
        if state.n_same >= config.stop_repeat:
            stop = "repeat"
            trace.append(_iter_record(it, idx, False, None, None, state))
            break
        key = action_key(state.actions[idx])
        if key not in memo:
            memo[key] = score_action(model, features, codec,
                                     state.actions[idx], config, seed)
        value, mu = memo[key]
        update(state, idx, value)
        trace.append(_iter_record(it, idx, True, value, mu, state))
        if mu > config.mu_star:
            stop = "high-success"
            break
    best = select_best(state)
    trace.append({
        "type": "result",
        "action": best,
        "chosen": action_to_jsonable(state.actions[best]),
        "stop": stop,
        "iterations": iterations,
        "q_hash": _q_hash(state),
    })
    return state.actions[best], trace


def trace_to_lines(trace) -> list:
    return [json.dumps(rec, separators=(",", ":")) for rec in trace]


def write_trace(trace, path) -> None:
    with open(path, "w") as fh:
        for line in trace_to_lines(trace):
            fh.write(line + "\n")


def read_trace(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]

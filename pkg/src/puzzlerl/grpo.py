"""Group-relative policy optimization with per-attempt credit assignment.

A group is several rollouts of the same task, each a short episode of
attempts. Per attempt (turn) the discounted return looks forward over the
remaining turns; advantages standardize those returns across the group
separately per turn index, so a success on attempt 3 is compared against
other members' attempt 3. The surrogate is the clipped ratio objective with
a per-token KL penalty against a frozen reference policy, averaged per turn
over its generated tokens and per group over members. The same advantage
applies to every token in a turn (no within-turn discounting).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from puzzlerl.actions import (
    ActionCodec,
    MalformedActionError,
    decode_action,
    legal_next_ids,
)
from puzzlerl.policy import Policy
from puzzlerl.rng import make_rng
from puzzlerl.sim import (
    InvalidActionError,
    apply_action,
    check_success,
    render_observation,
    simulate_until_stable,
)

GAMMA_TURN = 0.95
CLIP_EPS = 0.2
KL_BETA = 0.001
GROUP_SIZE = 8
MAX_TURNS = 10
LEARNING_RATE = 1e-2
ROLLOUT_TEMPERATURE = 0.7
ROLLOUT_TOP_P = 0.95


@dataclass
class Turn:
    tokens: tuple
    reward: float
    logp_old: np.ndarray
    history: tuple  # (tokens, solved) pairs before this attempt
    mask: tuple = None  # 1 per generated token, 0 padding at the tail


@dataclass
class Member:
    turns: list = field(default_factory=list)


@dataclass
class Group:
    codec: ActionCodec
    features: np.ndarray
    members: list = field(default_factory=list)


def turn_returns(rewards, gamma: float) -> list:
    """Discounted sums over the remaining turns of the episode."""
    out = [0.0] * len(rewards)
    acc = 0.0
    for k in range(len(rewards) - 1, -1, -1):
        acc = rewards[k] + gamma * acc
        out[k] = acc
    return out


def group_advantages(returns) -> list:
    """Standardize returns per turn index across the group.

    Turn columns are ragged (members stop early on success); each column is
    standardized over the members that reached it, using the population
    standard deviation. A degenerate column gives zero advantages.
    """
    advs = [[0.0] * len(r) for r in returns]
    n_cols = max((len(r) for r in returns), default=0)
    for k in range(n_cols):
        idxs = [i for i, r in enumerate(returns) if len(r) > k]
        vals = [returns[i][k] for i in idxs]
        mu = sum(vals) / len(vals)
        var = sum((v - mu) ** 2 for v in vals) / len(vals)
        sd = math.sqrt(var)
        if sd < 1e-12:
            continue
        for i in idxs:
            advs[i][k] = (returns[i][k] - mu) / sd
    return advs


def compute_advantages(group: Group, gamma: float = GAMMA_TURN) -> list:
    returns = [turn_returns([t.reward for t in m.turns], gamma) for m in group.members]
    return group_advantages(returns)


def kl_masked(logp_a, logp_b, legal) -> float:
    """KL(a || b) over the legal token set, from full-vocab log probabilities."""
    total = 0.0
    for tok in legal:
        total += math.exp(logp_a[tok]) * (logp_a[tok] - logp_b[tok])
    return total


def attempt_reward(scene, codec: ActionCodec, tokens) -> float:
    """Simulate one attempt; malformed or invalid actions count as failures."""
    try:
        action = decode_action(codec, tokens)
        staged = apply_action(scene, action)
    except (MalformedActionError, InvalidActionError):
        return 0.0
    _, terminal = simulate_until_stable(staged)
    return 1.0 if check_success(terminal) else 0.0


def collect_group(policy: Policy, scene, group_size: int = GROUP_SIZE,
                  max_turns: int = MAX_TURNS, *, seed,
                  temperature: float = ROLLOUT_TEMPERATURE,
                  top_p: float = ROLLOUT_TOP_P) -> Group:
    """Roll out group_size episodes of the task under a frozen snapshot.

    Each member attempts up to max_turns times, stopping after a success;
    its history of (tokens, solved) grows between attempts so later turns
    condition on earlier failures.
    """
    codec = ActionCodec.for_scene(scene)
    feats = np.asarray(render_observation(scene).features)
    old = policy.snapshot()
    members = []
    for i in range(group_size):
        rng = make_rng("rollout", seed, i)
        history = []
        turns = []
        for _k in range(max_turns):
            toks = old.sample_sequence(codec, feats, history, rng,
                                       temperature=temperature, top_p=top_p)
            reward = attempt_reward(scene, codec, toks)
            logp_old = old.sequence_logprobs(codec, feats, history, toks)
            turns.append(Turn(
                tokens=toks, reward=reward, logp_old=logp_old,
                history=tuple(history),
            ))
            history.append((toks, reward > 0.0))
            if reward > 0.0:
                break
        members.append(Member(turns=turns))
    return Group(codec=codec, features=feats, members=members)


def grpo_objective(policy: Policy, group: Group, advs, *, ref: Policy,
                   eps: float = CLIP_EPS, beta: float = KL_BETA,
                   want_grad: bool = False):
    """Masked clipped-surrogate objective with per-token KL penalty.

    Returns (objective, gradient or None, stats). Exact ratio ties at the
    clip boundary follow the unclipped branch, so the kink contributes the
    unclipped gradient.
    """
    G = len(group.members)
    grad = np.zeros_like(policy.params) if want_grad else None
    J = 0.0
    ratio_lo, ratio_hi, ratio_dev = math.inf, -math.inf, 0.0
    kl_sum, kl_count = 0.0, 0
    reward_sum, n_turns = 0.0, 0
    clip_count, token_count = 0, 0
    for i, member in enumerate(group.members):
        for k, turn in enumerate(member.turns):
            A = advs[i][k]
            mask = turn.mask if turn.mask is not None else (1,) * len(turn.tokens)
            m_total = 0.0
            for m in mask:
                m_total += float(m)
            if m_total == 0.0:
                continue
            w = 1.0 / (G * m_total)
            n_turns += 1
            reward_sum += turn.reward
            prefix = []
            for t, tok in enumerate(turn.tokens):
                if not mask[t]:
                    break  # padding is tail-only
                legal = legal_next_ids(group.codec, prefix)
                logits, cache = policy.forward(group.features, turn.history, prefix)
                logp_vec = Policy.masked_log_probs(logits, legal)
                lp_new = logp_vec[tok]
                ratio = math.exp(lp_new - turn.logp_old[t])
                clipped = min(max(ratio, 1.0 - eps), 1.0 + eps)
                v1 = ratio * A
                v2 = clipped * A
                use_unclipped = v1 <= v2
                surr = v1 if use_unclipped else v2
                token_count += 1
                if not use_unclipped:
                    clip_count += 1
                if ref is policy:
                    ref_vec = logp_vec
                else:
                    ref_logits, _ = ref.forward(group.features, turn.history, prefix)
                    ref_vec = Policy.masked_log_probs(ref_logits, legal)
                kl = kl_masked(logp_vec, ref_vec, legal)
                J += w * (surr - beta * kl)
                ratio_lo = min(ratio_lo, ratio)
                ratio_hi = max(ratio_hi, ratio)
                ratio_dev = max(ratio_dev, abs(ratio - 1.0))
                kl_sum += kl
                kl_count += 1
                if want_grad:
                    probs = np.exp(logp_vec)
                    dlogits = np.zeros(len(logp_vec))
                    coef = w * A * ratio if use_unclipped else 0.0
                    if coef != 0.0:
                        dlogits -= coef * probs
                        dlogits[tok] += coef
                    if beta != 0.0:
                        idx = list(legal)
                        dkl = probs[idx] * (logp_vec[idx] - ref_vec[idx] - kl)
                        dlogits[idx] -= w * beta * dkl
                    policy.backward(cache, dlogits, grad)
                prefix.append(tok)
    stats = {
        "objective": J,
        "min_ratio": ratio_lo,
        "max_ratio": ratio_hi,
        "max_ratio_dev": ratio_dev,
        "mean_kl": kl_sum / kl_count if kl_count else 0.0,
        "clip_frac": clip_count / token_count if token_count else 0.0,
        "mean_reward": reward_sum / n_turns if n_turns else 0.0,
        "n_turns": n_turns,
    }
    return J, grad, stats


def train_step(policy: Policy, group: Group, ref: Policy, *,
               gamma: float = GAMMA_TURN, lr: float = LEARNING_RATE,
               eps: float = CLIP_EPS, beta: float = KL_BETA) -> dict:
    """One plain gradient ascent step on the group objective."""
    advs = compute_advantages(group, gamma)
    J, grad, stats = grpo_objective(policy, group, advs, ref=ref, eps=eps,
                                    beta=beta, want_grad=True)
    policy.params += lr * grad
    metrics = dict(stats)
    metrics["grad_norm"] = float(np.linalg.norm(grad))
    return metrics

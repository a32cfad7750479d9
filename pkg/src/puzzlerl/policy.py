"""Token policy: a small numpy MLP over pooled context.

The network scores the next action token given the scene features, a pooled
embedding of past attempts (action tokens plus their FAIL/SUCCESS marker), a
pooled embedding of the tokens generated so far, and a one-hot position code.
Illegal tokens are masked to probability zero and the rest renormalized.
Parameters live in one flat float64 vector with named views; gradients are
computed by hand and checked against finite differences in the tests.
"""

import json
import math

import numpy as np

from puzzlerl.actions import (
    END,
    FAIL,
    SUCCESS,
    VOCAB_SIZE,
    legal_next_ids,
    vocab_hash,
)
from puzzlerl.rng import make_rng
from puzzlerl.sim.envs import feature_dim

D_EMB = 16
D_FEAT = 24
HIDDEN = 64
P_MAX = 20

CHECKPOINT_FORMAT = "puzzlerl-policy"
CHECKPOINT_VERSION = 1


class Policy:
    def __init__(self, env: str, params=None):
        self.env = env
        self.feature_dim = feature_dim(env)
        self.d_in = D_FEAT + 2 * D_EMB + P_MAX
        self._layout = [
            ("emb", (VOCAB_SIZE, D_EMB)),
            ("feat_w", (D_FEAT, self.feature_dim)),
            ("feat_b", (D_FEAT,)),
            ("w1", (HIDDEN, self.d_in)),
            ("b1", (HIDDEN,)),
            ("w2", (VOCAB_SIZE, HIDDEN)),
            ("b2", (VOCAB_SIZE,)),
        ]
        self.param_count = sum(int(np.prod(shape)) for _, shape in self._layout)
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
    def create(env: str, seed) -> "Policy":
        pol = Policy(env)
        rng = make_rng("policy-init", env, seed)
        pol.params[:] = rng.uniform(-0.05, 0.05, size=pol.param_count)
        return pol

    def snapshot(self) -> "Policy":
        return Policy(self.env, params=self.params.copy())

    # ------------------------------------------------------------- forward

    def _pool_history(self, history):
        v = self.views
        x = np.zeros(D_EMB)
        if not history:
            return x, []
        groups = []
        for tokens, solved in history:
            toks = list(tokens) + [SUCCESS if solved else FAIL]
            groups.append(toks)
            x += v["emb"][toks].mean(axis=0)
        return x / len(groups), groups

    def forward(self, features, history, gen_prefix):
        """Logits over the full vocabulary for the next position."""
        v = self.views
        feats = np.asarray(features, dtype=np.float64)
        x_f = v["feat_w"] @ feats + v["feat_b"]
        x_h, groups = self._pool_history(history)
        prefix = list(gen_prefix)
        if prefix:
            x_g = v["emb"][prefix].mean(axis=0)
        else:
            x_g = np.zeros(D_EMB)
        x_p = np.zeros(P_MAX)
        x_p[min(len(prefix), P_MAX - 1)] = 1.0
        x = np.concatenate([x_f, x_h, x_g, x_p])
        h = np.tanh(v["w1"] @ x + v["b1"])
        logits = v["w2"] @ h + v["b2"]
        cache = (feats, groups, prefix, x, h)
        return logits, cache

    def backward(self, cache, dlogits, grad_out) -> None:
        """Accumulate d(objective)/d(params) into grad_out given dlogits."""
        feats, groups, prefix, x, h = cache
        v = self.views
        g = self._make_views(grad_out)
        dlogits = np.asarray(dlogits, dtype=np.float64)
        g["w2"] += np.outer(dlogits, h)
        g["b2"] += dlogits
        dh = v["w2"].T @ dlogits
        du = dh * (1.0 - h * h)
        g["w1"] += np.outer(du, x)
        g["b1"] += du
        dx = v["w1"].T @ du
        dx_f = dx[:D_FEAT]
        dx_h = dx[D_FEAT:D_FEAT + D_EMB]
        dx_g = dx[D_FEAT + D_EMB:D_FEAT + 2 * D_EMB]
        g["feat_w"] += np.outer(dx_f, feats)
        g["feat_b"] += dx_f
        if groups:
            for toks in groups:
                w = 1.0 / (len(groups) * len(toks))
                for tok in toks:
                    g["emb"][tok] += dx_h * w
        if prefix:
            w = 1.0 / len(prefix)
            for tok in prefix:
                g["emb"][tok] += dx_g * w

    # -------------------------------------------------------- distributions

    @staticmethod
    def masked_log_probs(logits, legal) -> np.ndarray:
        """Log probabilities over the full vocabulary; illegal tokens get -inf."""
        out = np.full(VOCAB_SIZE, -np.inf)
        idx = list(legal)
        z = logits[idx]
        z = z - z.max()
        out[idx] = z - np.log(np.exp(z).sum())
        return out

    def sample_sequence(self, codec, features, history, rng,
                        temperature: float = 0.7, top_p: float = 0.95) -> tuple:
        """Sample one grammar-terminated action token sequence.

        Nucleus sampling over the legal set: tokens sorted by descending
        probability (ties broken by token id), smallest prefix reaching top_p
        kept and renormalized. temperature below 1e-6 means plain argmax with
        the same tie-break and no RNG draw.
        """
        toks = []
        while True:
            legal = legal_next_ids(codec, toks)
            if not legal:
                break
            logits, _ = self.forward(features, history, toks)
            z = np.asarray([logits[t] for t in legal], dtype=np.float64)
            if temperature < 1e-6:
                order = sorted(range(len(legal)), key=lambda i: (-z[i], legal[i]))
                pick = legal[order[0]]
            else:
                z = z / temperature
                z = z - z.max()
                p = np.exp(z)
                p = p / p.sum()
                order = sorted(range(len(legal)), key=lambda i: (-p[i], legal[i]))
                kept = []
                cum = 0.0
                for i in order:
                    kept.append(i)
                    cum += p[i]
                    if cum >= top_p:
                        break
                mass = sum(p[i] for i in kept)
                u = rng.random()
                acc = 0.0
                pick = legal[kept[-1]]
                for i in kept:
                    acc += p[i] / mass
                    if u < acc:
                        pick = legal[i]
                        break
            toks.append(pick)
            if pick == END:
                break
        return tuple(toks)

    def sequence_logprobs(self, codec, features, history, tokens) -> np.ndarray:
        """Per-token log probability of the sequence under the masked policy."""
        out = np.empty(len(tokens))
        prefix = []
        for k, tok in enumerate(tokens):
            legal = legal_next_ids(codec, prefix)
            logits, _ = self.forward(features, history, prefix)
            logp = self.masked_log_probs(logits, legal)
            if not math.isfinite(logp[tok]):
                raise ValueError(f"token {tok} illegal at position {k}")
            out[k] = logp[tok]
            prefix.append(tok)
        return out

    # ----------------------------------------------------------- checkpoint

    def save(self, path) -> None:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "env": self.env,
            "feature_dim": self.feature_dim,
            "d_emb": D_EMB,
            "d_feat": D_FEAT,
            "hidden": HIDDEN,
            "p_max": P_MAX,
            "vocab_size": VOCAB_SIZE,
            "vocab_sha256": vocab_hash(),
            "param_count": self.param_count,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
            fh.write(self.params.tobytes())

    @staticmethod
    def load(path) -> "Policy":
        with open(path, "rb") as fh:
            head = fh.readline()
            body = fh.read()
        meta = json.loads(head)
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a policy checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        if meta.get("vocab_sha256") != vocab_hash():
            raise ValueError("checkpoint was written with a different vocabulary")
        for key, want in (("d_emb", D_EMB), ("d_feat", D_FEAT), ("hidden", HIDDEN),
                          ("p_max", P_MAX), ("vocab_size", VOCAB_SIZE)):
            if meta.get(key) != want:
                raise ValueError(f"checkpoint {key}={meta.get(key)} does not match build {want}")
        params = np.frombuffer(body, dtype=np.float64).copy()
        pol = Policy(meta["env"], params=params)
        if pol.feature_dim != meta.get("feature_dim"):
            raise ValueError("feature dimension mismatch")
        return pol

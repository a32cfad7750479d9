"""Shared token vocabulary and the action codec.

One flat vocabulary covers both environments: control tokens, grid cells,
radius levels, removable-slot indices, and removal times on the 0.5 s
lattice. Actions encode to short token sequences terminated by END; decoding
is strict and rejects anything the grammar would not generate. Histories are
laid out as [OBS] then, per past attempt, the action tokens followed by a
FAIL or SUCCESS marker.
"""

import hashlib
import itertools
from dataclasses import dataclass

from puzzlerl.action_types import (
    EventSeq,
    GRID_CELLS,
    GridPlace,
    RADIUS_LEVELS,
    TIME_MAX,
    TIME_STEP,
)

TIME_VALUES = tuple(k * TIME_STEP for k in range(int(TIME_MAX / TIME_STEP) + 1))

VOCAB = (
    ("OBS", "FAIL", "SUCCESS", "END")
    + tuple(f"CELL_{c}" for c in range(1, GRID_CELLS + 1))
    + tuple(f"RAD_{r}" for r in range(1, RADIUS_LEVELS + 1))
    + tuple(f"IDX_{i}" for i in range(8))
    + tuple(f"TIME_{t:.1f}" for t in TIME_VALUES)
)
TOKEN_TO_ID = {tok: i for i, tok in enumerate(VOCAB)}
VOCAB_SIZE = len(VOCAB)

OBS = TOKEN_TO_ID["OBS"]
FAIL = TOKEN_TO_ID["FAIL"]
SUCCESS = TOKEN_TO_ID["SUCCESS"]
END = TOKEN_TO_ID["END"]

_CELL_IDS = tuple(TOKEN_TO_ID[f"CELL_{c}"] for c in range(1, GRID_CELLS + 1))
_RAD_IDS = tuple(TOKEN_TO_ID[f"RAD_{r}"] for r in range(1, RADIUS_LEVELS + 1))
_IDX_IDS = tuple(TOKEN_TO_ID[f"IDX_{i}"] for i in range(8))
_TIME_IDS = tuple(TOKEN_TO_ID[f"TIME_{t:.1f}"] for t in TIME_VALUES)

_ACTION_SPACE_CAP = 1_000_000


def vocab_hash() -> str:
    return hashlib.sha256("\x1f".join(VOCAB).encode()).hexdigest()


class MalformedActionError(ValueError):
    """Token sequence is not a valid action encoding."""


@dataclass(frozen=True)
class ActionCodec:
    """Binds the grammar to a scene: which env, and which bodies the
    removable-slot indices refer to (sorted by body id)."""

    env: str
    removable_ids: tuple = ()

    @staticmethod
    def for_scene(scene) -> "ActionCodec":
        removable = tuple(sorted(b.id for b in scene.bodies if b.removable))
        return ActionCodec(env=scene.env, removable_ids=removable)


def _time_token(t: float) -> int:
    name = f"TIME_{t:.1f}"
    tok = TOKEN_TO_ID.get(name)
    if tok is None:
        raise MalformedActionError(f"time {t} not on the lattice")
    return tok


def encode_action(codec: ActionCodec, action) -> tuple:
    if codec.env == "griddrop":
        if not isinstance(action, GridPlace):
            raise MalformedActionError(f"expected GridPlace, got {type(action).__name__}")
        return (
            TOKEN_TO_ID[f"CELL_{action.cell}"],
            TOKEN_TO_ID[f"RAD_{action.radius}"],
            END,
        )
    if codec.env == "timedremove":
        if not isinstance(action, EventSeq):
            raise MalformedActionError(f"expected EventSeq, got {type(action).__name__}")
        out = []
        for body_id, t in action.events:
            try:
                idx = codec.removable_ids.index(body_id)
            except ValueError:
                raise MalformedActionError(f"body {body_id} is not a removable slot") from None
            out.append(_IDX_IDS[idx])
            out.append(_time_token(t))
        out.append(END)
        return tuple(out)
    raise MalformedActionError(f"unknown env {codec.env!r}")


def decode_action(codec: ActionCodec, tokens):
    toks = tuple(tokens)
    if not toks or toks[-1] != END:
        raise MalformedActionError("missing END terminator")
    if END in toks[:-1]:
        raise MalformedActionError("END before the final position")
    body = toks[:-1]
    if codec.env == "griddrop":
        if len(body) != 2 or body[0] not in _CELL_IDS or body[1] not in _RAD_IDS:
            raise MalformedActionError("griddrop action must be CELL RAD END")
        cell = _CELL_IDS.index(body[0]) + 1
        radius = _RAD_IDS.index(body[1]) + 1
        return GridPlace(cell=cell, radius=radius)
    if codec.env == "timedremove":
        if len(body) % 2 != 0:
            raise MalformedActionError("events must be IDX TIME pairs")
        n = len(codec.removable_ids)
        events = []
        last = None
        for k in range(0, len(body), 2):
            if body[k] not in _IDX_IDS or body[k + 1] not in _TIME_IDS:
                raise MalformedActionError("events must be IDX TIME pairs")
            idx = _IDX_IDS.index(body[k])
            t = TIME_VALUES[_TIME_IDS.index(body[k + 1])]
            if idx >= n:
                raise MalformedActionError(f"index {idx} beyond {n} removable slots")
            if last is not None and (t, idx) <= last:
                raise MalformedActionError("events not in canonical (time, index) order")
            last = (t, idx)
            events.append((codec.removable_ids[idx], t))
        return EventSeq(events=tuple(events))
    raise MalformedActionError(f"unknown env {codec.env!r}")


def legal_next_ids(codec: ActionCodec, prefix) -> tuple:
    """Token ids the grammar allows after the given (valid) prefix."""
    toks = tuple(prefix)
    if END in toks:
        return ()
    if codec.env == "griddrop":
        if len(toks) == 0:
            return _CELL_IDS
        if len(toks) == 1:
            return _RAD_IDS
        return (END,)
    if codec.env == "timedremove":
        n = len(codec.removable_ids)
        used = set()
        last = None
        pending = None
        for tok in toks:
            if pending is None:
                if tok not in _IDX_IDS:
                    raise MalformedActionError("invalid prefix")
                pending = _IDX_IDS.index(tok)
                if pending >= n or pending in used:
                    raise MalformedActionError("invalid prefix")
            else:
                if tok not in _TIME_IDS:
                    raise MalformedActionError("invalid prefix")
                t = TIME_VALUES[_TIME_IDS.index(tok)]
                if last is not None and (t, pending) <= last:
                    raise MalformedActionError("invalid prefix")
                used.add(pending)
                last = (t, pending)
                pending = None
        if pending is not None:
            # choose a time keeping (time, index) strictly increasing
            if last is None:
                return _TIME_IDS
            t_last, i_last = last
            return tuple(
                tid for tid, t in zip(_TIME_IDS, TIME_VALUES)
                if t > t_last or (t == t_last and pending > i_last)
            )
        out = []
        for idx in range(n):
            if idx in used:
                continue
            if last is not None:
                t_last, i_last = last
                # an index smaller than the previous one needs a strictly
                # later time, which must still exist on the lattice
                if idx < i_last and t_last >= TIME_VALUES[-1]:
                    continue
            out.append(_IDX_IDS[idx])
        out.append(END)
        return tuple(out)
    raise MalformedActionError(f"unknown env {codec.env!r}")


def max_action_tokens(codec: ActionCodec) -> int:
    if codec.env == "griddrop":
        return 3
    return 2 * len(codec.removable_ids) + 1


def action_space(codec: ActionCodec, times=None) -> list:
    """Every action the grammar can express, in a fixed enumeration order.

    For timedremove each removable slot independently takes "never" or one
    lattice time (times defaults to the full grammar lattice); pass a shorter
    lattice to bound the enumeration.
    """
    if codec.env == "griddrop":
        return [
            GridPlace(cell=c, radius=r)
            for c in range(1, GRID_CELLS + 1)
            for r in range(1, RADIUS_LEVELS + 1)
        ]
    if codec.env == "timedremove":
        options = (None,) + tuple(times if times is not None else TIME_VALUES)
        n = len(codec.removable_ids)
        if len(options) ** n > _ACTION_SPACE_CAP:
            raise ValueError(
                f"action space {len(options)}^{n} too large to enumerate; "
                "pass a shorter time lattice"
            )
        out = []
        for combo in itertools.product(options, repeat=n):
            events = [
                (body_id, t)
                for body_id, t in zip(codec.removable_ids, combo)
                if t is not None
            ]
            out.append(EventSeq.make(events))
        return out
    raise MalformedActionError(f"unknown env {codec.env!r}")


def build_context(codec: ActionCodec, past) -> tuple:
    """History prompt: [OBS] then action tokens + FAIL/SUCCESS per attempt."""
    ctx = [OBS]
    for tokens, solved in past:
        ctx.extend(tokens)
        ctx.append(SUCCESS if solved else FAIL)
    return tuple(ctx)


def action_to_jsonable(action) -> dict:
    """Plain-dict form of an action for dataset records and reports."""
    if isinstance(action, GridPlace):
        return {"kind": "place", "cell": action.cell, "radius": action.radius}
    if isinstance(action, EventSeq):
        return {"kind": "schedule", "events": [[i, t] for i, t in action.events]}
    raise MalformedActionError(f"cannot serialize {type(action).__name__}")


def action_from_jsonable(data: dict):
    kind = data.get("kind")
    if kind == "place":
        return GridPlace(cell=int(data["cell"]), radius=int(data["radius"]))
    if kind == "schedule":
        return EventSeq.make([(int(i), float(t)) for i, t in data["events"]])
    raise MalformedActionError(f"unknown action kind {kind!r}")

"""Token codec tests: vocabulary, round trips, grammar masks, and context
layout. The grammar oracle is a prefix tree built from the full enumerated
action space; a token is legal after a prefix exactly when some complete
action encoding extends it."""

import pytest

from puzzlerl.actions import (
    END,
    FAIL,
    OBS,
    SUCCESS,
    TOKEN_TO_ID,
    VOCAB,
    ActionCodec,
    MalformedActionError,
    action_space,
    build_context,
    decode_action,
    encode_action,
    legal_next_ids,
    max_action_tokens,
    vocab_hash,
)
from puzzlerl.action_types import EventSeq, GridPlace
from puzzlerl.rng import make_rng
from puzzlerl.sim import Scene, circle, segment


def griddrop_codec() -> ActionCodec:
    sc = Scene(env="griddrop", bodies=(
        circle(0, "green-target-ball", 4.0, 3.0, r=0.3),
        segment(1, "target-region", 3.0, 1.0, 5.0, 1.0),
    ))
    return ActionCodec.for_scene(sc)


def timedremove_codec(n_removable=2) -> ActionCodec:
    bodies = [circle(0, "red-ball", 4.0, 3.0, r=0.3)]
    for k in range(n_removable):
        bodies.append(segment(10 + k, "removable-block",
                              1.0 + k, 2.0, 1.6 + k, 2.0, removable=True))
    sc = Scene(env="timedremove", bodies=tuple(bodies))
    return ActionCodec.for_scene(sc)


# ----------------------------------------------------------------- vocabulary

def test_vocab_layout():
    assert len(VOCAB) == 105
    assert VOCAB[:4] == ("OBS", "FAIL", "SUCCESS", "END")
    assert "CELL_1" in TOKEN_TO_ID and "CELL_64" in TOKEN_TO_ID
    assert "RAD_1" in TOKEN_TO_ID and "RAD_8" in TOKEN_TO_ID
    assert "IDX_0" in TOKEN_TO_ID and "IDX_7" in TOKEN_TO_ID
    assert "TIME_0.0" in TOKEN_TO_ID and "TIME_10.0" in TOKEN_TO_ID
    assert "TIME_10.5" not in TOKEN_TO_ID
    assert len(set(VOCAB)) == len(VOCAB)
    for i, tok in enumerate(VOCAB):
        assert TOKEN_TO_ID[tok] == i


def test_vocab_hash_is_stable():
    h1 = vocab_hash()
    h2 = vocab_hash()
    assert h1 == h2
    assert isinstance(h1, str) and len(h1) == 64


# ---------------------------------------------------------------- round trips

def test_griddrop_round_trip_exhaustive():
    codec = griddrop_codec()
    seen = set()
    for action in action_space(codec):
        toks = encode_action(codec, action)
        assert toks[-1] == END
        assert len(toks) == 3
        back = decode_action(codec, toks)
        assert back == action
        seen.add(toks)
    assert len(seen) == 512


def test_timedremove_round_trip_exhaustive():
    codec = timedremove_codec(2)
    seen = set()
    for action in action_space(codec):
        toks = encode_action(codec, action)
        back = decode_action(codec, toks)
        assert back == action
        seen.add(toks)
    # per removable: never or one of 21 lattice times
    assert len(seen) == 22 * 22


def test_timedremove_encoding_is_canonical_order():
    codec = timedremove_codec(3)
    action = EventSeq.make([(12, 0.5), (10, 1.0), (11, 0.5)])
    toks = encode_action(codec, action)
    names = [VOCAB[t] for t in toks]
    assert names == ["IDX_1", "TIME_0.5", "IDX_2", "TIME_0.5",
                     "IDX_0", "TIME_1.0", "END"]


def test_decode_rejects_malformed():
    g = griddrop_codec()
    t = timedremove_codec(2)
    id_cell = TOKEN_TO_ID["CELL_5"]
    id_rad = TOKEN_TO_ID["RAD_2"]
    id_idx = TOKEN_TO_ID["IDX_0"]
    id_time = TOKEN_TO_ID["TIME_1.0"]
    bad = [
        (g, ()),
        (g, (id_cell, id_rad)),                      # missing END
        (g, (id_rad, id_cell, END)),                 # wrong order
        (g, (id_cell, id_rad, END, END)),            # trailing tokens
        (g, (id_cell, id_cell, END)),
        (g, (OBS, id_rad, END)),
        (t, (id_idx, END)),                          # dangling index
        (t, (id_time, id_idx, END)),                 # wrong order
        (t, (id_idx, id_time, id_idx, id_time, END)),  # duplicate index
        (t, (TOKEN_TO_ID["IDX_7"], id_time, END)),   # index out of range
        (t, (id_cell, id_rad, END)),                 # wrong env grammar
    ]
    for codec, toks in bad:
        with pytest.raises(MalformedActionError):
            decode_action(codec, toks)


def test_timedremove_decode_rejects_non_canonical():
    codec = timedremove_codec(2)
    toks = (TOKEN_TO_ID["IDX_1"], TOKEN_TO_ID["TIME_0.5"],
            TOKEN_TO_ID["IDX_0"], TOKEN_TO_ID["TIME_0.5"], END)
    with pytest.raises(MalformedActionError):
        decode_action(codec, toks)


# -------------------------------------------------------------- grammar masks

def _prefix_tree_legal(codec, prefix):
    """Oracle: tokens that extend the prefix toward some complete encoding."""
    legal = set()
    for action in action_space(codec):
        toks = encode_action(codec, action)
        if len(toks) > len(prefix) and toks[:len(prefix)] == tuple(prefix):
            legal.add(toks[len(prefix)])
    return legal


@pytest.mark.parametrize("env", ["griddrop", "timedremove"])
def test_legal_next_matches_prefix_tree_oracle(env):
    codec = griddrop_codec() if env == "griddrop" else timedremove_codec(2)
    rng = make_rng("grammar", env)
    actions = action_space(codec)
    # every prefix of a sample of complete encodings, plus the empty prefix
    prefixes = [()]
    for k in rng.choice(len(actions), size=min(60, len(actions)), replace=False):
        toks = encode_action(codec, actions[int(k)])
        for cut in range(1, len(toks)):
            prefixes.append(toks[:cut])
    for prefix in prefixes:
        want = _prefix_tree_legal(codec, prefix)
        got = set(legal_next_ids(codec, prefix))
        assert got == want, (prefix, sorted(got), sorted(want))


def test_legal_next_after_end_is_empty():
    codec = griddrop_codec()
    toks = encode_action(codec, GridPlace(1, 1))
    assert legal_next_ids(codec, toks) == ()


def test_max_action_tokens():
    assert max_action_tokens(griddrop_codec()) == 3
    assert max_action_tokens(timedremove_codec(2)) == 5
    assert max_action_tokens(timedremove_codec(3)) == 7


# ------------------------------------------------------------------- context

def test_context_layout_with_past_attempts():
    codec = griddrop_codec()
    a1 = encode_action(codec, GridPlace(12, 4))
    a2 = encode_action(codec, GridPlace(40, 2))
    ctx = build_context(codec, [(a1, False), (a2, False)])
    want = (OBS,) + a1 + (FAIL,) + a2 + (FAIL,)
    assert ctx == want

    ctx2 = build_context(codec, [(a1, True)])
    assert ctx2 == (OBS,) + a1 + (SUCCESS,)

    assert build_context(codec, []) == (OBS,)


def test_control_token_ids_are_distinct():
    assert len({OBS, FAIL, SUCCESS, END}) == 4

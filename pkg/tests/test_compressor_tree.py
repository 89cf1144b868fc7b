import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from arithtree.compressor_tree import (
    Bit,
    Compressor,
    CompressorState,
    action_digit,
    apply_compress,
    delay_ceiling,
    deserialize_actions,
    features,
    finalize_operands,
    init_state,
    replay,
    serialize_actions,
)
from arithtree.exceptions import NotTerminal, ParseError, TerminalState


@pytest.mark.parametrize("width", [2, 4, 8, 13])
def test_initial_columns(width):
    state = init_state(width)
    assert state.counts[: 2 * width - 1] == oracles.pairs_by_column(width)
    assert state.counts[2 * width - 1] == 0
    assert state.total_bits == width * width
    for c, col in enumerate(state.columns):
        for bit in col:
            r, s = state.partial_product(bit.uid)
            assert r + s == c and bit.delay == 1


def test_action_digit():
    assert action_digit(init_state(4)) == 2
    assert action_digit(init_state(8)) == 2
    assert action_digit(init_state(2)) is None
    with pytest.raises(TerminalState):
        apply_compress(init_state(2), Compressor.FA)


def test_fa_delays_from_equal_inputs():
    s = apply_compress(init_state(4), Compressor.FA)
    assert s.counts[:4] == [1, 2, 1, 5]
    assert [b.delay for b in s.columns[2]] == [4]
    assert max(b.delay for b in s.columns[3]) == 4


def test_fa_routes_slowest_bit_to_carry_in():
    # width 4: FA at column 2, FA at column 3 on three partial products,
    # leaving column 3 = {1, 4, 4}
    s = replay(4, [Compressor.FA, Compressor.FA])
    assert sorted(b.delay for b in s.columns[3]) == [1, 4, 4]
    s = apply_compress(s, Compressor.FA)
    rec = s.history[-1]
    assert rec.column == 3
    # addends {1, 4}, carry-in 4: max(1+3, 4+3, 4+2) = 7
    assert [b.delay for b in s.columns[3] if b.uid == rec.sum_uid] == [7]


def test_ha_delay():
    s = apply_compress(init_state(4), Compressor.HA)
    assert s.ha_counts[2] == 1
    assert [b.delay for b in s.columns[2] if b.uid == s.history[-1].sum_uid] == [2]
    assert action_digit(s) == 3
    # column 3 holds {1, 1, 1, 1, 2}; two HAs bring it to {2, 2, 2}
    s = replay(4, [Compressor.HA, Compressor.HA, Compressor.HA])
    assert sorted(b.delay for b in s.columns[3]) == [2, 2, 2]


def _crafted(*delays):
    col = tuple(Bit(d, k) for k, d in enumerate(delays))
    return CompressorState(width=2, columns=(col, (), (), ()), ha_counts=(0,) * 4, next_uid=len(delays))


def test_hand_traced_delays():
    assert apply_compress(_crafted(1, 1, 1), Compressor.FA).columns[0][-1].delay == 4
    out = apply_compress(_crafted(3, 1, 1), Compressor.FA)
    assert out.history[0].inputs[2] == 0  # the delay-3 bit is the carry-in
    assert out.columns[0][-1].delay == 5 and out.columns[1][0].delay == 5
    out = apply_compress(_crafted(5, 2, 1), Compressor.HA)
    assert out.columns[0][-1].delay == 3 and out.columns[1][0].delay == 3


def test_features_initial():
    f = features(init_state(4))
    d = delay_ceiling(4)
    np.testing.assert_allclose(f, [2 / 6, 1 / d, 0, 1, 1, 1 / d, 1 / d, 1 / d])


def test_features_after_steps():
    d = delay_ceiling(4)
    f = features(apply_compress(init_state(4), Compressor.FA))
    assert f[2] == 0 and f[1] == pytest.approx(4 / d)
    # one HA at column 3 while it still holds more than two bits
    s = replay(4, [Compressor.FA, Compressor.HA])
    assert action_digit(s) == 3
    assert features(s)[2] == pytest.approx(1 / 4)
    with pytest.raises(TerminalState):
        features(init_state(2))


def test_finalize_width2():
    ops = finalize_operands(init_state(2))
    assert ops.x_bits[0] is not None and ops.x_bits[1] is not None and ops.x_bits[2] is not None
    assert ops.y_bits[0] is None and ops.y_bits[1] is not None and ops.y_bits[2] is None
    with pytest.raises(NotTerminal):
        finalize_operands(init_state(4))


def test_serialization_round_trip():
    s = replay(4, [Compressor.FA, Compressor.HA, Compressor.FA])
    text = serialize_actions(s)
    assert text == "compressor v1 width=4 actions=FHF"
    assert deserialize_actions(text).columns == s.columns
    with pytest.raises(ParseError):
        deserialize_actions("compressor v1 width=4 actions=FXF")
    with pytest.raises(ParseError):
        deserialize_actions("compressor v1 width=2 actions=F")


def _episode(width, choices):
    state = init_state(width)
    k = 0
    while not state.is_terminal():
        state = apply_compress(state, Compressor.HA if choices[k % len(choices)] else Compressor.FA)
        k += 1
    return state


def _check_episode(state):
    n = state.width
    n_fa, n_ha = state.adder_counts()
    assert state.total_bits == n * n - n_fa
    assert state.is_terminal()
    assert all(h <= 2 for h in state.counts)
    # every adder output is later than each of its inputs
    arrival = {u: 1 for u in range(n * n)}
    for rec in state.history:
        ins = [arrival[u] for u in rec.inputs]
        if rec.kind is Compressor.FA:
            out = max(ins[0] + 3, ins[1] + 3, ins[2] + 2)
        else:
            out = max(ins) + 1
        assert out > max(ins)
        arrival[rec.sum_uid] = arrival[rec.carry_uid] = out
    for col in state.columns:
        for b in col:
            assert b.delay == arrival[b.uid]
    # no bit is consumed twice and every live bit is unconsumed
    consumed = [u for rec in state.history for u in rec.inputs]
    assert len(consumed) == len(set(consumed))
    live = {b.uid for col in state.columns for b in col}
    assert not live & set(consumed)
    assert len(live) + len(consumed) == n * n + 2 * len(state.history)


@settings(max_examples=80, deadline=None)
@given(width=st.integers(2, 10), choices=st.lists(st.booleans(), min_size=1, max_size=40))
def test_episode_invariants(width, choices):
    _check_episode(_episode(width, choices))


def test_all_fa_bit_count():
    state = _episode(8, [False])
    assert state.adder_counts()[1] == 0
    assert state.total_bits == 64 - len(state.actions)
    ops = finalize_operands(state)
    assert sum(u is not None for u in ops.x_bits + ops.y_bits) + len(state.overflow_bits) == state.total_bits

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from arithtree.exceptions import IllegalAction, IllegalTree, LevelTooSmall, ParseError, UnsupportedWidth, WidthMismatch
from arithtree.prefix_tree import (
    ActionKind,
    Mode,
    PrefixTree,
    TreeAction,
    apply_action,
    deletable_cells,
    deserialize,
    generate_seed,
    legal_actions,
    legalize,
    metrics,
    serialize,
    theory_size_bound,
)


def delete(i, j):
    return TreeAction(ActionKind.DELETE, i, j)


def add(i, j):
    return TreeAction(ActionKind.ADD, i, j)


@pytest.mark.parametrize(
    "family,width,level,size",
    [
        ("sklansky", 64, 6, 192),
        ("sklansky", 128, 7, 448),
        ("sklansky", 8, 3, 12),
        ("ripple", 8, 7, 7),
        ("kogge-stone", 8, 3, 17),
        ("brent-kung", 8, 4, 11),
    ],
)
def test_seed_metrics(family, width, level, size):
    tree = generate_seed(family, width)
    assert tree.is_legal()
    m = metrics(tree)
    assert (m.level, m.size) == (level, size)
    assert oracles.level_and_size(set(tree.cells)) == (level, size)


@pytest.mark.parametrize("width", [2, 4, 16, 32])
def test_sklansky_closed_form(width):
    assert metrics(generate_seed("sklansky", width)).size == width // 2 * int(np.log2(width))


def test_non_power_of_two_rejected():
    with pytest.raises(UnsupportedWidth):
        generate_seed("sklansky", 12)
    assert metrics(generate_seed("ripple", 12)).size == 11


def test_legalize_is_identity_on_legal_trees():
    for family in ("sklansky", "kogge-stone", "brent-kung", "ripple"):
        tree = generate_seed(family, 16)
        assert legalize(tree) == tree


def test_legalize_after_removing_cell():
    cells = set(generate_seed("sklansky", 4).cells) - {(3, 4)}
    fixed = legalize(PrefixTree.from_cells(4, cells))
    assert {c for c in fixed.cells if c[0] < c[1]} == {(1, 2), (1, 3), (1, 4)}
    assert (metrics(fixed).level, metrics(fixed).size) == (3, 3)


def test_legalize_restores_row_one():
    fixed = legalize(PrefixTree.from_cells(4, []))
    assert {c for c in fixed.cells if c[0] < c[1]} == {(1, 2), (1, 3), (1, 4)}


def test_metrics_rejects_illegal_tree():
    with pytest.raises(IllegalTree):
        metrics(PrefixTree.from_cells(4, [(1, 2)]))


def test_delete_only_actions():
    assert legal_actions(generate_seed("sklansky", 4), Mode.DELETE_ONLY) == [delete(3, 4)]
    assert legal_actions(generate_seed("ripple", 8), Mode.DELETE_ONLY) == []


def test_full_actions_on_ripple():
    acts = legal_actions(generate_seed("ripple", 4), "full")
    assert acts == [add(2, 3), add(2, 4), add(3, 4)]


def test_delete_shrinks_sklansky4():
    out = apply_action(generate_seed("sklansky", 4), delete(3, 4))
    assert metrics(out).size == 3


def test_add_pulls_in_parents():
    out = apply_action(generate_seed("ripple", 4), add(2, 4))
    assert out.is_legal()
    assert (2, 4) in out
    up, low = out.parents(2, 4)
    assert up in out and low in out
    assert out.cells == frozenset(oracles.legalize(set(generate_seed("ripple", 4).cells) | {(2, 4)}, 4))


def test_illegal_actions():
    sk = generate_seed("sklansky", 8)
    with pytest.raises(IllegalAction):
        apply_action(sk, add(1, 8))  # present
    with pytest.raises(IllegalAction):
        apply_action(sk, delete(1, 8))  # row one
    with pytest.raises(IllegalAction):
        apply_action(sk, delete(2, 3))  # absent
    with pytest.raises(IllegalAction):
        apply_action(sk, add(3, 3))


def test_delete_rejects_lower_parents():
    sk = generate_seed("sklansky", 8)
    allowed = set(deletable_cells(sk))
    for i, j in sk.cells:
        if 1 < i < j and (i, j) not in allowed:
            with pytest.raises(IllegalAction):
                apply_action(sk, delete(i, j))


@pytest.mark.parametrize(
    "width,level,bound", [(64, 6, 120), (64, 7, 119), (64, 8, 118), (64, 9, 117), (64, 10, 116), (128, 10, 244)]
)
def test_theory_size_bound(width, level, bound):
    assert theory_size_bound(width, level) == bound


def test_theory_bound_level_floor():
    with pytest.raises(LevelTooSmall):
        theory_size_bound(64, 5)


@pytest.mark.parametrize("width", [4, 5, 6])
def test_theory_bound_is_a_lower_bound(width):
    for cells in oracles.enumerate_designs(width):
        level, size = oracles.level_and_size(set(cells))
        assert size >= theory_size_bound(width, level)


def test_serialize_round_trip():
    tree = generate_seed("sklansky", 8)
    text = serialize(tree)
    assert text.startswith("prefixtree v1 width=8\n")
    assert deserialize(text) == tree
    assert deserialize(" ".join(text.split())) == tree


def test_deserialize_errors():
    with pytest.raises(ParseError):
        deserialize("prefix tree v1 width=8\n00\n")
    with pytest.raises(WidthMismatch):
        deserialize(serialize(generate_seed("sklansky", 8)), 16)
    with pytest.raises(WidthMismatch):
        deserialize("prefixtree v1 width=4\nfff\n")
    with pytest.raises(ParseError):
        deserialize("prefixtree v1 width=4\nzz\n")


def _random_walk(width, seed, steps):
    rng = np.random.default_rng(seed)
    tree = generate_seed("sklansky" if width & (width - 1) == 0 else "ripple", width)
    for _ in range(steps):
        acts = legal_actions(tree)
        tree = apply_action(tree, acts[rng.integers(len(acts))])
    return tree


@settings(max_examples=60, deadline=None)
@given(width=st.sampled_from([4, 6, 8, 12, 16]), seed=st.integers(0, 2**32 - 1), steps=st.integers(0, 15))
def test_random_walk_invariants(width, seed, steps):
    tree = _random_walk(width, seed, steps)
    cells = set(tree.cells)
    assert oracles.is_legal(cells, width)
    level, size = oracles.level_and_size(cells)
    assert (metrics(tree).level, metrics(tree).size) == (level, size)
    assert size + level >= 2 * width - 2
    assert deserialize(serialize(tree)) == tree


@settings(max_examples=60, deadline=None)
@given(width=st.integers(2, 12), data=st.data())
def test_legalize_matches_oracle(width, data):
    free = [(i, j) for j in range(2, width + 1) for i in range(2, j)]
    chosen = data.draw(st.sets(st.sampled_from(free))) if free else set()
    tree = legalize(PrefixTree.from_cells(width, chosen))
    assert tree.cells == frozenset(oracles.legalize(chosen, width))
    assert tree.is_legal()
    assert legalize(tree) == tree


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_deletable_cells_keep_legality(seed):
    tree = _random_walk(8, seed, 6)
    for i, j in deletable_cells(tree):
        out = apply_action(tree, delete(i, j))
        assert oracles.is_legal(set(out.cells), 8)
        assert (i, j) not in out


@pytest.mark.parametrize("width", [4, 5, 6])
def test_is_legal_matches_enumeration(width):
    rng = np.random.default_rng(width)
    free = [(i, j) for j in range(2, width + 1) for i in range(2, j)]
    base = [(1, j) for j in range(2, width + 1)]
    for _ in range(200):
        pick = [c for c in free if rng.random() < 0.5]
        tree = PrefixTree.from_cells(width, base + pick)
        assert tree.is_legal() == oracles.is_legal(set(tree.cells), width)

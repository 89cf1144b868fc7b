import json
import sys

import numpy as np
import pytest

import oracles
from arithtree.compressor_tree import Compressor, apply_compress, init_state, replay
from arithtree.cost_eval import (
    CacheStore,
    EvalResult,
    Source,
    cached,
    design_key,
    distance_to_front,
    external_eval,
    pareto_front,
    proxy_eval_adder,
    proxy_eval_multiplier,
    select_top_fraction,
    theoretical_eval,
    two_level_retrieval,
)
from arithtree.exceptions import CommandFailed, ConflictingValue, EvaluatorTimeout, NotTerminal, ParseError, WidthMismatch
from arithtree.prefix_tree import generate_seed, serialize

PY = sys.executable


def test_proxy_adder():
    # 2N + 3*size + N = 128 + 576 + 64
    assert proxy_eval_adder(generate_seed("sklansky", 64)) == EvalResult(14, 768)
    assert proxy_eval_adder(generate_seed("ripple", 8)) == EvalResult(16, 45)
    assert theoretical_eval(generate_seed("sklansky", 64)) == EvalResult(6, 192)


def test_proxy_multiplier():
    ripple4 = generate_seed("ripple", 4)
    base = proxy_eval_multiplier(init_state(2), ripple4)
    assert base.delay == 1 + proxy_eval_adder(ripple4).delay
    assert base.area == 4 + proxy_eval_adder(ripple4).area

    sk8 = generate_seed("sklansky", 8)
    adder_area = proxy_eval_adder(sk8).area
    for first in (Compressor.FA, Compressor.HA):
        state = apply_compress(init_state(4), first)
        while not state.is_terminal():
            state = apply_compress(state, Compressor.FA)
        n_fa, n_ha = state.adder_counts()
        assert proxy_eval_multiplier(state, sk8).area == 5 * n_fa + 2 * n_ha + 16 + adder_area
    # an HA inserted before the last action raises area by two gates
    fa_run = replay(4, [Compressor.FA] * 3)
    with_ha = apply_compress(fa_run, Compressor.HA)
    without = fa_run
    while not with_ha.is_terminal():
        with_ha = apply_compress(with_ha, Compressor.FA)
    while not without.is_terminal():
        without = apply_compress(without, Compressor.FA)
    if with_ha.adder_counts()[0] == without.adder_counts()[0]:
        assert proxy_eval_multiplier(with_ha, sk8).area - proxy_eval_multiplier(without, sk8).area == 2


def test_proxy_multiplier_errors():
    with pytest.raises(WidthMismatch):
        proxy_eval_multiplier(init_state(2), generate_seed("ripple", 8))
    with pytest.raises(NotTerminal):
        proxy_eval_multiplier(init_state(4), generate_seed("sklansky", 8))


def test_eval_result_validation():
    with pytest.raises(ValueError):
        EvalResult(float("nan"), 1)
    with pytest.raises(ValueError):
        EvalResult(1, -1)


def test_external_eval(tmp_path):
    design = tmp_path / "d.v"
    design.write_text("module top; endmodule\n")
    ok = f"{PY} -c \"print('delay=1.5 area=300')\" {{design}}"
    assert external_eval(design, ok) == EvalResult(1.5, 300, Source.EXTERNAL)
    with pytest.raises(CommandFailed):
        external_eval(design, f"{PY} -c \"raise SystemExit(3)\" {{design}}")
    with pytest.raises(ParseError):
        external_eval(design, f"{PY} -c \"print('timing met')\" {{design}}")
    with pytest.raises(EvaluatorTimeout):
        external_eval(design, f"{PY} -c \"import time; time.sleep(5)\" {{design}}", timeout=0.5)
    with pytest.raises(ValueError):
        external_eval(design, "echo no-placeholder")


def test_external_eval_receives_path(tmp_path):
    design = tmp_path / "with space.v"
    design.write_text("x")
    script = "import sys, os; print('delay=%d area=1' % os.path.getsize(sys.argv[1]))"
    assert external_eval(design, f"{PY} -c \"{script}\" {{design}}").delay == 1


def test_pareto_small_cases():
    assert sorted(pareto_front([(1, 3), (2, 2), (3, 1)])) == [0, 1, 2]
    assert list(pareto_front([(1, 1), (2, 2)])) == [0]
    assert sorted(pareto_front([(1, 1), (1, 1), (2, 0.5)])) == [0, 1, 2]


def test_pareto_matches_brute_force():
    rng = np.random.default_rng(5)
    for trial in range(100):
        n = int(rng.integers(1, 80))
        pts = rng.integers(0, 12, size=(n, 2)) if trial % 2 else rng.random((n, 2))
        assert set(pareto_front(pts).tolist()) == oracles.brute_pareto(pts.tolist())


def test_distances_match_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(30):
        pts = rng.random((40, 2))
        np.testing.assert_allclose(distance_to_front(pts), oracles.brute_distances(pts.tolist()), atol=1e-12)


def test_top_fraction():
    rng = np.random.default_rng(8)
    pts = rng.random((50, 2))
    assert sorted(select_top_fraction(pts, 1.0).tolist()) == list(range(50))
    assert select_top_fraction(pts, 0.1).tolist() == oracles.brute_top_fraction(pts.tolist(), 0.1)
    front = set(pareto_front(pts).tolist())
    assert front <= set(select_top_fraction(pts, len(front) / 50).tolist())
    with pytest.raises(ValueError):
        select_top_fraction(pts, 0.0)


def test_cache_basics(tmp_path):
    cache = CacheStore()
    assert cache.get("k") is None and cache.misses == 1
    cache.put("k", EvalResult(1, 2))
    assert cache.get("k") == EvalResult(1, 2) and cache.hits == 1
    cache.put("k", EvalResult(1, 2))
    with pytest.raises(ConflictingValue):
        cache.put("k", EvalResult(1.5, 2))


def test_cached_wrapper_and_journal(tmp_path):
    calls = []

    def ev(tree):
        calls.append(tree)
        return proxy_eval_adder(tree)

    journal = tmp_path / "cache.jsonl"
    cache = CacheStore(journal)
    fn = cached(ev, cache, serialize)
    tree = generate_seed("sklansky", 16)
    first = fn(tree)
    second = fn(generate_seed("sklansky", 16))
    assert len(calls) == 1 and first == second
    assert second.source is Source.CACHE
    rebuilt = CacheStore.from_journal(journal)
    assert rebuilt.items() == cache.items()
    fn2 = cached(ev, CacheStore(journal), serialize)
    fn2(tree)
    assert len(calls) == 1
    rec = json.loads(journal.read_text().splitlines()[0])
    assert rec["key"] == design_key(serialize(tree))


def test_design_key_is_stable():
    assert design_key("abc") == design_key("abc") != design_key("abd")
    assert len(design_key("abc")) == 16


def test_two_level_retrieval_counts():
    full_calls = []
    cands = [(float(k), float(10 - k)) for k in range(10)]
    fast = lambda c: EvalResult(c[0], c[1])  # noqa: E731

    def full(c):
        full_calls.append(c)
        return EvalResult(c[0], c[1], Source.EXTERNAL)

    recs = two_level_retrieval(cands, fast, full, 0.1)
    assert len(full_calls) == 1
    stage1 = {r.index: r.result for r in recs if r.stage == 1}
    for r in recs:
        if r.stage == 2:
            assert r.result == stage1[r.index]


def test_two_level_retrieval_deterministic_and_errors():
    rng = np.random.default_rng(0)
    cands = [tuple(p) for p in rng.random((50, 2)) * 100]

    def fast(c):
        if c is cands[3]:
            raise RuntimeError("tool crashed")
        return EvalResult(c[1], c[0])

    a = two_level_retrieval(cands, fast, fast, 0.2)
    b = two_level_retrieval(cands, fast, fast, 0.2, jobs=3)
    assert [(r.index, r.stage) for r in a] == [(r.index, r.stage) for r in b]
    assert sum(r.stage == 2 for r in a) == 10
    assert a[3].result is None and "tool crashed" in a[3].error

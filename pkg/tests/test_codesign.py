import json

import pytest

from arithtree.codesign import (
    CodesignConfig,
    MultiplierDesign,
    baseline_wallace,
    initial_adder,
    phase_seed,
    run_codesign,
    verify_design,
)
from arithtree.cost_eval import proxy_eval_multiplier
from arithtree.exceptions import ParseError, WidthMismatch
from arithtree.ppo_agent import PPOConfig, train
from arithtree.prefix_tree import generate_seed, metrics


def small(**kw):
    base = dict(width=4, rounds=2, compressor_steps=200, prefix_steps=30, rng_seed=5)
    base.update(kw)
    return CodesignConfig(**base)


def test_phase_seeds_are_distinct_and_stable():
    a = phase_seed(0, 1, 0).integers(1 << 30, size=4)
    assert list(a) == list(phase_seed(0, 1, 0).integers(1 << 30, size=4))
    assert list(a) != list(phase_seed(0, 1, 1).integers(1 << 30, size=4))


def test_initial_adder():
    assert initial_adder(8) == generate_seed("sklansky", 16)
    assert initial_adder(3) == generate_seed("ripple", 6)


def test_ppo_only_equivalence():
    cfg = CodesignConfig(width=4, rounds=1, compressor_steps=300, prefix_steps=0, rng_seed=2)
    design = run_codesign(cfg)
    tree = generate_seed("sklansky", 8)
    ref = train(
        4, 300, PPOConfig(alpha=cfg.alpha), lambda s: proxy_eval_multiplier(s, tree), phase_seed(2, 0, 0)
    )
    assert design.actions == ref.best_actions
    assert design.tree == tree
    assert design.eval == ref.best_eval


def test_step_accounting():
    log = []
    design = run_codesign(small(), log=log.append)
    assert sum(rec["steps"] for rec in log) == small().total_steps == 460
    assert design.provenance["steps"] == 460
    assert [rec["phase"] for rec in log] == ["compressor", "prefix"] * 2


def test_never_worse_than_ppo_only():
    cfg = small()
    ppo_only = run_codesign(small(rounds=1, prefix_steps=0))
    design = run_codesign(cfg)
    assert design.score(cfg.alpha) >= ppo_only.score(cfg.alpha)
    assert verify_design(design.state, design.tree).passed


def test_incumbent_score_is_monotone():
    log = []
    run_codesign(small(rounds=3), log=log.append)
    scores = [rec["incumbent_score"] for rec in log]
    assert scores == sorted(scores)


def test_zero_compressor_steps_falls_back_to_full_adders():
    design = run_codesign(small(compressor_steps=0, prefix_steps=0, rounds=1))
    assert all(a == 0 for a in design.actions)
    assert design.state.is_terminal()


def test_reruns_are_identical():
    assert run_codesign(small()).to_json() == run_codesign(small()).to_json()


def test_bundle_round_trip(tmp_path):
    design = run_codesign(small(rounds=1))
    path = tmp_path / "mult.json"
    design.save(path)
    back = MultiplierDesign.load(path)
    assert back.actions == design.actions and back.tree == design.tree and back.eval == design.eval
    data = json.loads(path.read_text())
    assert data["format"] == "arithtree-multiplier" and data["provenance"]["config"]["width"] == 4
    with pytest.raises(ParseError):
        MultiplierDesign.from_dict({"format": "something-else"})
    data["prefixtree"] = data["prefixtree"].replace("width=8", "width=16")
    with pytest.raises(WidthMismatch):
        MultiplierDesign.from_dict(data)


def test_wallace_baselines():
    w2 = baseline_wallace(2)
    assert w2.actions == ()
    w4 = baseline_wallace(4)
    assert w4.state.is_terminal() and max(w4.state.counts) <= 2
    w8 = baseline_wallace(8)
    assert verify_design(w8.state, w8.tree).passed
    assert metrics(w8.tree).size == 32


def test_config_validation():
    with pytest.raises(ValueError):
        CodesignConfig(width=1)
    with pytest.raises(ValueError):
        CodesignConfig(rounds=0)
    with pytest.raises(ValueError):
        CodesignConfig(evaluator="synopsys")

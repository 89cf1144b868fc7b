"""Alternating optimization of a multiplier's compressor tree and final adder.

Each round trains the PPO compressor agent against the current final adder,
then runs practical-mode MCTS on the 2N-bit prefix tree against the best
compressor found so far.  A candidate replaces the incumbent only if it
scores strictly better and passes functional verification.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._validation import check_positive_int, check_width
from .adder_search import SearchConfig, SearchMode, run_search
from .compressor_tree import (
    Compressor,
    CompressorState,
    action_digit,
    apply_compress,
    deserialize_actions,
    init_state,
    replay,
    serialize_actions,
)
from .cost_eval import EvalResult, proxy_eval_multiplier
from .exceptions import ArithTreeError, ParseError
from .hdl_netlist import Exhaustive, Random, VerifyReport, verify
from .ppo_agent import PPOConfig, train
from .prefix_tree import PrefixTree, deserialize, generate_seed, serialize

logger = logging.getLogger(__name__)

__all__ = [
    "CodesignConfig",
    "MultiplierDesign",
    "RoundFailed",
    "run_codesign",
    "baseline_wallace",
    "phase_seed",
    "initial_adder",
    "verify_design",
]

BUNDLE_FORMAT = "arithtree-multiplier"
BUNDLE_VERSION = 1
EXHAUSTIVE_MAX_WIDTH = 8
RANDOM_VECTORS = 10_000


class RoundFailed(ArithTreeError, RuntimeError):
    """A sub-module failed inside a co-design round."""


@dataclass
class CodesignConfig:
    width: int = 8
    rounds: int = 3
    compressor_steps: int = 900
    prefix_steps: int = 100
    alpha: float = 0.01
    evaluator: str = "proxy"
    rng_seed: int = 0
    ppo: PPOConfig | None = None
    search_c: float | None = None
    search_beta: float = 0.01

    def __post_init__(self):
        check_width(self.width)
        check_positive_int(self.rounds, "rounds")
        check_positive_int(self.compressor_steps, "compressor_steps", allow_zero=True)
        check_positive_int(self.prefix_steps, "prefix_steps", allow_zero=True)
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.evaluator != "proxy":
            raise ValueError(f"unknown evaluator {self.evaluator!r}; only 'proxy' is built in")

    @property
    def total_steps(self) -> int:
        return self.rounds * (self.compressor_steps + self.prefix_steps)

    def to_dict(self) -> dict:
        ppo = self.ppo or PPOConfig(alpha=self.alpha)
        return {
            "width": self.width,
            "rounds": self.rounds,
            "compressor_steps": self.compressor_steps,
            "prefix_steps": self.prefix_steps,
            "alpha": self.alpha,
            "evaluator": self.evaluator,
            "rng_seed": self.rng_seed,
            "ppo": {k: getattr(ppo, k) for k in ppo.__dataclass_fields__},
            "search_c": self.search_c,
            "search_beta": self.search_beta,
        }


@dataclass
class MultiplierDesign:
    width: int
    actions: tuple[Compressor, ...]
    tree: PrefixTree
    eval: EvalResult
    provenance: dict = field(default_factory=dict)

    @property
    def state(self) -> CompressorState:
        return replay(self.width, self.actions)

    def score(self, alpha: float) -> float:
        return -self.eval.delay - alpha * self.eval.area

    def to_dict(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "format_version": BUNDLE_VERSION,
            "width": self.width,
            "actions": serialize_actions(self.state),
            "prefixtree": serialize(self.tree),
            "eval": self.eval.to_dict(),
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, data: dict) -> "MultiplierDesign":
        try:
            if data.get("format") != BUNDLE_FORMAT:
                raise ParseError(f"not a multiplier bundle (format={data.get('format')!r})")
            width = int(data["width"])
            state = deserialize_actions(data["actions"])
            if state.width != width:
                raise ParseError("action sequence width disagrees with bundle width")
            tree = deserialize(data["prefixtree"], 2 * width)
            ev = EvalResult(data["eval"]["delay"], data["eval"]["area"], data["eval"].get("source", "fast-proxy"))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed multiplier bundle: {exc}") from None
        return cls(width, state.actions, tree, ev, data.get("provenance", {}))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MultiplierDesign":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: {exc}") from None
        return cls.from_dict(data)


def phase_seed(seed: int, round_index: int, phase: int) -> np.random.Generator:
    """RNG for one phase (0 = PPO, 1 = MCTS) of one round."""
    return np.random.default_rng([int(seed), int(round_index), int(phase)])


def initial_adder(width: int) -> PrefixTree:
    """Sklansky over the 2N-bit final adder (ripple when 2N is not a power of two)."""
    n = 2 * width
    return generate_seed("sklansky" if n & (n - 1) == 0 else "ripple", n)


def verify_design(state: CompressorState, tree: PrefixTree, seed: int = 0) -> VerifyReport:
    mode = Exhaustive() if state.width <= EXHAUSTIVE_MAX_WIDTH else Random(RANDOM_VECTORS, seed)
    return verify((state, tree), mode)


def _evaluate(state: CompressorState, tree: PrefixTree) -> EvalResult:
    return proxy_eval_multiplier(state, tree)


def run_codesign(config: CodesignConfig, *, log: Callable[[dict], None] | None = None) -> MultiplierDesign:
    """Alternate compressor (PPO) and prefix-tree (MCTS) optimization.

    PPO parameters persist across rounds.  ``log`` receives one record per
    phase; their ``steps`` fields sum to ``config.total_steps`` unless a
    search exhausts its space early.
    """
    width = config.width
    ppo_cfg = config.ppo or PPOConfig(alpha=config.alpha)
    emit = log or (lambda rec: None)
    tree = initial_adder(width)
    incumbent: MultiplierDesign | None = None
    params = optimizers = None
    steps_logged = 0

    def consider(state: CompressorState, cand_tree: PrefixTree, r: int, phase: str) -> bool:
        nonlocal incumbent
        ev = _evaluate(state, cand_tree)
        score = -ev.delay - config.alpha * ev.area
        if incumbent is not None and score <= incumbent.score(config.alpha):
            return False
        report = verify_design(state, cand_tree, seed=config.rng_seed)
        if not report.passed:
            logger.error("round %d %s candidate failed verification: %s", r, phase, report.counterexample)
            return False
        incumbent = MultiplierDesign(
            width,
            state.actions,
            cand_tree,
            ev,
            {"round": r, "phase": phase, "rng_seed": config.rng_seed, "verify": report.mode},
        )
        return True

    for r in range(config.rounds):
        try:
            fixed_tree = incumbent.tree if incumbent is not None else tree
            res = train(
                width,
                config.compressor_steps,
                ppo_cfg,
                lambda s, t=fixed_tree: _evaluate(s, t),
                phase_seed(config.rng_seed, r, 0),
                params=params,
                optimizers=optimizers,
            )
        except ArithTreeError as exc:
            raise RoundFailed(f"round {r} compressor phase: {exc}") from exc
        params, optimizers = res.params, res.optimizers
        accepted = res.best_state is not None and consider(res.best_state, fixed_tree, r, "compressor")
        steps_logged += res.env_steps
        emit(
            {
                "round": r,
                "phase": "compressor",
                "steps": res.env_steps,
                "episodes": len(res.episode_returns),
                "best_delay": None if res.best_eval is None else res.best_eval.delay,
                "best_area": None if res.best_eval is None else res.best_eval.area,
                "accepted": accepted,
                "incumbent_score": incumbent.score(config.alpha) if incumbent else None,
            }
        )

        if incumbent is None:
            # zero compressor steps: start from the all-FA schedule
            state = init_state(width)
            while action_digit(state) is not None:
                state = apply_compress(state, Compressor.FA)
            consider(state, fixed_tree, r, "initial")

        state = incumbent.state
        search_steps = 0
        if config.prefix_steps > 0:
            scfg = SearchConfig(
                beta=config.search_beta,
                c=config.search_c if config.search_c is not None else SearchConfig().c,
                alpha=config.alpha,
                mode=SearchMode.PRACTICAL,
                step_budget=config.prefix_steps,
                rng_seed=int(phase_seed(config.rng_seed, r, 1).integers(2**31)),
            )
            try:
                sres = run_search(incumbent.tree, scfg, lambda t, s=state: _evaluate(s, t))
            except ArithTreeError as exc:
                raise RoundFailed(f"round {r} prefix phase: {exc}") from exc
            search_steps = sres.steps_run
            accepted = consider(state, sres.best_tree, r, "prefix")
            emit(
                {
                    "round": r,
                    "phase": "prefix",
                    "steps": search_steps,
                    "best_delay": sres.best_eval.delay,
                    "best_area": sres.best_eval.area,
                    "accepted": accepted,
                    "incumbent_score": incumbent.score(config.alpha),
                }
            )
        steps_logged += search_steps

    incumbent.provenance = {
        **incumbent.provenance,
        "config": config.to_dict(),
        "steps": steps_logged,
    }
    return incumbent


def _wallace_quotas(counts: list[int]) -> tuple[list[int], list[int]]:
    fa = [h // 3 for h in counts]
    ha = [1 if h % 3 == 2 and h > 2 else 0 for h in counts]
    return fa, ha


def baseline_wallace(width: int) -> MultiplierDesign:
    """Wallace-style schedule replayed through the compressor environment.

    Each stage assigns every column ``h // 3`` full adders plus a half adder
    when ``h % 3 == 2``, from the heights at the start of the stage.  The
    environment acts at the lowest crowded column; when that column's quota
    is spent a new stage begins.
    """
    width = check_width(width)
    state = init_state(width)
    fa, ha = _wallace_quotas(state.counts)
    while (c := action_digit(state)) is not None:
        if c >= len(fa) or (fa[c] == 0 and ha[c] == 0):
            fa, ha = _wallace_quotas(state.counts)
        if fa[c] > 0:
            fa[c] -= 1
            kind = Compressor.FA
        elif ha[c] > 0:
            ha[c] -= 1
            kind = Compressor.HA
        else:
            kind = Compressor.FA
        state = apply_compress(state, kind)
    tree = initial_adder(width)
    return MultiplierDesign(width, state.actions, tree, _evaluate(state, tree), {"baseline": "wallace"})

"""Monte-Carlo tree search over prefix-tree edits.

Each search-tree node holds one prefix tree.  Node statistics aggregate the
performance score ``R`` of every design evaluated below the node; the action
value blends the average and the best of those scores, and selection uses a
UCT-style node score built on it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from ._validation import check_positive_int, check_unit_interval, make_rng
from .cost_eval import EvalResult, pareto_front, proxy_eval_adder, theoretical_eval
from .exceptions import NoEvaluations, UnvisitedNode
from .prefix_tree import (
    Mode,
    PrefixTree,
    TreeAction,
    apply_action,
    generate_seed,
    legal_actions,
    metrics,
    serialize,
)

__all__ = [
    "SearchMode",
    "SearchConfig",
    "SearchNode",
    "SearchResult",
    "action_value",
    "node_score",
    "performance_score",
    "run_search",
    "optimize_levels",
    "audit_tree",
]


class SearchMode(str, enum.Enum):
    THEORETICAL = "theoretical"
    PRACTICAL = "practical"


@dataclass
class SearchConfig:
    beta: float = 0.01
    c: float = 10 * math.sqrt(2)
    alpha: float = 0.001
    level_bound: int | None = None
    mode: SearchMode = SearchMode.THEORETICAL
    max_sim_steps: int = 10
    step_budget: int = 1000
    rng_seed: int | None = 0

    def __post_init__(self):
        self.mode = SearchMode(self.mode)
        check_unit_interval(self.beta, "beta")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        check_positive_int(self.max_sim_steps, "max_sim_steps")
        check_positive_int(self.step_budget, "step_budget", allow_zero=True)
        if self.level_bound is not None:
            check_positive_int(self.level_bound, "level_bound")


def _pack(tree: PrefixTree) -> bytes:
    return np.packbits(tree.matrix).tobytes()


def _unpack(blob: bytes, width: int) -> PrefixTree:
    bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8), count=width * width)
    return PrefixTree._wrap(bits.astype(np.bool_).reshape(width, width))


class SearchNode:
    """Search-tree node.  The prefix tree is kept bit-packed; ``state`` unpacks it."""

    __slots__ = (
        "_packed",
        "_width",
        "parent",
        "action",
        "visit_count",
        "score_sum",
        "score_max",
        "descendant_evals",
        "untried",
        "children",
        "exhausted",
    )

    def __init__(self, state: PrefixTree, parent: "SearchNode | None" = None, action: TreeAction | None = None):
        self._packed = _pack(state)
        self._width = state.width
        self.parent = parent
        self.action = action
        self.visit_count = 0
        self.score_sum = 0.0
        self.score_max = -math.inf
        self.descendant_evals = 0
        self.untried: list[TreeAction] | None = None
        self.children: dict[TreeAction, SearchNode] = {}
        self.exhausted = False

    @property
    def state(self) -> PrefixTree:
        return _unpack(self._packed, self._width)

    def record(self, score: float) -> None:
        self.visit_count += 1
        self.score_sum += score
        self.descendant_evals += 1
        if score > self.score_max:
            self.score_max = score

    def __repr__(self) -> str:
        return f"SearchNode(action={self.action}, N={self.visit_count}, evals={self.descendant_evals})"


def action_value(node: SearchNode, beta: float) -> float:
    """Blend of the mean and the best score over the node's evaluated descendants."""
    if node.descendant_evals <= 0:
        raise NoEvaluations("node has no evaluated descendants")
    mean = node.score_sum / node.descendant_evals
    return (1.0 - beta) * mean + beta * node.score_max


def node_score(node: SearchNode, parent_visits: int, c: float, beta: float = 0.01) -> float:
    if node.visit_count < 1 or parent_visits < 1:
        raise UnvisitedNode("node score needs at least one visit of node and parent")
    return math.sqrt(math.log(parent_visits) / node.visit_count) + c * action_value(node, beta)


def performance_score(result: EvalResult, config: SearchConfig) -> float:
    """Theoretical: minus size.  Practical: minus delay minus alpha times area."""
    if config.mode is SearchMode.THEORETICAL:
        return -result.area
    return -result.delay - config.alpha * result.area


@dataclass
class SearchResult:
    best_tree: PrefixTree
    best_score: float
    best_eval: EvalResult
    pareto: list[tuple[PrefixTree, EvalResult]]
    trace: list[float]
    records: list[dict]
    root: SearchNode
    steps_run: int
    exhausted: bool
    evaluations: int = 0
    cache_hits: int = 0

    @property
    def best_metrics(self):
        return metrics(self.best_tree)


def audit_tree(root: SearchNode) -> list[str]:
    """Return a list of bookkeeping violations (empty when consistent)."""
    problems = []
    stack = [root]
    while stack:
        node = stack.pop()
        child_visits = sum(ch.visit_count for ch in node.children.values())
        if node.visit_count != 1 + child_visits:
            problems.append(f"{node}: visits {node.visit_count} != 1 + {child_visits}")
        if node.descendant_evals and node.score_max < node.score_sum / node.descendant_evals - 1e-9:
            problems.append(f"{node}: max below mean")
        if not node.state.is_legal():
            problems.append(f"{node}: illegal state")
        stack.extend(node.children.values())
    return problems


class _Search:
    def __init__(self, seed: PrefixTree, config: SearchConfig, evaluator: Callable | None, log: bool):
        self.config = config
        self.theoretical = config.mode is SearchMode.THEORETICAL
        if evaluator is None:
            evaluator = theoretical_eval if self.theoretical else proxy_eval_adder
        self.evaluator = evaluator
        self.action_mode = Mode.DELETE_ONLY if self.theoretical else Mode.FULL
        self.bound = config.level_bound if config.level_bound is not None else math.inf
        self.rng = make_rng(config.rng_seed)
        self.cache: dict[bytes, EvalResult] = {}
        self.cache_hits = 0
        self.log = log
        self.records: list[dict] = []
        self.best: tuple[float, PrefixTree, EvalResult] | None = None
        self.step = 0

        if not seed.is_legal():
            raise ValueError("seed prefix tree is not legal")
        if metrics(seed).level > self.bound:
            raise ValueError(f"seed level {metrics(seed).level} exceeds level bound {self.bound}")
        self.root = SearchNode(seed)

    def evaluate(self, tree: PrefixTree) -> float:
        key = _pack(tree)
        result = self.cache.get(key)
        if result is None:
            result = self.evaluator(tree)
            self.cache[key] = result
        else:
            self.cache_hits += 1
        score = performance_score(result, self.config)
        if self.best is None or score > self.best[0]:
            self.best = (score, tree, result)
        if self.log:
            m = metrics(tree)
            self.records.append(
                {
                    "step": self.step,
                    "design": serialize(tree),
                    "level": m.level,
                    "size": m.size,
                    "delay": result.delay,
                    "area": result.area,
                    "score": score,
                }
            )
        return score

    def within_bound(self, tree: PrefixTree) -> bool:
        return metrics(tree).level <= self.bound

    def select(self) -> SearchNode | None:
        node = self.root
        while True:
            if node.exhausted:
                return None
            if node.untried is None or node.untried:
                return node
            best = None
            best_w = -math.inf
            for action in sorted(node.children):
                child = node.children[action]
                if child.exhausted:
                    continue
                w = node_score(child, node.visit_count, self.config.c, self.config.beta)
                if w > best_w:
                    best, best_w = child, w
            node = best

    def mark_exhausted(self, node: SearchNode) -> None:
        while node is not None:
            if node.untried or node.untried is None:
                return
            if any(not ch.exhausted for ch in node.children.values()):
                return
            node.exhausted = True
            node = node.parent

    def expand(self, node: SearchNode) -> SearchNode | None:
        if node.untried is None:
            node.untried = legal_actions(node.state, self.action_mode)
        while node.untried:
            k = int(self.rng.integers(len(node.untried)))
            action = node.untried.pop(k)
            state = apply_action(node.state, action)
            if not self.within_bound(state):
                continue
            child = SearchNode(state, node, action)
            node.children[action] = child
            return child
        self.mark_exhausted(node)
        return None

    def simulate(self, tree: PrefixTree) -> PrefixTree:
        if self.theoretical:
            return self._simulate_greedy_deletes(tree)
        return self._simulate_random(tree)

    def _simulate_greedy_deletes(self, tree: PrefixTree) -> PrefixTree:
        # random size-reducing deletes that respect the level bound
        m = tree.matrix
        size = int(_kernels.cell_count(m))
        bound = self.bound if math.isfinite(self.bound) else m.shape[0]
        moved = False
        while True:
            cands = _kernels.deletable(m)
            for k in self.rng.permutation(len(cands)):
                new, level, new_size = _kernels.delete_and_measure(m, cands[k, 0], cands[k, 1])
                if level <= bound and new_size < size:
                    m, size, moved = new, new_size, True
                    break
            else:
                break
        return PrefixTree._wrap(m) if moved else tree

    def _simulate_random(self, tree: PrefixTree) -> PrefixTree:
        for _ in range(self.config.max_sim_steps):
            actions = legal_actions(tree, self.action_mode)
            if not actions:
                break
            for k in self.rng.permutation(len(actions)):
                nxt = apply_action(tree, actions[k])
                if self.within_bound(nxt):
                    tree = nxt
                    break
            else:
                break
        return tree

    def backpropagate(self, node: SearchNode, score: float) -> None:
        while node is not None:
            node.record(score)
            node = node.parent

    def run(self) -> SearchResult:
        trace: list[float] = []
        self.backpropagate(self.root, self.evaluate(self.root.state))
        steps = 0
        for step in range(1, self.config.step_budget + 1):
            self.step = step
            child = None
            while child is None:
                node = self.select()
                if node is None:
                    break
                child = self.expand(node)
            if child is None:
                break
            leaf = self.simulate(child.state)
            self.backpropagate(child, self.evaluate(leaf))
            trace.append(self.best[0])
            steps = step
        score, tree, result = self.best
        keys = list(self.cache)
        pts = [(self.cache[k].area, self.cache[k].delay) for k in keys]
        width = self.root.state.width
        front = [(_unpack(keys[k], width), self.cache[keys[k]]) for k in pareto_front(pts)]
        return SearchResult(
            best_tree=tree,
            best_score=score,
            best_eval=result,
            pareto=front,
            trace=trace,
            records=self.records,
            root=self.root,
            steps_run=steps,
            exhausted=self.root.exhausted,
            evaluations=len(self.cache),
            cache_hits=self.cache_hits,
        )


def run_search(
    seed: PrefixTree,
    config: SearchConfig | None = None,
    evaluator: Callable[[PrefixTree], EvalResult] | None = None,
    *,
    log: bool = False,
) -> SearchResult:
    """Run MCTS from ``seed`` for ``config.step_budget`` iterations.

    In theoretical mode only delete actions are expanded and states above the
    level bound are never created; simulation applies random size-reducing
    deletes until none remain.  In practical mode simulation applies up to
    ``max_sim_steps`` random edits.  The search stops early when every
    reachable state has been expanded.
    """
    config = config or SearchConfig()
    return _Search(seed, config, evaluator, log).run()


@dataclass
class LevelStage:
    level: int
    size: int
    tree: PrefixTree
    steps_run: int
    result: SearchResult = field(repr=False)


def optimize_levels(
    width: int,
    per_level_budget: int,
    max_extra_levels: int,
    *,
    config: SearchConfig | None = None,
    log: bool = False,
) -> list[LevelStage]:
    """Minimum-size search under a level bound that is relaxed one at a time.

    Starts from Sklansky at ``log2(width)``; each stage seeds from the
    previous stage's smallest tree.
    """
    base = config or SearchConfig()
    tree = generate_seed("sklansky", width)
    start = int(math.log2(width))
    stages = []
    for extra in range(max_extra_levels + 1):
        level = start + extra
        stage_seed = None if base.rng_seed is None else int(base.rng_seed) * 1009 + level
        cfg = SearchConfig(
            beta=base.beta,
            c=base.c,
            alpha=base.alpha,
            level_bound=level,
            mode=SearchMode.THEORETICAL,
            max_sim_steps=base.max_sim_steps,
            step_budget=per_level_budget,
            rng_seed=stage_seed,
        )
        result = run_search(tree, cfg, log=log)
        tree = result.best_tree
        stages.append(LevelStage(level, metrics(tree).size, tree, result.steps_run, result))
    return stages

"""Estimator-style wrappers (``fit`` / ``predict`` / ``get_params``).

These adapt the functional API to the scikit-learn conventions so searches
can be configured with ``set_params`` and cloned.  Fitted state lives in
attributes with a trailing underscore.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_width
from .adder_search import SearchConfig, SearchMode, run_search
from .codesign import CodesignConfig, run_codesign
from .cost_eval import proxy_eval_adder, theoretical_eval
from .ppo_agent import PPOConfig, policy_forward, train
from .prefix_tree import PrefixTree, generate_seed

__all__ = ["PrefixAdderSearch", "CompressorTreePPO", "MultiplierCodesign"]


class PrefixAdderSearch(BaseEstimator):
    """MCTS over prefix trees.

    ``fit(X)`` accepts an optional seed :class:`PrefixTree`; without one the
    ``seed_family`` tree of ``width`` bits is used.  ``predict`` scores trees
    with the estimator's evaluator and returns ``(delay, area)`` rows.
    """

    def __init__(
        self,
        width=64,
        seed_family="sklansky",
        mode="theoretical",
        level_bound=None,
        step_budget=1000,
        beta=0.01,
        c=10 * math.sqrt(2),
        alpha=0.001,
        max_sim_steps=10,
        random_state=0,
    ):
        self.width = width
        self.seed_family = seed_family
        self.mode = mode
        self.level_bound = level_bound
        self.step_budget = step_budget
        self.beta = beta
        self.c = c
        self.alpha = alpha
        self.max_sim_steps = max_sim_steps
        self.random_state = random_state

    def _config(self) -> SearchConfig:
        return SearchConfig(
            beta=self.beta,
            c=self.c,
            alpha=self.alpha,
            level_bound=self.level_bound,
            mode=self.mode,
            max_sim_steps=self.max_sim_steps,
            step_budget=self.step_budget,
            rng_seed=self.random_state,
        )

    def fit(self, X=None, y=None):
        cfg = self._config()
        if X is None:
            seed = generate_seed(self.seed_family, check_width(self.width))
        elif isinstance(X, PrefixTree):
            seed = X
        else:
            raise TypeError("X must be a PrefixTree seed or None")
        result = run_search(seed, cfg)
        self.result_ = result
        self.best_tree_ = result.best_tree
        self.best_eval_ = result.best_eval
        self.best_score_ = result.best_score
        self.pareto_ = result.pareto
        self.trace_ = np.asarray(result.trace)
        self.n_steps_ = result.steps_run
        return self

    def predict(self, X):
        trees = [X] if isinstance(X, PrefixTree) else list(X)
        evaluator = theoretical_eval if SearchMode(self.mode) is SearchMode.THEORETICAL else proxy_eval_adder
        return np.array([[r.delay, r.area] for r in map(evaluator, trees)], dtype=np.float64).reshape(-1, 2)

    def score(self, X=None, y=None):
        check_is_fitted(self, "best_score_")
        return self.best_score_


class CompressorTreePPO(BaseEstimator):
    """PPO compressor agent.  ``predict_proba`` maps feature rows to (P[FA], P[HA])."""

    def __init__(
        self,
        width=8,
        steps=900,
        gamma=0.8,
        clip_eps=0.2,
        ha_penalty=0.1,
        batch_size=64,
        learning_rate=1e-3,
        epochs=4,
        alpha=0.0,
        random_state=0,
    ):
        self.width = width
        self.steps = steps
        self.gamma = gamma
        self.clip_eps = clip_eps
        self.ha_penalty = ha_penalty
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.alpha = alpha
        self.random_state = random_state

    def fit(self, X=None, y=None):
        cfg = PPOConfig(
            gamma=self.gamma,
            clip_eps=self.clip_eps,
            ha_penalty=self.ha_penalty,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            alpha=self.alpha,
        )
        result = train(check_width(self.width), self.steps, cfg, rng=self.random_state)
        self.result_ = result
        self.params_ = result.params
        self.best_actions_ = result.best_actions
        self.best_eval_ = result.best_eval
        self.episode_returns_ = np.asarray(result.episode_returns)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return policy_forward(self.params_, check_features(X))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)


class MultiplierCodesign(BaseEstimator):
    """Compressor/prefix co-design; the fitted design is ``design_``."""

    def __init__(self, width=8, rounds=3, compressor_steps=900, prefix_steps=100, alpha=0.01, random_state=0):
        self.width = width
        self.rounds = rounds
        self.compressor_steps = compressor_steps
        self.prefix_steps = prefix_steps
        self.alpha = alpha
        self.random_state = random_state

    def fit(self, X=None, y=None):
        cfg = CodesignConfig(
            width=self.width,
            rounds=self.rounds,
            compressor_steps=self.compressor_steps,
            prefix_steps=self.prefix_steps,
            alpha=self.alpha,
            rng_seed=self.random_state,
        )
        log: list[dict] = []
        self.design_ = run_codesign(cfg, log=log.append)
        self.log_ = log
        return self

    def score(self, X=None, y=None):
        check_is_fitted(self, "design_")
        return self.design_.score(self.alpha)

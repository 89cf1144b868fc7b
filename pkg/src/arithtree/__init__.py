"""Prefix-tree adders and compressor-tree multipliers: search, learning,
cost models and gate-level verification."""

__version__ = "0.1.0"

from .exceptions import *  # noqa: E402,F401,F403
from .prefix_tree import (  # noqa: E402
    ActionKind,
    Family,
    Mode,
    PrefixTree,
    TreeAction,
    apply_action,
    deserialize,
    generate_seed,
    legal_actions,
    legalize,
    metrics,
    serialize,
    theory_size_bound,
)
from .compressor_tree import Compressor, CompressorState, apply_compress, features, init_state, replay  # noqa: E402
from .cost_eval import EvalResult, CacheStore, pareto_front, proxy_eval_adder, proxy_eval_multiplier  # noqa: E402
from .adder_search import SearchConfig, SearchMode, optimize_levels, run_search  # noqa: E402
from .ppo_agent import PPOConfig, train  # noqa: E402
from .hdl_netlist import build_adder_netlist, build_multiplier_netlist, emit_verilog, simulate, verify  # noqa: E402
from .codesign import CodesignConfig, MultiplierDesign, baseline_wallace, run_codesign  # noqa: E402

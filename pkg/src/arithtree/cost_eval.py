"""Design scoring: theoretical metrics, unit-gate proxies, external tools,
Pareto utilities and a persistent evaluation cache."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import os
import re
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._validation import check_fraction, check_points
from .exceptions import (
    CommandFailed,
    ConflictingValue,
    EvaluatorTimeout,
    ParseError,
    WidthMismatch,
)
from .prefix_tree import PrefixTree, metrics

logger = logging.getLogger(__name__)

# unit-gate constants of the proxy model
PREFIX_CELL_GATES = 3
PREFIX_CELL_DEPTH = 2
FA_GATES = 5
HA_GATES = 2


class Source(str, enum.Enum):
    THEORETICAL = "theoretical"
    FAST_PROXY = "fast-proxy"
    EXTERNAL = "external"
    CACHE = "cache"


@dataclass(frozen=True)
class EvalResult:
    """Delay/area pair.  For theoretical results delay is the level and area the size."""

    delay: float
    area: float
    source: Source = field(default=Source.FAST_PROXY, compare=False)

    def __post_init__(self):
        for name in ("delay", "area"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        object.__setattr__(self, "source", Source(self.source))

    def to_dict(self) -> dict:
        return {"delay": self.delay, "area": self.area, "source": self.source.value}


def theoretical_eval(tree: PrefixTree) -> EvalResult:
    m = metrics(tree)
    return EvalResult(float(m.level), float(m.size), Source.THEORETICAL)


def proxy_eval_adder(tree: PrefixTree) -> EvalResult:
    """Unit-gate model: p/g generation, two gate levels per prefix level, sum XOR."""
    m = metrics(tree)
    n = tree.width
    delay = 1 + PREFIX_CELL_DEPTH * m.level + 1
    area = 2 * n + PREFIX_CELL_GATES * m.size + n
    return EvalResult(float(delay), float(area), Source.FAST_PROXY)


def proxy_eval_multiplier(state, tree: PrefixTree) -> EvalResult:
    """Compressor arrival delay plus final-adder proxy; gate-count area."""
    from .compressor_tree import CompressorState

    if not isinstance(state, CompressorState):
        raise TypeError("state must be a CompressorState")
    if tree.width != 2 * state.width:
        raise WidthMismatch(f"final adder must be {2 * state.width} bits wide, got {tree.width}")
    state.require_terminal()
    adder = proxy_eval_adder(tree)
    n_fa, n_ha = state.adder_counts()
    delay = state.product_delay() + adder.delay
    area = FA_GATES * n_fa + HA_GATES * n_ha + state.width**2 + adder.area
    return EvalResult(float(delay), float(area), Source.FAST_PROXY)


_RESULT_LINE = re.compile(
    r"delay=([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s+area=([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
)


def parse_evaluator_output(text: str) -> tuple[float, float]:
    for line in text.splitlines():
        match = _RESULT_LINE.search(line)
        if match:
            return float(match.group(1)), float(match.group(2))
    raise ParseError("evaluator output has no 'delay=<float> area=<float>' line")


def external_eval(
    verilog_path: str | os.PathLike,
    command_template: str,
    *,
    timeout: float | None = 600.0,
    cache: "CacheStore | None" = None,
) -> EvalResult:
    """Run a user-supplied synthesis command on a Verilog file.

    ``command_template`` must contain ``{design}``; it is replaced by the
    quoted path and split shell-style (no shell is spawned).  The command
    must print a line ``delay=<float> area=<float>``.
    """
    if "{design}" not in command_template:
        raise ValueError("command template must contain a {design} placeholder")
    path = Path(verilog_path)
    key = serialization = None
    if cache is not None:
        serialization = command_template + "\n" + path.read_text()
        key = design_key(serialization)
        hit = cache.get(key, serialization)
        if hit is not None:
            return hit
    argv = shlex.split(command_template.replace("{design}", shlex.quote(str(path))))
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout, check=False)
    except subprocess.TimeoutExpired:
        raise EvaluatorTimeout(f"evaluator exceeded {timeout}s on {path}") from None
    except OSError as exc:
        raise CommandFailed(f"could not start evaluator: {exc}") from None
    if proc.returncode != 0:
        raise CommandFailed(f"evaluator exited with {proc.returncode}: {proc.stderr.strip()[:500]}")
    delay, area = parse_evaluator_output(proc.stdout)
    result = EvalResult(delay, area, Source.EXTERNAL)
    if cache is not None:
        cache.put(key, result, serialization)
    return result


def pareto_front(points) -> np.ndarray:
    """Indices of non-dominated ``(area, delay)`` points, both minimized.

    Duplicated points are all kept.
    """
    pts = check_points(points)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    keep = np.zeros(len(pts), dtype=bool)
    best_delay = math.inf
    k = 0
    while k < len(order):
        # group identical areas; only the smallest delay in the group can survive
        area = pts[order[k], 0]
        end = k
        while end < len(order) and pts[order[end], 0] == area:
            end += 1
        group = order[k:end]
        d = pts[group[0], 1]
        if d < best_delay:
            for idx in group:
                if pts[idx, 1] == d:
                    keep[idx] = True
            best_delay = d
        k = end
    return np.flatnonzero(keep)


def _normalize(pts: np.ndarray) -> np.ndarray:
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    span[span == 0] = 1.0
    return (pts - lo) / span


def distance_to_front(points) -> np.ndarray:
    """Euclidean distance of each normalized point to the Pareto polyline."""
    pts = check_points(points)
    norm = _normalize(pts)
    front = norm[pareto_front(pts)]
    front = front[np.lexsort((front[:, 1], front[:, 0]))]
    if len(front) == 1:
        return np.linalg.norm(norm - front[0], axis=1)
    a = front[:-1][None, :, :]
    b = front[1:][None, :, :]
    p = norm[:, None, :]
    ab = b - a
    denom = (ab**2).sum(axis=2)
    denom[denom == 0] = 1.0
    t = np.clip(((p - a) * ab).sum(axis=2) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.sqrt(((p - closest) ** 2).sum(axis=2)).min(axis=1)


TIE_DECIMALS = 12


def select_top_fraction(points, fraction: float) -> np.ndarray:
    """Indices of the ``ceil(fraction * n)`` points nearest the Pareto boundary.

    Distances are rounded to 12 decimals so that geometrically equal points
    tie exactly; ties are broken by index and the result is sorted by distance.
    """
    fraction = check_fraction(fraction)
    dist = np.round(distance_to_front(points), TIE_DECIMALS)
    k = math.ceil(fraction * len(dist) - 1e-9)
    return np.argsort(dist, kind="stable")[:k]


def design_key(serialization: str) -> str:
    """Stable 64-bit key of a canonical serialization, as 16 hex digits."""
    return hashlib.blake2b(serialization.encode(), digest_size=8).hexdigest()


class CacheStore:
    """Design-hash to EvalResult map with hit/miss counters and an optional
    JSON-lines journal.  Safe for concurrent use."""

    def __init__(self, journal: str | os.PathLike | None = None):
        self._entries: dict[str, tuple[str | None, EvalResult]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.journal = Path(journal) if journal is not None else None
        if self.journal is not None and self.journal.exists():
            self._replay(self.journal)

    @classmethod
    def from_journal(cls, path: str | os.PathLike) -> "CacheStore":
        store = cls()
        store._replay(Path(path))
        return store

    def _replay(self, path: Path) -> None:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                value = EvalResult(rec["delay"], rec["area"], rec.get("source", Source.FAST_PROXY))
                self._entries[rec["key"]] = (rec.get("serialization"), value)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get(self, key: str, serialization: str | None = None) -> EvalResult | None:
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None and serialization is not None and entry[0] not in (None, serialization):
                logger.warning("cache key %s collides between distinct designs", key)
                entry = None
            if entry is None:
                self.misses += 1
                return None
            self.hits += 1
            return replace(entry[1], source=Source.CACHE)

    def put(self, key: str, value: EvalResult, serialization: str | None = None) -> None:
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None:
                if entry[1] != value:
                    raise ConflictingValue(f"key {key}: stored {entry[1]} but got {value}")
                return
            self._entries[key] = (serialization, value)
            if self.journal is not None:
                rec = {"key": key, "serialization": serialization, **value.to_dict()}
                with open(self.journal, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def items(self):
        return [(k, v) for k, (_, v) in self._entries.items()]


def cached(evaluator: Callable, cache: CacheStore, serializer: Callable[..., str]) -> Callable:
    """Wrap ``evaluator`` so identical designs are evaluated once."""

    def wrapper(*design):
        serialization = serializer(*design)
        key = design_key(serialization)
        hit = cache.get(key, serialization)
        if hit is not None:
            return hit
        result = evaluator(*design)
        cache.put(key, result, serialization)
        return result

    wrapper.cache = cache
    return wrapper


@dataclass
class RetrievalRecord:
    index: int
    stage: int
    result: EvalResult | None
    error: str | None = None


def two_level_retrieval(
    candidates: Sequence,
    fast_eval: Callable,
    full_eval: Callable,
    fraction: float = 0.1,
    *,
    jobs: int = 1,
) -> list[RetrievalRecord]:
    """Fast-evaluate every candidate, then fully evaluate the fraction closest
    to the fast-stage Pareto boundary.

    Returns stage-1 records for all candidates followed by stage-2 records for
    the selected ones.  Evaluator errors are recorded, not raised.
    """
    fraction = check_fraction(fraction)

    def run(fn, idx):
        try:
            return fn(candidates[idx]), None
        except Exception as exc:  # noqa: BLE001 - reported per candidate
            return None, f"{type(exc).__name__}: {exc}"

    def run_all(fn, indices):
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(lambda i: run(fn, i), indices))
        return [run(fn, i) for i in indices]

    records = [
        RetrievalRecord(i, 1, res, err) for i, (res, err) in zip(range(len(candidates)), run_all(fast_eval, range(len(candidates))))
    ]
    ok = [r for r in records if r.result is not None]
    if not ok:
        return records
    pts = [(r.result.area, r.result.delay) for r in ok]
    chosen = [ok[k].index for k in select_top_fraction(pts, fraction)]
    for i, (res, err) in zip(chosen, run_all(full_eval, chosen)):
        records.append(RetrievalRecord(i, 2, res, err))
    return records

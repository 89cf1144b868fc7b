"""Prefix trees for N-bit parallel-prefix addition.

A tree over ``width`` bits is a set of merge cells ``(i, j)`` (1-based,
``i`` the least significant bit of the interval, ``j`` the most
significant).  Diagonal cells ``(i, i)`` are the inputs and always exist.

Every non-input cell ``(i, j)`` is decomposed canonically: let ``i2`` be the
smallest lsb above ``i`` among the cells of column ``j``; the cell then merges
its upper parent ``(i2, j)`` with its lower parent ``(i, i2 - 1)``.  Levels,
legality and the gate-level netlist all follow this decomposition.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from . import _kernels
from ._validation import check_width
from .exceptions import (
    IllegalAction,
    IllegalTree,
    LevelTooSmall,
    ParseError,
    UnsupportedWidth,
    WidthMismatch,
)

__all__ = [
    "Family",
    "ActionKind",
    "TreeAction",
    "PrefixMetrics",
    "PrefixTree",
    "generate_seed",
    "legalize",
    "metrics",
    "legal_actions",
    "apply_action",
    "theory_size_bound",
    "serialize",
    "deserialize",
]


class Family(str, enum.Enum):
    SKLANSKY = "sklansky"
    BRENT_KUNG = "brent-kung"
    KOGGE_STONE = "kogge-stone"
    RIPPLE = "ripple"


class ActionKind(enum.IntEnum):
    DELETE = 0
    ADD = 1


class Mode(str, enum.Enum):
    DELETE_ONLY = "delete-only"
    FULL = "full"


class TreeAction(NamedTuple):
    """Edit of a single cell; tuples order as (kind, i, j)."""

    kind: ActionKind
    i: int
    j: int

    def __str__(self) -> str:
        return f"{self.kind.name.lower()}({self.i},{self.j})"


@dataclass(frozen=True)
class PrefixMetrics:
    level: int
    size: int


class PrefixTree:
    """Immutable prefix tree backed by a boolean ``[msb, lsb]`` matrix."""

    __slots__ = ("_m", "_hash", "_metrics")

    def __init__(self, matrix: np.ndarray):
        m = np.array(matrix, dtype=np.bool_, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValueError(f"cell matrix must be square and non-empty, got {m.shape}")
        m.setflags(write=False)
        self._m = m
        self._hash = None
        self._metrics = None

    @classmethod
    def from_cells(cls, width: int, cells: Iterable[tuple[int, int]]) -> "PrefixTree":
        """Build a tree from 1-based ``(lsb, msb)`` pairs.

        Diagonal cells are always added.  The result is *not* legalized.
        """
        width = check_width(width, minimum=1)
        m = np.zeros((width, width), dtype=np.bool_)
        np.fill_diagonal(m, True)
        for i, j in cells:
            if not (1 <= i <= j <= width):
                raise IllegalTree(f"cell ({i},{j}) outside 1 <= i <= j <= {width}")
            m[j - 1, i - 1] = True
        return cls(m)

    @classmethod
    def _wrap(cls, m: np.ndarray) -> "PrefixTree":
        obj = cls.__new__(cls)
        m.setflags(write=False)
        obj._m = m
        obj._hash = None
        obj._metrics = None
        return obj

    @property
    def width(self) -> int:
        return self._m.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Read-only ``[msb, lsb]`` view (0-based)."""
        return self._m

    @property
    def cells(self) -> frozenset[tuple[int, int]]:
        msb, lsb = np.nonzero(self._m)
        return frozenset(zip((lsb + 1).tolist(), (msb + 1).tolist()))

    @property
    def merge_cells(self) -> list[tuple[int, int]]:
        """Non-input cells sorted by (msb, lsb)."""
        msb, lsb = np.nonzero(np.tril(self._m, -1))
        return sorted(zip((lsb + 1).tolist(), (msb + 1).tolist()), key=lambda c: (c[1], c[0]))

    @property
    def size(self) -> int:
        return int(_kernels.cell_count(self._m))

    def __contains__(self, cell: tuple[int, int]) -> bool:
        i, j = cell
        return 1 <= i <= j <= self.width and bool(self._m[j - 1, i - 1])

    def is_legal(self) -> bool:
        return bool(_kernels.is_legal(self._m))

    def parents(self, i: int, j: int) -> tuple[tuple[int, int], tuple[int, int]]:
        """Canonical (upper, lower) parents of merge cell ``(i, j)``."""
        if i >= j or (i, j) not in self:
            raise IllegalTree(f"({i},{j}) is not a merge cell of this tree")
        column = self._m[j - 1]
        i2 = i + 1
        while not column[i2 - 1]:
            i2 += 1
        return (i2, j), (i, i2 - 1)

    def levels(self) -> np.ndarray:
        """Per-cell depth as an ``[msb, lsb]`` integer matrix."""
        return _kernels.level_map(self._m)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PrefixTree):
            return NotImplemented
        return self._m.shape == other._m.shape and bool(np.array_equal(self._m, other._m))

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.width, self._m.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f"PrefixTree(width={self.width}, size={self.size})"

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(sorted(self.cells, key=lambda c: (c[1], c[0])))


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def generate_seed(family: Family | str, width: int) -> PrefixTree:
    """Classic adder structures: Sklansky, Brent-Kung, Kogge-Stone or ripple."""
    family = Family(family)
    width = check_width(width, minimum=2)
    if family is not Family.RIPPLE and not _is_pow2(width):
        raise UnsupportedWidth(f"{family.value} seed requires a power-of-two width, got {width}")
    m = np.zeros((width, width), dtype=np.bool_)
    np.fill_diagonal(m, True)
    m[:, 0] = True
    depth = int(math.log2(width)) if family is not Family.RIPPLE else 0

    if family is Family.SKLANSKY:
        for level in range(1, depth + 1):
            for k in range(width):
                if k >> (level - 1) & 1:
                    m[k, (k >> level) << level] = True
    elif family is Family.KOGGE_STONE:
        for level in range(1, depth + 1):
            for k in range(1 << (level - 1), width):
                m[k, max(0, k - (1 << level) + 1)] = True
    elif family is Family.BRENT_KUNG:
        for level in range(1, depth + 1):
            span = 1 << level
            for k in range(span - 1, width, span):
                m[k, k - span + 1] = True
        # down-sweep cells are row-1 cells, already set above
    tree = PrefixTree._wrap(m)
    assert tree.is_legal()
    return tree


def legalize(tree: PrefixTree) -> PrefixTree:
    """Add every missing parent cell; never removes cells."""
    m = np.array(tree.matrix, copy=True)
    _kernels.legalize_inplace(m)
    return PrefixTree._wrap(m)


def metrics(tree: PrefixTree) -> PrefixMetrics:
    if tree._metrics is None:
        if not tree.is_legal():
            raise IllegalTree("metrics requested for an illegal prefix tree")
        tree._metrics = PrefixMetrics(
            level=int(_kernels.max_level(tree.matrix)), size=int(_kernels.cell_count(tree.matrix))
        )
    return tree._metrics


def deletable_cells(tree: PrefixTree) -> list[tuple[int, int]]:
    """Cells ``(i, j)``, ``1 < i < j``, that no other cell uses as its lower parent."""
    pairs = _kernels.deletable(tree.matrix)
    return [(int(i) + 1, int(j) + 1) for i, j in pairs]


def legal_actions(tree: PrefixTree, mode: Mode | str = Mode.FULL) -> list[TreeAction]:
    mode = Mode(mode)
    actions = [TreeAction(ActionKind.DELETE, i, j) for i, j in deletable_cells(tree)]
    if mode is Mode.FULL:
        m = tree.matrix
        msb, lsb = np.nonzero(~np.tril(m, -1) & np.tri(tree.width, k=-1, dtype=np.bool_))
        actions.extend(TreeAction(ActionKind.ADD, int(i) + 1, int(j) + 1) for i, j in zip(lsb, msb))
    actions.sort()
    return actions


def _check_action(tree: PrefixTree, action: TreeAction) -> None:
    kind, i, j = action
    n = tree.width
    if not (1 <= i < j <= n):
        raise IllegalAction(f"{action}: target outside the strict upper triangle of width {n}")
    present = (i, j) in tree
    if kind == ActionKind.ADD:
        if present:
            raise IllegalAction(f"{action}: cell already present")
    elif kind == ActionKind.DELETE:
        if not present:
            raise IllegalAction(f"{action}: cell absent")
        if i == 1 or _kernels.lower_parent_map(tree.matrix)[j - 1, i - 1]:
            raise IllegalAction(f"{action}: cell is not deletable")
    else:
        raise IllegalAction(f"unknown action kind {kind!r}")


def apply_action(tree: PrefixTree, action: TreeAction) -> PrefixTree:
    """Apply one edit and legalize the result."""
    action = TreeAction(ActionKind(action[0]), int(action[1]), int(action[2]))
    _check_action(tree, action)
    kind, i, j = action
    step = _kernels.delete_and_measure if kind == ActionKind.DELETE else _kernels.add_and_measure
    m, level, size = step(tree.matrix, i - 1, j - 1)
    out = PrefixTree._wrap(m)
    out._metrics = PrefixMetrics(int(level), int(size))
    return out


def theory_size_bound(width: int, level: int) -> int:
    """Lower bound on size for a prefix tree of the given level (Snir)."""
    width = check_width(width, minimum=1)
    minimum = math.ceil(math.log2(width)) if width > 1 else 0
    if level < minimum:
        raise LevelTooSmall(f"level {level} below ceil(log2({width})) = {minimum}")
    return 2 * width - 2 - level


_HEADER = re.compile(r"^prefixtree v1 width=(\d+)$")


def serialize(tree: PrefixTree) -> str:
    n = tree.width
    rows, cols = np.triu_indices(n, k=1)
    # stored [msb, lsb]; the text format walks lsb rows then msb columns
    bits = tree.matrix[cols, rows]
    pad = (-len(bits)) % 4
    bits = np.concatenate([bits, np.zeros(pad, dtype=np.bool_)])
    nibbles = bits.reshape(-1, 4) @ np.array([8, 4, 2, 1])
    return f"prefixtree v1 width={n}\n" + "".join(f"{v:x}" for v in nibbles) + "\n"


def deserialize(text: str, width: int | None = None) -> PrefixTree:
    """Parse :func:`serialize` output; any whitespace may separate header and mask."""
    parts = text.split()
    header = " ".join(parts[:3])
    match = _HEADER.match(header)
    if match is None or len(parts) > 4:
        raise ParseError(f"bad prefix-tree text starting {header[:40]!r}")
    n = int(match.group(1))
    if n < 1:
        raise ParseError("width must be positive")
    if width is not None and n != width:
        raise WidthMismatch(f"design has width {n}, expected {width}")
    payload = parts[3] if len(parts) == 4 else ""
    nbits = n * (n - 1) // 2
    if len(payload) != (nbits + 3) // 4:
        raise WidthMismatch(f"bitmask has {len(payload)} hex digits, width {n} needs {(nbits + 3) // 4}")
    try:
        values = [int(ch, 16) for ch in payload]
    except ValueError as exc:
        raise ParseError(f"non-hex bitmask: {exc}") from None
    bits = np.array([(v >> s) & 1 for v in values for s in (3, 2, 1, 0)], dtype=np.bool_)
    if bits[nbits:].any():
        raise ParseError("non-zero padding bits")
    m = np.zeros((n, n), dtype=np.bool_)
    np.fill_diagonal(m, True)
    rows, cols = np.triu_indices(n, k=1)
    m[cols, rows] = bits[:nbits]
    tree = PrefixTree._wrap(m)
    if not tree.is_legal():
        raise IllegalTree("deserialized prefix tree violates legality")
    return tree

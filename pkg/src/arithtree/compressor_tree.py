"""Compressor-tree environment for N x N unsigned multiplication.

The N^2 partial-product bits are reduced one action at a time.  Each action
places a full adder (FA) or half adder (HA) on the *action digit*, the lowest
column still holding more than two bits, and consumes the lowest-delay bits
there.  Bit delays are estimated in unit gate delays.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ._validation import check_width
from .exceptions import NotTerminal, ParseError, TerminalState

__all__ = [
    "Compressor",
    "Bit",
    "CompressorState",
    "FinalOperands",
    "init_state",
    "action_digit",
    "apply_compress",
    "features",
    "finalize_operands",
    "replay",
    "serialize_actions",
    "deserialize_actions",
    "delay_ceiling",
    "N_FEATURES",
]

# unit-gate paths: FA addend -> outputs, FA carry-in -> outputs, HA inputs -> outputs
FA_ADDEND_DELAY = 3
FA_CARRY_IN_DELAY = 2
HA_DELAY = 1
PARTIAL_PRODUCT_DELAY = 1

N_FEATURES = 8


class Compressor(enum.IntEnum):
    FA = 0
    HA = 1


class Bit(NamedTuple):
    delay: int
    uid: int


@dataclass(frozen=True)
class AdderRecord:
    """One placed compressor: input bit uids and the two produced bits."""

    kind: Compressor
    column: int
    inputs: tuple[int, ...]  # FA: (addend, addend, carry_in); HA: (a, b)
    sum_uid: int
    carry_uid: int


@dataclass(frozen=True)
class CompressorState:
    width: int
    columns: tuple[tuple[Bit, ...], ...]
    actions: tuple[Compressor, ...] = ()
    ha_counts: tuple[int, ...] = ()
    history: tuple[AdderRecord, ...] = field(default=(), repr=False)
    next_uid: int = 0

    @property
    def step(self) -> int:
        return len(self.actions)

    @property
    def counts(self) -> list[int]:
        return [len(col) for col in self.columns]

    @property
    def total_bits(self) -> int:
        return sum(len(col) for col in self.columns)

    def is_terminal(self) -> bool:
        return all(len(col) <= 2 for col in self.columns)

    def require_terminal(self) -> None:
        if not self.is_terminal():
            raise NotTerminal("compressor tree still has columns with more than two bits")

    def max_delay(self) -> int:
        return max((b.delay for col in self.columns for b in col), default=0)

    def product_delay(self) -> int:
        """Latest arrival among the bits that feed the final 2N-bit adder."""
        return max((b.delay for col in self.columns[: 2 * self.width] for b in col), default=0)

    @property
    def overflow_bits(self) -> list[int]:
        """Uids of bits above the product width (logically constant zero)."""
        return [b.uid for col in self.columns[2 * self.width :] for b in col]

    def adder_counts(self) -> tuple[int, int]:
        n_ha = sum(1 for a in self.actions if a == Compressor.HA)
        return len(self.actions) - n_ha, n_ha

    def partial_product(self, uid: int) -> tuple[int, int]:
        """Operand bit indices ``(r, s)`` of partial product ``a[r] & b[s]``."""
        if not 0 <= uid < self.width**2:
            raise ValueError(f"uid {uid} is not a partial product")
        return divmod(uid, self.width)


def init_state(width: int) -> CompressorState:
    """2N columns; column c starts with N - |c - (N-1)| partial products.

    Columns above 2N - 1 are appended when a carry leaves the top column.
    """
    n = check_width(width)
    columns = []
    for c in range(2 * n):
        rows = range(max(0, c - n + 1), min(c, n - 1) + 1)
        columns.append(tuple(Bit(PARTIAL_PRODUCT_DELAY, r * n + (c - r)) for r in rows))
    return CompressorState(
        width=n,
        columns=tuple(columns),
        ha_counts=(0,) * (2 * n),
        next_uid=n * n,
    )


def action_digit(state: CompressorState) -> int | None:
    """Lowest column with more than two bits, or ``None`` once terminal."""
    for c, col in enumerate(state.columns):
        if len(col) > 2:
            return c
    return None


def _pick(column: tuple[Bit, ...], k: int) -> list[int]:
    """Positions of the k lowest-delay bits; ties go to earlier insertion."""
    order = sorted(range(len(column)), key=lambda p: (column[p].delay, p))
    return order[:k]


def apply_compress(state: CompressorState, kind: Compressor | int) -> CompressorState:
    kind = Compressor(kind)
    c = action_digit(state)
    if c is None:
        raise TerminalState("no column holds more than two bits")
    column = state.columns[c]
    picked = _pick(column, 3 if kind is Compressor.FA else 2)
    bits = [column[p] for p in picked]  # ascending delay, so the slowest bit is last
    if kind is Compressor.FA:
        addends, carry_in = bits[:2], bits[2]
        d_out = max(max(b.delay for b in addends) + FA_ADDEND_DELAY, carry_in.delay + FA_CARRY_IN_DELAY)
    else:
        d_out = max(b.delay for b in bits) + HA_DELAY

    uid = state.next_uid
    sum_bit = Bit(d_out, uid)
    remaining = tuple(b for p, b in enumerate(column) if p not in picked) + (sum_bit,)
    columns = list(state.columns)
    ha_counts = list(state.ha_counts)
    if c + 1 == len(columns):
        # carries above the 2N-bit product are always zero but stay counted
        columns.append(())
        ha_counts.append(0)
    columns[c] = remaining
    carry_uid = uid + 1
    columns[c + 1] = columns[c + 1] + (Bit(d_out, carry_uid),)
    if kind is Compressor.HA:
        ha_counts[c] += 1
    record = AdderRecord(kind, c, tuple(b.uid for b in bits), uid, carry_uid)
    return replace(
        state,
        columns=tuple(columns),
        actions=state.actions + (kind,),
        ha_counts=tuple(ha_counts),
        history=state.history + (record,),
        next_uid=uid + 2,
    )


def delay_ceiling(width: int) -> int:
    """A-priori delay scale used to normalize features."""
    return 3 * math.ceil(math.log(width) / math.log(1.5) - 1e-12) + 4


def features(state: CompressorState) -> np.ndarray:
    """Normalized 8-vector: digit, max delay, HA count at digit, mask (2),
    three lowest delays at the digit."""
    c = action_digit(state)
    if c is None:
        raise TerminalState("features are undefined for a terminal state")
    n = state.width
    scale = float(delay_ceiling(n))
    column = state.columns[c]
    lowest = [column[p].delay / scale for p in _pick(column, 3)]
    lowest += [0.0] * (3 - len(lowest))
    return np.array(
        [c / (2 * n - 2), state.max_delay() / scale, state.ha_counts[c] / n, 1.0, 1.0, *lowest],
        dtype=np.float64,
    )


@dataclass(frozen=True)
class FinalOperands:
    """Two 2N-bit operands for the final adder.

    ``x_bits[c]`` / ``y_bits[c]`` hold the uid bound to column ``c`` or None
    for a constant zero.
    """

    x_bits: tuple[int | None, ...]
    y_bits: tuple[int | None, ...]

    @property
    def x_mask(self) -> int:
        return sum(1 << c for c, u in enumerate(self.x_bits) if u is not None)

    @property
    def y_mask(self) -> int:
        return sum(1 << c for c, u in enumerate(self.y_bits) if u is not None)


def finalize_operands(state: CompressorState) -> FinalOperands:
    state.require_terminal()
    xs, ys = [], []
    for col in state.columns[: 2 * state.width]:
        xs.append(col[0].uid if len(col) > 0 else None)
        ys.append(col[1].uid if len(col) > 1 else None)
    return FinalOperands(tuple(xs), tuple(ys))


def replay(width: int, actions) -> CompressorState:
    state = init_state(width)
    for a in actions:
        state = apply_compress(state, a)
    return state


_SEQ = re.compile(r"^compressor v1 width=(\d+) actions=([FH]*)$")


def serialize_actions(state: CompressorState) -> str:
    letters = "".join("F" if a == Compressor.FA else "H" for a in state.actions)
    return f"compressor v1 width={state.width} actions={letters}"


def deserialize_actions(text: str) -> CompressorState:
    match = _SEQ.match(text.strip())
    if match is None:
        raise ParseError(f"bad compressor sequence {text.strip()[:60]!r}")
    width = int(match.group(1))
    try:
        return replay(width, [Compressor.FA if ch == "F" else Compressor.HA for ch in match.group(2)])
    except (TerminalState, ValueError) as exc:
        raise ParseError(f"sequence does not replay: {exc}") from None

"""Gate-level netlists for prefix adders and compressor-tree multipliers.

Wires are numbered densely: input port bits first (ports in declaration
order, bit 0 first), then one wire per gate in gate order.  Gate operands
always refer to lower-numbered wires, so the gate list is a topological order
and simulation is a single pass.  Simulation is bit-parallel: 64 test vectors
share one ``uint64`` word per wire.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from ._validation import check_positive_int
from .compressor_tree import Compressor, CompressorState, finalize_operands, replay
from .exceptions import IllegalTree, InvalidModuleName, UnboundInput, WidthMismatch
from .prefix_tree import PrefixTree

__all__ = [
    "GateKind",
    "Gate",
    "Netlist",
    "Exhaustive",
    "Random",
    "VerifyReport",
    "build_adder_netlist",
    "build_multiplier_netlist",
    "simulate",
    "simulate_packed",
    "verify",
    "emit_verilog",
]

EXHAUSTIVE_LIMIT_BITS = 26
_CHUNK_VECTORS = 1 << 16


class GateKind(str, enum.Enum):
    AND = "AND"
    OR = "OR"
    XOR = "XOR"
    NOT = "NOT"
    CONST0 = "CONST0"


_ARITY = {GateKind.AND: 2, GateKind.OR: 2, GateKind.XOR: 2, GateKind.NOT: 1, GateKind.CONST0: 0}


class Gate(NamedTuple):
    kind: GateKind
    operands: tuple[int, ...]


@dataclass(frozen=True)
class Netlist:
    """Combinational netlist.

    ``function`` names the arithmetic the netlist claims to implement
    (``"adder"``, ``"multiplier"`` or ``"custom"``) and ``width`` the operand
    width; :func:`verify` checks the claim.
    """

    inputs: tuple[tuple[str, int], ...]
    gates: tuple[Gate, ...]
    outputs: tuple[tuple[str, tuple[int, ...]], ...]
    function: str = "custom"
    width: int = 0

    def __post_init__(self):
        n_in = self.n_inputs
        for k, gate in enumerate(self.gates):
            kind = GateKind(gate.kind)
            if len(gate.operands) != _ARITY[kind]:
                raise ValueError(f"gate {k}: {kind.value} takes {_ARITY[kind]} operands")
            for op in gate.operands:
                if not 0 <= op < n_in + k:
                    raise ValueError(f"gate {k}: operand w{op} is not defined before it")
        n_wires = self.n_wires
        for name, wires in self.outputs:
            if not wires:
                raise ValueError(f"output {name} has no bits")
            for w in wires:
                if not 0 <= w < n_wires:
                    raise ValueError(f"output {name} bound to unknown wire w{w}")

    @property
    def n_inputs(self) -> int:
        return sum(w for _, w in self.inputs)

    @property
    def n_wires(self) -> int:
        return self.n_inputs + len(self.gates)

    @property
    def gate_count(self) -> int:
        """Logic gates, not counting constant drivers."""
        return sum(1 for g in self.gates if g.kind is not GateKind.CONST0)

    def input_wires(self) -> dict[str, range]:
        out, base = {}, 0
        for name, width in self.inputs:
            out[name] = range(base, base + width)
            base += width
        return out

    def output_widths(self) -> dict[str, int]:
        return {name: len(wires) for name, wires in self.outputs}


class _Builder:
    def __init__(self, inputs: Sequence[tuple[str, int]]):
        self.inputs = tuple(inputs)
        self.n_in = sum(w for _, w in self.inputs)
        self.gates: list[Gate] = []
        self._zero: int | None = None

    def gate(self, kind: GateKind, *operands: int) -> int:
        self.gates.append(Gate(kind, tuple(operands)))
        return self.n_in + len(self.gates) - 1

    def zero(self) -> int:
        if self._zero is None:
            self._zero = self.gate(GateKind.CONST0)
        return self._zero

    def finish(self, outputs, function: str, width: int) -> Netlist:
        return Netlist(self.inputs, tuple(self.gates), tuple(outputs), function, width)


def _prefix_adder(bld: _Builder, tree: PrefixTree, a: Sequence[int], b: Sequence[int]) -> tuple[list[int], int]:
    """Append a prefix adder on wires ``a``/``b``; returns (sum wires, carry-out wire)."""
    if not tree.is_legal():
        raise IllegalTree("cannot build a netlist from an illegal prefix tree")
    n = tree.width
    p, g = [], []
    for i in range(n):
        p.append(bld.gate(GateKind.XOR, a[i], b[i]))
        g.append(bld.gate(GateKind.AND, a[i], b[i]))
    P = {(i, i): p[i - 1] for i in range(1, n + 1)}
    G = {(i, i): g[i - 1] for i in range(1, n + 1)}
    # within a column the upper parent has a larger lsb, so walk lsb downwards
    for i, j in sorted(tree.merge_cells, key=lambda c: (c[1], -c[0])):
        up, low = tree.parents(i, j)
        P[i, j] = bld.gate(GateKind.AND, P[up], P[low])
        t = bld.gate(GateKind.AND, P[up], G[low])
        G[i, j] = bld.gate(GateKind.OR, G[up], t)
    carries = [bld.zero()] + [G[1, i] for i in range(1, n)]
    sums = [bld.gate(GateKind.XOR, p[i], carries[i]) for i in range(n)]
    return sums, G[1, n]


def build_adder_netlist(tree: PrefixTree) -> Netlist:
    """``sum = (a + b) mod 2^N`` and ``cout`` from a legal prefix tree.

    Gate count is ``2N + 3 * size + N``: p/g per bit, three gates per merge
    cell and one sum XOR per bit (bit 1 XORs a constant-zero carry-in).
    """
    n = tree.width
    bld = _Builder([("a", n), ("b", n)])
    sums, cout = _prefix_adder(bld, tree, range(n), range(n, 2 * n))
    return bld.finish([("sum", tuple(sums)), ("cout", (cout,))], "adder", n)


def build_multiplier_netlist(state: CompressorState, tree: PrefixTree) -> Netlist:
    """``product = a * b`` (2N bits) from a terminal compressor state and a 2N-bit tree.

    The compressor is rebuilt by replaying the recorded actions.  Bits
    pushed above the product width and the final carry-out are left
    unconnected; both are constant zero because ``a * b < 2^(2N)``.
    """
    state.require_terminal()
    n = state.width
    if tree.width != 2 * n:
        raise WidthMismatch(f"final adder must be {2 * n} bits wide, got {tree.width}")
    state = replay(n, state.actions)
    bld = _Builder([("a", n), ("b", n)])
    wire: dict[int, int] = {}
    for uid in range(n * n):
        r, s = divmod(uid, n)
        wire[uid] = bld.gate(GateKind.AND, r, n + s)
    for rec in state.history:
        if rec.kind is Compressor.FA:
            x, y, cin = (wire[u] for u in rec.inputs)
            s1 = bld.gate(GateKind.XOR, x, y)
            c1 = bld.gate(GateKind.AND, x, y)
            wire[rec.sum_uid] = bld.gate(GateKind.XOR, s1, cin)
            c2 = bld.gate(GateKind.AND, s1, cin)
            wire[rec.carry_uid] = bld.gate(GateKind.OR, c1, c2)
        else:
            x, y = (wire[u] for u in rec.inputs)
            wire[rec.sum_uid] = bld.gate(GateKind.XOR, x, y)
            wire[rec.carry_uid] = bld.gate(GateKind.AND, x, y)
    ops = finalize_operands(state)
    xs = [wire[u] if u is not None else bld.zero() for u in ops.x_bits]
    ys = [wire[u] if u is not None else bld.zero() for u in ops.y_bits]
    sums, _ = _prefix_adder(bld, tree, xs, ys)
    return bld.finish([("product", tuple(sums))], "multiplier", n)


# ---------------------------------------------------------------- simulation


def simulate_packed(netlist: Netlist, words: np.ndarray) -> np.ndarray:
    """Evaluate every wire for packed inputs.

    ``words`` has shape ``(n_inputs, W)``; bit ``k`` of word ``w`` is test
    vector ``64 * w + k``.  Returns the ``(n_wires, W)`` wire values.
    """
    words = np.asarray(words, dtype=np.uint64)
    n_in = netlist.n_inputs
    if words.ndim != 2 or words.shape[0] != n_in:
        raise ValueError(f"expected ({n_in}, W) packed words, got {words.shape}")
    vals = np.empty((netlist.n_wires, words.shape[1]), dtype=np.uint64)
    vals[:n_in] = words
    for k, (kind, ops) in enumerate(netlist.gates):
        out = vals[n_in + k]
        if kind is GateKind.AND:
            np.bitwise_and(vals[ops[0]], vals[ops[1]], out=out)
        elif kind is GateKind.XOR:
            np.bitwise_xor(vals[ops[0]], vals[ops[1]], out=out)
        elif kind is GateKind.OR:
            np.bitwise_or(vals[ops[0]], vals[ops[1]], out=out)
        elif kind is GateKind.NOT:
            np.invert(vals[ops[0]], out=out)
        else:
            out[:] = 0
    return vals


def _pack(bits: np.ndarray) -> np.ndarray:
    """(rows, n) bool -> (rows, ceil(n/64)) uint64, vector k in bit k % 64."""
    rows, n = bits.shape
    pad = (-n) % 64
    if pad:
        bits = np.concatenate([bits, np.zeros((rows, pad), dtype=bool)], axis=1)
    return np.packbits(bits, axis=1, bitorder="little").view("<u8").astype(np.uint64)


def _unpack(words: np.ndarray, n: int) -> np.ndarray:
    as_bytes = np.ascontiguousarray(words.astype("<u8")).view(np.uint8)
    return np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :n].astype(bool)


def _int_array(values, width: int) -> np.ndarray:
    # uint64 while every value fits, Python ints otherwise
    dtype = np.uint64 if width <= 63 else object
    return np.asarray(values, dtype=dtype).reshape(-1)


def _to_bits(values: np.ndarray, width: int) -> np.ndarray:
    if values.dtype == object:
        return np.array([[(int(v) >> k) & 1 for v in values] for k in range(width)], dtype=bool).reshape(width, -1)
    return np.stack([((values >> np.uint64(k)) & np.uint64(1)).astype(bool) for k in range(width)]).reshape(width, -1)


def _from_bits(bits: np.ndarray) -> np.ndarray:
    width, n = bits.shape
    if width <= 63:
        out = np.zeros(n, dtype=np.uint64)
        for k in range(width):
            out |= bits[k].astype(np.uint64) << np.uint64(k)
        return out
    out = np.zeros(n, dtype=object)
    for k in range(width):
        out = out + (bits[k].astype(object) * (1 << k))
    return out


def _run(netlist: Netlist, values: Mapping[str, np.ndarray], n: int) -> dict[str, np.ndarray]:
    rows = []
    for name, width in netlist.inputs:
        if name not in values:
            raise UnboundInput(f"input port {name!r} is not assigned")
        rows.append(_to_bits(values[name], width))
    bits = np.concatenate(rows) if rows else np.zeros((0, n), dtype=bool)
    out_wires = [w for _, wires in netlist.outputs for w in wires]
    chunks = [np.empty((len(out_wires), 0), dtype=bool)]
    for lo in range(0, n, _CHUNK_VECTORS):
        hi = min(n, lo + _CHUNK_VECTORS)
        wires = simulate_packed(netlist, _pack(bits[:, lo:hi]))
        chunks.append(_unpack(wires[out_wires], hi - lo))
    vals = np.concatenate(chunks, axis=1)
    result, base = {}, 0
    for name, wires in netlist.outputs:
        result[name] = _from_bits(vals[base : base + len(wires)])
        base += len(wires)
    return result


def simulate(netlist: Netlist, assignment: Mapping[str, int | Sequence[int]]) -> dict:
    """Evaluate output ports for integer port assignments.

    Scalars in give scalars out; equal-length sequences are simulated as a
    batch and return arrays.
    """
    batch = any(not isinstance(v, (int, np.integer)) for v in assignment.values())
    values, n = {}, None
    for name, width in netlist.inputs:
        if name not in assignment:
            raise UnboundInput(f"input port {name!r} is not assigned")
        raw = assignment[name]
        arr = _int_array([int(v) for v in np.atleast_1d(np.asarray(raw, dtype=object))], width)
        if arr.size and (min(int(v) for v in arr) < 0 or max(int(v) for v in arr) >> width):
            raise ValueError(f"port {name!r} value does not fit in {width} bits")
        if n is None:
            n = arr.size
        elif arr.size != n:
            raise ValueError("batched port assignments must have equal length")
        values[name] = arr
    out = _run(netlist, values, n or 1)
    if batch:
        return out
    return {name: int(v[0]) for name, v in out.items()}


# -------------------------------------------------------------- verification


@dataclass(frozen=True)
class Exhaustive:
    pass


@dataclass(frozen=True)
class Random:
    count: int
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.count, "count")


@dataclass
class VerifyReport:
    design: str
    mode: str
    vectors: int
    passed: bool
    counterexample: dict | None = None
    vector_digest: str = field(default="", repr=False)

    def to_dict(self) -> dict:
        out = {"design": self.design, "mode": self.mode, "vectors": self.vectors, "pass": self.passed}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        if self.vector_digest:
            out["vector_digest"] = self.vector_digest
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _design_netlist(design) -> Netlist:
    if isinstance(design, Netlist):
        return design
    if isinstance(design, PrefixTree):
        return build_adder_netlist(design)
    if isinstance(design, tuple) and len(design) == 2:
        return build_multiplier_netlist(*design)
    if hasattr(design, "state") and hasattr(design, "tree"):
        return build_multiplier_netlist(design.state, design.tree)
    raise TypeError(f"cannot verify object of type {type(design).__name__}")


def _expected(netlist: Netlist, a: np.ndarray, b: np.ndarray) -> dict[str, np.ndarray]:
    n = netlist.width
    if netlist.function == "adder":
        if a.dtype == object:
            total = a + b
            return {"sum": total & ((1 << n) - 1), "cout": total >> n}
        total = a + b
        return {"sum": total & np.uint64((1 << n) - 1), "cout": total >> np.uint64(n)}
    if netlist.function == "multiplier":
        if a.dtype == object or 2 * n > 63:
            return {"product": a.astype(object) * b.astype(object)}
        return {"product": a * b}
    raise ValueError(f"netlist function {netlist.function!r} has no reference model")


def random_vectors(width: int, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded operand pairs, uniform over ``width``-bit integers."""
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(2 * width, count), dtype=np.uint8).astype(bool)
    return _from_bits(bits[:width]), _from_bits(bits[width:])


def verify(design, mode: Exhaustive | Random | str = Exhaustive(), *, name: str | None = None) -> VerifyReport:
    """Check a design against integer addition or multiplication.

    ``design`` is a PrefixTree (adder), a ``(CompressorState, PrefixTree)``
    pair or anything with ``state``/``tree`` attributes (multiplier), or a
    Netlist whose ``function`` names its reference model.  A mismatch is
    reported with the first failing vector rather than raised.
    """
    if isinstance(mode, str):
        if mode != "exhaustive":
            raise ValueError(f"unknown verify mode {mode!r}")
        mode = Exhaustive()
    netlist = _design_netlist(design)
    n = netlist.width
    if isinstance(mode, Exhaustive):
        if 2 * n > EXHAUSTIVE_LIMIT_BITS:
            raise ValueError(f"exhaustive verification of {2 * n} input bits exceeds 2^{EXHAUSTIVE_LIMIT_BITS} vectors")
        v = np.arange(1 << (2 * n), dtype=np.uint64)
        a, b = v & np.uint64((1 << n) - 1), v >> np.uint64(n)
        mode_name = "exhaustive"
    else:
        a, b = random_vectors(n, mode.count, mode.seed)
        mode_name = f"random(count={mode.count}, seed={mode.seed})"
    digest = hashlib.blake2b(digest_size=8)
    digest.update(np.asarray(a, dtype=object).astype(str).tobytes() if a.dtype == object else a.tobytes())
    digest.update(np.asarray(b, dtype=object).astype(str).tobytes() if b.dtype == object else b.tobytes())

    got = _run(netlist, {"a": a, "b": b}, len(a))
    want = _expected(netlist, a, b)
    bad = np.zeros(len(a), dtype=bool)
    for port, exp in want.items():
        bad |= np.asarray(got[port] != exp, dtype=bool)
    counterexample = None
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        counterexample = {
            "a": int(a[k]),
            "b": int(b[k]),
            "expected": {p: int(e[k]) for p, e in want.items()},
            "got": {p: int(got[p][k]) for p in want},
        }
    label = name or f"{netlist.function} width={n} gates={netlist.gate_count}"
    return VerifyReport(label, mode_name, len(a), counterexample is None, counterexample, digest.hexdigest())


# ------------------------------------------------------------------- verilog

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_VERILOG_KEYWORDS = frozenset(
    """always and assign begin buf case default else end endcase endfunction endmodule
    for function if initial inout input integer module nand nor not or output parameter
    reg supply0 supply1 wire xnor xor logic""".split()
)
_OPS = {GateKind.AND: "&", GateKind.OR: "|", GateKind.XOR: "^"}


def _port_ref(name: str, width: int, bit: int) -> str:
    return name if width == 1 else f"{name}[{bit}]"


def emit_verilog(netlist: Netlist, module_name: str) -> str:
    """Structural Verilog, one continuous assignment per gate.

    Output depends only on the netlist, including its gate order.
    """
    if not isinstance(module_name, str) or not _IDENT.match(module_name) or module_name in _VERILOG_KEYWORDS:
        raise InvalidModuleName(f"{module_name!r} is not a valid Verilog module name")
    ports = []
    for name, width in netlist.inputs:
        ports.append(("input", name, width))
    for name, wires in netlist.outputs:
        ports.append(("output", name, len(wires)))
    lines = [f"module {module_name} ("]
    for k, (direction, name, width) in enumerate(ports):
        rng = "" if width == 1 else f" [{width - 1}:0]"
        sep = "," if k < len(ports) - 1 else ""
        lines.append(f"  {direction} wire{rng} {name}{sep}")
    lines.append(");")
    n_wires = netlist.n_wires
    for lo in range(0, n_wires, 16):
        names = ", ".join(f"w{k}" for k in range(lo, min(n_wires, lo + 16)))
        lines.append(f"  wire {names};")
    widths = dict(netlist.inputs)
    for name, rng in netlist.input_wires().items():
        for bit, w in enumerate(rng):
            lines.append(f"  assign w{w} = {_port_ref(name, widths[name], bit)};")
    n_in = netlist.n_inputs
    for k, (kind, ops) in enumerate(netlist.gates):
        w = n_in + k
        if kind is GateKind.CONST0:
            rhs = "1'b0"
        elif kind is GateKind.NOT:
            rhs = f"~w{ops[0]}"
        else:
            rhs = f"w{ops[0]} {_OPS[kind]} w{ops[1]}"
        lines.append(f"  assign w{w} = {rhs};")
    for name, wires in netlist.outputs:
        for bit, w in enumerate(wires):
            lines.append(f"  assign {_port_ref(name, len(wires), bit)} = w{w};")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"

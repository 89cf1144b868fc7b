"""Reference implementations used only by the tests.

Each one is written from the definition, in plain Python, without calling
the package's kernels.
"""

from __future__ import annotations

import bisect
import itertools
import math


# ---------------------------------------------------------------- prefix trees


def _columns(cells) -> dict:
    cols: dict[int, list[int]] = {}
    for i, j in cells:
        cols.setdefault(j, []).append(i)
    for v in cols.values():
        v.sort()
    return cols


def canonical_parents(cells, i: int, j: int, cols: dict | None = None):
    column = (cols or _columns(cells))[j]
    i2 = column[bisect.bisect_right(column, i)]
    return (i2, j), (i, i2 - 1)


def is_legal(cells: set, n: int) -> bool:
    if any((k, k) not in cells for k in range(1, n + 1)):
        return False
    if any((1, j) not in cells for j in range(2, n + 1)):
        return False
    cols = _columns(cells)
    for i, j in cells:
        if i < j:
            up, low = canonical_parents(cells, i, j, cols)
            if up not in cells or low not in cells:
                return False
    return True


def levels(cells: set) -> dict:
    cols = _columns(cells)
    memo = {}
    # lower parents have smaller msb and upper parents larger lsb, so this order is topological
    for c in sorted(cells, key=lambda c: (c[1], -c[0])):
        i, j = c
        if i == j:
            memo[c] = 0
        else:
            up, low = canonical_parents(cells, i, j, cols)
            memo[c] = 1 + max(memo[up], memo[low])
    return memo


def level_and_size(cells: set) -> tuple[int, int]:
    return max(levels(cells).values()), sum(1 for i, j in cells if i < j)


def legalize(cells: set, n: int) -> set:
    """Columns from the top down, adding missing lower parents."""
    cells = set(cells) | {(k, k) for k in range(1, n + 1)} | {(1, j) for j in range(2, n + 1)}
    for j in range(n, 1, -1):
        for i in sorted(k for (k, jj) in cells if jj == j and k < j):
            i2 = min(k for (k, jj) in cells if jj == j and k > i)
            cells.add((i, i2 - 1))
    return cells


def enumerate_designs(n: int):
    """Every legal prefix tree of width ``n`` as a frozenset of cells."""
    base = {(k, k) for k in range(1, n + 1)} | {(1, j) for j in range(2, n + 1)}
    free = [(i, j) for j in range(2, n + 1) for i in range(2, j)]
    for mask in range(1 << len(free)):
        cells = base | {free[k] for k in range(len(free)) if mask >> k & 1}
        if is_legal(cells, n):
            yield frozenset(cells)


def min_size_by_level(n: int) -> dict[int, int]:
    best: dict[int, int] = {}
    for cells in enumerate_designs(n):
        lvl, size = level_and_size(set(cells))
        best[lvl] = min(best.get(lvl, math.inf), size)
    # a tree allowed level L may use any level <= L
    out, run = {}, math.inf
    for lvl in sorted(best):
        run = min(run, best[lvl])
        out[lvl] = run
    return out


# ----------------------------------------------------------------- pareto


def brute_pareto(points) -> set[int]:
    pts = [tuple(p) for p in points]
    keep = set()
    for a, p in enumerate(pts):
        dominated = any(
            q[0] <= p[0] and q[1] <= p[1] and (q[0] < p[0] or q[1] < p[1]) for b, q in enumerate(pts) if b != a
        )
        if not dominated:
            keep.add(a)
    return keep


def _seg_dist(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    t = 0.0 if denom == 0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / denom))
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(px - cx, py - cy)


def brute_distances(points) -> list[float]:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]

    def norm(v, lo, hi):
        return (v - lo) / (hi - lo) if hi > lo else v - lo

    pts = [(norm(x, min(xs), max(xs)), norm(y, min(ys), max(ys))) for x, y in points]
    front = sorted({pts[k] for k in brute_pareto(points)})
    if len(front) == 1:
        return [math.dist(p, front[0]) for p in pts]
    segs = list(zip(front[:-1], front[1:]))
    return [min(_seg_dist(p, a, b) for a, b in segs) for p in pts]


def brute_top_fraction(points, fraction: float) -> list[int]:
    d = [round(x, 12) for x in brute_distances(points)]
    k = math.ceil(fraction * len(points) - 1e-9)
    return sorted(range(len(points)), key=lambda i: (d[i], i))[:k]


# -------------------------------------------------------------- compressors


def all_fa_delay_walk(width: int) -> list[int]:
    """Column heights of the initial partial-product array."""
    return [width - abs(c - (width - 1)) for c in range(2 * width - 1)]


def pairs_by_column(width: int) -> list[int]:
    counts = [0] * (2 * width - 1)
    for a, b in itertools.product(range(width), repeat=2):
        counts[a + b] += 1
    return counts


# ---------------------------------------------------------------- netlists


def eval_netlist(netlist, ports: dict) -> dict:
    """Gate-by-gate evaluation with Python ints, one vector at a time."""
    wires = []
    for name, width in netlist.inputs:
        wires.extend((ports[name] >> k) & 1 for k in range(width))
    for gate in netlist.gates:
        kind = str(getattr(gate.kind, "value", gate.kind)).lower()
        ops = [wires[w] for w in gate.operands]
        if kind == "and":
            wires.append(ops[0] & ops[1])
        elif kind == "or":
            wires.append(ops[0] | ops[1])
        elif kind == "xor":
            wires.append(ops[0] ^ ops[1])
        elif kind == "not":
            wires.append(1 - ops[0])
        else:
            wires.append(0)
    return {name: sum(wires[w] << k for k, w in enumerate(ws)) for name, ws in netlist.outputs}

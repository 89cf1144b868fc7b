"""Compiled inner loops over the prefix-tree cell matrix.

The matrix ``m`` is square and boolean, indexed ``m[msb, lsb]`` with
0-based bit positions, so only the lower triangle (``lsb <= msb``) is used.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def legalize_inplace(m):
    n = m.shape[0]
    for j in range(n):
        m[j, j] = True
        m[j, 0] = True
    # lower parents land in columns < j, which are visited afterwards
    for j in range(n - 1, 0, -1):
        last = j
        for i in range(j - 1, -1, -1):
            if m[j, i]:
                m[last - 1, i] = True
                last = i


@njit(cache=True)
def is_legal(m):
    n = m.shape[0]
    for j in range(n):
        if not m[j, j] or not m[j, 0]:
            return False
        for i in range(j + 1, n):
            if m[j, i]:
                return False
    for j in range(1, n):
        last = j
        for i in range(j - 1, -1, -1):
            if m[j, i]:
                if not m[last - 1, i]:
                    return False
                last = i
    return True


@njit(cache=True)
def level_map(m):
    n = m.shape[0]
    lev = np.zeros((n, n), np.int64)
    for j in range(1, n):
        last = j
        for i in range(j - 1, -1, -1):
            if m[j, i]:
                a = lev[j, last]
                b = lev[last - 1, i]
                lev[j, i] = (a if a > b else b) + 1
                last = i
    return lev


@njit(cache=True)
def max_level(m):
    return level_map(m).max()


@njit(cache=True)
def cell_count(m):
    n = m.shape[0]
    total = 0
    for j in range(1, n):
        for i in range(j):
            if m[j, i]:
                total += 1
    return total


@njit(cache=True)
def lower_parent_map(m):
    """Mark every cell that some other cell uses as its lower parent."""
    n = m.shape[0]
    used = np.zeros((n, n), np.bool_)
    for j in range(1, n):
        last = j
        for i in range(j - 1, -1, -1):
            if m[j, i]:
                used[last - 1, i] = True
                last = i
    return used


@njit(cache=True)
def deletable(m):
    """Return (lsb, msb) pairs, 0-based, of every deletable cell.

    A merge cell off the first row is deletable when no cell takes it as a
    lower parent; removing it only rewires cells of its own column.
    """
    n = m.shape[0]
    used = lower_parent_map(m)
    out = np.empty((n * n, 2), np.int64)
    k = 0
    for j in range(2, n):
        for i in range(1, j):
            if m[j, i] and not used[j, i]:
                out[k, 0] = i
                out[k, 1] = j
                k += 1
    return out[:k]


@njit(cache=True)
def delete_and_measure(m, lsb, msb):
    out = m.copy()
    out[msb, lsb] = False
    legalize_inplace(out)
    return out, max_level(out), cell_count(out)


@njit(cache=True)
def add_and_measure(m, lsb, msb):
    out = m.copy()
    out[msb, lsb] = True
    legalize_inplace(out)
    return out, max_level(out), cell_count(out)

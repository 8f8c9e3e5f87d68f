"""Pure-Python enumeration kernels.

These are the fallback for :mod:`moxi._kernels_cy` and share its loop order
exactly, so both backends accumulate in the same sequence.

All functions take a dense value table indexed by a *local* bitmask over
``m`` players (``table[mask] = f(coalition)``) and weight vectors computed
by the caller.
"""

from __future__ import annotations

import numpy as np


def _lists(*arrays):
    return [a.tolist() if isinstance(a, np.ndarray) else list(a) for a in arrays]


def block_marginal_sum(table, others_mask: int, block_mask: int, weights) -> float:
    """Sum ``weights[|T|] * (table[T | block] - table[T])`` over ``T`` subset of others."""
    table, weights = _lists(table, weights)
    acc = 0.0
    t = others_mask
    while True:
        acc += weights[t.bit_count()] * (table[t | block_mask] - table[t])
        if t == 0:
            break
        t = (t - 1) & others_mask
    return float(acc)


def deletion_marginal_sum(table, context_mask: int, player: int, weights) -> float:
    """Sum ``weights[|S| - 1] * (table[S] - table[S - {player}])`` over ``S`` containing player."""
    table, weights = _lists(table, weights)
    bit = 1 << player
    rest = context_mask & ~bit
    acc = 0.0
    t = rest
    while True:
        s = t | bit
        acc += weights[t.bit_count()] * (table[s] - table[t])
        if t == 0:
            break
        t = (t - 1) & rest
    return float(acc)


def all_shapley(table, m: int, weights) -> np.ndarray:
    """Shapley value of every local player in one pass over the table."""
    table, weights = _lists(table, weights)
    phi = [0.0] * m
    full = (1 << m) - 1
    for t in range(full):  # the full mask has no absent player
        w = weights[t.bit_count()]
        base = table[t]
        for i in range(m):
            bit = 1 << i
            if not t & bit:
                phi[i] += w * (table[t | bit] - base)
    return np.asarray(phi, dtype=np.float64)


def popcounts(m: int) -> np.ndarray:
    """Popcount of every mask in ``[0, 2**m)``."""
    out = np.zeros(1 << m, dtype=np.int64)
    for t in range(1, 1 << m):
        out[t] = out[t >> 1] + (t & 1)
    return out

"""Exact and sampled Shapley values and pairwise interactions.

Exact routines tabulate the reward over every subset of the context once
(through the cache, so repeated queries are free) and hand the dense table
to the enumeration kernels in :mod:`moxi.kernels`.

Besides the textbook quantities, this module provides the cheap
*self-context* scores used by greedy insertion and the *full-context*
deletion scores used by greedy deletion.  Both only touch a handful of
coalitions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from moxi import kernels
from moxi.game import CachedOracle, ContractViolation, PlayerSet, as_player_set

EXACT_LIMIT = 20
EXHAUSTIVE_LIMIT = 9

KINDS = (
    "shapley",
    "deletion_shapley",
    "interaction",
    "self_context_shapley",
    "self_context_interaction",
    "full_context_deletion_shapley",
    "full_context_deletion_interaction",
)


class EnumerationLimitError(ContractViolation):
    """Context is too large for exact enumeration."""


@dataclass(frozen=True)
class AttributionScore:
    """A cooperative-game index for one player (or merged group).

    ``raw`` holds the unscaled bracket for the full-context kinds, whose
    normalizing constant is a convention rather than part of the argmax.
    ``std_error`` is only set by Monte-Carlo estimates.
    """

    player: int | tuple[int, ...]
    value: float
    kind: str
    context: PlayerSet
    raw: float | None = None
    std_error: float | None = None
    samples: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite score for player {self.player}")


@dataclass(frozen=True)
class SamplingConfig:
    """Permutation-sampling settings.

    ``exhaustive=True`` averages over every ordering of the context instead
    of sampling; it is only allowed for small contexts.
    """

    sample_size: int = 200
    seed: int = 0
    scheme: str = "permutation"
    exhaustive: bool = False

    def __post_init__(self):
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if self.scheme != "permutation":
            raise ValueError(f"unsupported sampling scheme {self.scheme!r}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))


def _factorial_ratio(a: int, b: int, c: int) -> float:
    """``a! * b! / c!`` as a float; exact integers while they stay small."""
    if c <= EXACT_LIMIT + 1:
        return math.factorial(a) * math.factorial(b) / math.factorial(c)
    return math.exp(math.lgamma(a + 1) + math.lgamma(b + 1) - math.lgamma(c + 1))


def shapley_weights(m: int) -> np.ndarray:
    """Weight of a coalition of size ``t`` drawn from ``m`` other players.

    ``w[t] = t! (m - t)! / (m + 1)!``; the weights of all ``2**m`` coalitions
    sum to one.
    """
    return np.array([_factorial_ratio(t, m - t, m + 1) for t in range(m + 1)], dtype=np.float64)


def deletion_weights(m: int) -> np.ndarray:
    """Weight ``(m - t - 1)! t! / m!`` of removing a player from a size-``t + 1`` coalition of an ``m``-player context."""
    return np.array([_factorial_ratio(m - t - 1, t, m) for t in range(m)], dtype=np.float64)


def subset_bits(players: Sequence[int]) -> list[int]:
    """Global bitmask for every local mask over ``players``.

    Entry ``L`` has bit ``players[k]`` set iff bit ``k`` of ``L`` is set.
    """
    m = len(players)
    out = [0] * (1 << m)
    pbits = [1 << p for p in players]
    for local in range(1, 1 << m):
        low = local & -local
        out[local] = out[local ^ low] | pbits[low.bit_length() - 1]
    return out


def context_table(oracle: CachedOracle, context: PlayerSet, limit: int = EXACT_LIMIT) -> tuple[list[int], np.ndarray]:
    """Evaluate ``f`` on every subset of ``context``.

    Returns the context players (local index -> player) and the value table
    indexed by local mask.
    """
    context = as_player_set(oracle.n, context)
    players = list(context)
    if len(players) > limit:
        raise EnumerationLimitError(
            f"context has {len(players)} players; exact enumeration is capped at {limit}. "
            "Use mc_shapley with a SamplingConfig instead."
        )
    table = oracle.evaluate_bits(subset_bits(players))
    return players, np.ascontiguousarray(table)


def _require_member(context: PlayerSet, *players: int) -> None:
    for p in players:
        if p not in context:
            raise ContractViolation(f"player {p} is not in the context {sorted(context)}")


def _local_mask(players: list[int], members) -> int:
    pos = {p: k for k, p in enumerate(players)}
    mask = 0
    for p in members:
        mask |= 1 << pos[p]
    return mask


def exact_shapley(oracle: CachedOracle, context: PlayerSet, i: int, limit: int = EXACT_LIMIT) -> AttributionScore:
    """Shapley value of ``i`` within ``context`` by full enumeration."""
    context = as_player_set(oracle.n, context)
    _require_member(context, i)
    players, table = context_table(oracle, context, limit)
    m = len(players)
    block = _local_mask(players, [i])
    others = ((1 << m) - 1) & ~block
    value = kernels.block_marginal_sum(table, others, block, shapley_weights(m - 1))
    return AttributionScore(i, value, "shapley", context)


def exact_shapley_all(oracle: CachedOracle, context: PlayerSet | None = None, limit: int = EXACT_LIMIT) -> list[AttributionScore]:
    """Shapley values of every player in ``context`` (default: grand set) in one table pass."""
    context = oracle.grand_set() if context is None else as_player_set(oracle.n, context)
    players, table = context_table(oracle, context, limit)
    m = len(players)
    if m == 0:
        return []
    phi = kernels.all_shapley(table, m, shapley_weights(m - 1))
    return [AttributionScore(p, float(v), "shapley", context) for p, v in zip(players, phi)]


def exact_interaction(oracle: CachedOracle, context: PlayerSet, i: int, j: int, limit: int = EXACT_LIMIT) -> AttributionScore:
    """Pairwise interaction of ``i`` and ``j``.

    The pair joins as one merged player in a context where both are
    replaced by that merge; each player's individual value is taken in the
    context without its partner.
    """
    context = as_player_set(oracle.n, context)
    if i == j:
        raise ContractViolation("interaction needs two distinct players; see self_interaction")
    _require_member(context, i, j)
    players, table = context_table(oracle, context, limit)
    m = len(players)
    bi, bj = _local_mask(players, [i]), _local_mask(players, [j])
    rest = ((1 << m) - 1) & ~(bi | bj)
    w = shapley_weights(m - 2)
    joint = kernels.block_marginal_sum(table, rest, bi | bj, w)
    alone_i = kernels.block_marginal_sum(table, rest, bi, w)
    alone_j = kernels.block_marginal_sum(table, rest, bj, w)
    return AttributionScore((i, j), joint - alone_i - alone_j, "interaction", context)


def self_interaction(oracle: CachedOracle, context: PlayerSet, i: int, limit: int = EXACT_LIMIT) -> AttributionScore:
    """Interaction of a player with itself.

    The merged "pair" is ``i`` alone and each individual term is again
    ``phi(i | context)``, so the result is ``phi - 2 * phi = -phi(i | context)``.
    """
    phi = exact_shapley(oracle, context, i, limit)
    return AttributionScore((i, i), -phi.value, "interaction", phi.context)


def deletion_shapley(oracle: CachedOracle, context: PlayerSet, i: int, limit: int = EXACT_LIMIT) -> AttributionScore:
    """Average drop in reward when ``i`` is removed from coalitions containing it."""
    context = as_player_set(oracle.n, context)
    _require_member(context, i)
    players, table = context_table(oracle, context, limit)
    m = len(players)
    value = kernels.deletion_marginal_sum(table, (1 << m) - 1, players.index(i), deletion_weights(m))
    return AttributionScore(i, value, "deletion_shapley", context)


def _mc_orderings(players: list[int], cfg: SamplingConfig) -> list[tuple[int, ...]]:
    if cfg.exhaustive:
        if len(players) > EXHAUSTIVE_LIMIT:
            raise EnumerationLimitError(
                f"exhaustive permutation mode is capped at {EXHAUSTIVE_LIMIT} players, context has {len(players)}"
            )
        return list(itertools.permutations(players))
    rng = cfg.generator()
    arr = np.asarray(players, dtype=np.int64)
    return [tuple(int(p) for p in rng.permutation(arr)) for _ in range(cfg.sample_size)]


def _mean_and_se(marginals: np.ndarray) -> tuple[float, float]:
    k = marginals.size
    mean = float(marginals.mean())
    se = float(marginals.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    return mean, se


def mc_shapley(oracle: CachedOracle, context: PlayerSet, i: int, cfg: SamplingConfig = SamplingConfig(),
               workers: int | None = None) -> AttributionScore:
    """Permutation-sampling estimate of ``phi(i | context)``.

    All orderings are drawn up front from one seeded stream, so the estimate
    does not depend on how evaluation is scheduled.
    """
    context = as_player_set(oracle.n, context)
    _require_member(context, i)
    orderings = _mc_orderings(list(context), cfg)
    without, with_i = [], []
    bit = 1 << i
    for order in orderings:
        pred = 0
        for p in order:
            if p == i:
                break
            pred |= 1 << p
        without.append(pred)
        with_i.append(pred | bit)
    vals = oracle.evaluate_bits(with_i + without, workers)
    k = len(orderings)
    marginals = vals[:k] - vals[k:]
    mean, se = _mean_and_se(marginals)
    return AttributionScore(i, mean, "shapley", context, std_error=se, samples=k)


def mc_shapley_all(oracle: CachedOracle, context: PlayerSet | None = None, cfg: SamplingConfig = SamplingConfig(),
                   workers: int | None = None) -> list[AttributionScore]:
    """Estimate every player's Shapley value; each ordering yields one marginal per player."""
    context = oracle.grand_set() if context is None else as_player_set(oracle.n, context)
    players = list(context)
    orderings = _mc_orderings(players, cfg)
    prefixes = []
    for order in orderings:
        bits = 0
        prefixes.append(bits)
        for p in order:
            bits |= 1 << p
            prefixes.append(bits)
    vals = oracle.evaluate_bits(prefixes, workers).reshape(len(orderings), len(players) + 1)
    pos = {p: k for k, p in enumerate(players)}
    marg = np.empty((len(orderings), len(players)))
    for r, order in enumerate(orderings):
        steps = np.diff(vals[r])
        for k, p in enumerate(order):
            marg[r, pos[p]] = steps[k]
    out = []
    for p in players:
        mean, se = _mean_and_se(marg[:, pos[p]])
        out.append(AttributionScore(p, mean, "shapley", context, std_error=se, samples=len(orderings)))
    return out


def self_context_shapley(oracle: CachedOracle, a: int) -> AttributionScore:
    """Shapley value of ``a`` when it is the only player: ``f({a}) - f(empty)``."""
    empty = PlayerSet.empty(oracle.n)
    single = empty.with_player(a)
    value = oracle.evaluate(single) - oracle.evaluate(empty)
    return AttributionScore(a, value, "self_context_shapley", single)


def self_context_interaction(oracle: CachedOracle, s: PlayerSet, b: int) -> AttributionScore:
    """Interaction between the merged group ``s`` and player ``b`` in the context ``{s, b}``.

    Equals ``f(s + b) - f(s) - f({b}) + f(empty)``.
    """
    s = as_player_set(oracle.n, s)
    if b in s:
        raise ContractViolation(f"player {b} already belongs to the group")
    empty = PlayerSet.empty(oracle.n)
    joined = s.with_player(b)
    vals = oracle.evaluate_batch([joined, s, empty.with_player(b), empty])
    value = vals[0] - vals[1] - vals[2] + vals[3]
    return AttributionScore(tuple(s) + (b,), value, "self_context_interaction", joined)


def _as_group(n: int, a: int | PlayerSet) -> PlayerSet:
    return a if isinstance(a, PlayerSet) else PlayerSet(n, [a])


def full_context_deletion_shapley(oracle: CachedOracle, a: int | PlayerSet,
                                  context: PlayerSet | None = None) -> AttributionScore:
    """Deletion Shapley value of ``a`` restricted to the single coalition ``context``.

    ``a`` may be a merged group.  The scale is one over the number of players
    in the context once the group counts as a single player, so for a lone
    player in the grand set it is ``1 / |N|``.
    """
    n = oracle.n
    context = oracle.grand_set() if context is None else as_player_set(n, context)
    group = _as_group(n, a)
    if not group or not group.issubset(context):
        raise ContractViolation(f"group {sorted(group)} must be a non-empty subset of the context")
    raw = oracle.evaluate(context) - oracle.evaluate(context - group)
    players = len(context) - len(group) + 1
    tag = a if isinstance(a, int) else tuple(group)
    return AttributionScore(tag, raw / players, "full_context_deletion_shapley", context, raw=raw)


def full_context_deletion_interaction(oracle: CachedOracle, s: PlayerSet, b: int) -> AttributionScore:
    """Interaction between the group ``s`` and player ``b`` when both are deleted from the grand set.

    ``(f(N) - f(N - s) - f(N - b) + f(N - s - b)) / (|N| - |s|)``.
    """
    n = oracle.n
    s = as_player_set(n, s)
    if b in s:
        raise ContractViolation(f"player {b} already belongs to the group")
    grand = oracle.grand_set()
    nb = grand.without_player(b)
    vals = oracle.evaluate_batch([grand, grand - s, nb, nb - s])
    raw = vals[0] - vals[1] - vals[2] + vals[3]
    return AttributionScore(tuple(s) + (b,), raw / (n - len(s)), "full_context_deletion_interaction", grand, raw=raw)

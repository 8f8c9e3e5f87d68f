"""Coalitions, the reward-oracle contract, and call accounting.

Every algorithm in the package talks to a set function through a
:class:`CachedOracle`, which memoizes values and counts how many times the
wrapped function was actually evaluated.  Players are 0-indexed.
"""

from __future__ import annotations

import abc
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Iterator, Sequence

import numpy as np


class ContractViolation(ValueError):
    """Raised when an argument breaks an operation's preconditions."""


class PlayerSet:
    """Immutable coalition over ``n`` players, stored as an integer bitmask.

    Bit ``i`` is set iff player ``i`` is present.  Python integers have no
    fixed width, so grids larger than 64 players (e.g. 14x14 patches) use the
    same code path as small games.
    """

    __slots__ = ("n", "bits")

    def __init__(self, n: int, players: Iterable[int] = ()) -> None:
        if n < 1:
            raise ContractViolation(f"player count must be >= 1, got {n}")
        bits = 0
        for p in players:
            p = int(p)
            if not 0 <= p < n:
                raise ContractViolation(f"player index {p} out of range [0, {n})")
            bits |= 1 << p
        self.n = n
        self.bits = bits

    @classmethod
    def from_bits(cls, n: int, bits: int) -> "PlayerSet":
        if bits < 0 or bits >> n:
            raise ContractViolation(f"bitmask {bits:#x} has bits outside [0, {n})")
        return cls._raw(n, bits)

    @classmethod
    def _raw(cls, n: int, bits: int) -> "PlayerSet":
        obj = object.__new__(cls)
        obj.n = n
        obj.bits = bits
        return obj

    @classmethod
    def empty(cls, n: int) -> "PlayerSet":
        return cls._raw(n, 0)

    @classmethod
    def full(cls, n: int) -> "PlayerSet":
        return cls._raw(n, (1 << n) - 1)

    def __contains__(self, i: object) -> bool:
        if not isinstance(i, (int, np.integer)):
            return False
        i = int(i)
        return 0 <= i < self.n and bool(self.bits >> i & 1)

    def __iter__(self) -> Iterator[int]:
        bits = self.bits
        while bits:
            low = bits & -bits
            yield low.bit_length() - 1
            bits ^= low

    def __len__(self) -> int:
        return self.bits.bit_count()

    def cardinality(self) -> int:
        return self.bits.bit_count()

    def __bool__(self) -> bool:
        return self.bits != 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PlayerSet):
            return NotImplemented
        return self.n == other.n and self.bits == other.bits

    def __hash__(self) -> int:
        return hash((self.n, self.bits))

    def __repr__(self) -> str:
        return f"PlayerSet(n={self.n}, {sorted(self)})"

    def _check(self, other: "PlayerSet") -> None:
        if self.n != other.n:
            raise ContractViolation(f"player counts differ: {self.n} vs {other.n}")

    def __or__(self, other: "PlayerSet") -> "PlayerSet":
        self._check(other)
        return PlayerSet._raw(self.n, self.bits | other.bits)

    def __and__(self, other: "PlayerSet") -> "PlayerSet":
        self._check(other)
        return PlayerSet._raw(self.n, self.bits & other.bits)

    def __sub__(self, other: "PlayerSet") -> "PlayerSet":
        self._check(other)
        return PlayerSet._raw(self.n, self.bits & ~other.bits)

    union = __or__
    intersection = __and__
    difference = __sub__

    def complement(self) -> "PlayerSet":
        return PlayerSet._raw(self.n, ~self.bits & ((1 << self.n) - 1))

    def issubset(self, other: "PlayerSet") -> bool:
        self._check(other)
        return self.bits & ~other.bits == 0

    def _index(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self.n:
            raise ContractViolation(f"player index {i} out of range [0, {self.n})")
        return i

    def with_player(self, i: int) -> "PlayerSet":
        return PlayerSet._raw(self.n, self.bits | 1 << self._index(i))

    def without_player(self, i: int) -> "PlayerSet":
        return PlayerSet._raw(self.n, self.bits & ~(1 << self._index(i)))

    def to_list(self) -> list[int]:
        return list(self)


def as_player_set(n: int, s: PlayerSet | Iterable[int]) -> PlayerSet:
    """Coerce ``s`` to a :class:`PlayerSet` over ``n`` players."""
    if isinstance(s, PlayerSet):
        if s.n != n:
            raise ContractViolation(f"coalition is over {s.n} players, oracle has {n}")
        return s
    return PlayerSet(n, s)


class RewardOracle(abc.ABC):
    """Deterministic set function ``f: 2^N -> R``.

    Subclasses implement :meth:`value`.  Oracles that can evaluate many
    coalitions at once (e.g. one batched forward pass of a model) should
    override :meth:`value_batch`.
    """

    name: str = "oracle"

    def __init__(self, n: int) -> None:
        if n < 1:
            raise ContractViolation(f"player count must be >= 1, got {n}")
        self.n = n

    @abc.abstractmethod
    def value(self, s: PlayerSet) -> float:
        """Return ``f(s)``."""

    def value_batch(self, sets: Sequence[PlayerSet]) -> list[float]:
        return [self.value(s) for s in sets]

    def grand_set(self) -> PlayerSet:
        return PlayerSet.full(self.n)


class ClassifyingOracle(RewardOracle):
    """Oracle whose coalitions can also be classified.

    Stopping rules ask whether the prediction on a coalition matches
    :attr:`label`, and how confident that prediction is.
    """

    label: int

    @abc.abstractmethod
    def predict(self, s: PlayerSet) -> int:
        """Predicted label of the input restricted to ``s``."""

    def confidence(self, s: PlayerSet) -> float:
        """Confidence of :attr:`label` on ``s``; 1.0 for hard predictors."""
        return 1.0


class TableGame(RewardOracle):
    """Game given by an explicit value for every coalition.

    ``table[bits]`` is ``f`` of the coalition with bitmask ``bits``.
    """

    name = "table"

    def __init__(self, table: Sequence[float], name: str | None = None) -> None:
        table = np.asarray(table, dtype=np.float64)
        n = int(table.size).bit_length() - 1
        if table.ndim != 1 or table.size != 1 << n:
            raise ContractViolation("table length must be a power of two")
        if not np.all(np.isfinite(table)):
            raise ContractViolation("table values must be finite")
        super().__init__(n)
        self.table = table
        if name is not None:
            self.name = name

    @classmethod
    def from_function(cls, n: int, fn, name: str | None = None) -> "TableGame":
        """Tabulate ``fn(PlayerSet)`` over all ``2**n`` coalitions."""
        return cls([fn(PlayerSet._raw(n, b)) for b in range(1 << n)], name=name)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, scale: float = 1.0) -> "TableGame":
        return cls(rng.normal(scale=scale, size=1 << n), name=f"random{n}")

    def value(self, s: PlayerSet) -> float:
        return float(self.table[s.bits])


class AdditiveGame(RewardOracle):
    """``f(S) = sum of weights of players in S``."""

    name = "additive"

    def __init__(self, weights: Sequence[float]) -> None:
        super().__init__(len(weights))
        self.weights = [float(w) for w in weights]

    def value(self, s: PlayerSet) -> float:
        return float(sum(self.weights[i] for i in s))


class CachedOracle:
    """Memoizing wrapper that counts evaluations of the inner oracle.

    Parameters
    ----------
    inner
        The wrapped set function.
    capacity
        Optional LRU bound on the number of cached coalitions.  Evicted
        entries are re-evaluated (and re-counted) on the next request.
    workers
        Default thread count for :meth:`evaluate_batch`.
    """

    def __init__(self, inner: RewardOracle, capacity: int | None = None, workers: int = 1) -> None:
        if capacity is not None and capacity < 1:
            raise ContractViolation("capacity must be positive")
        self.inner = inner
        self.n = inner.n
        self.capacity = capacity
        self.workers = max(1, int(workers))
        self._cache: OrderedDict[int, float] = OrderedDict()
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def name(self) -> str:
        return self.inner.name

    def grand_set(self) -> PlayerSet:
        return self.inner.grand_set()

    def call_count(self) -> int:
        """Number of inner evaluations performed since construction."""
        return self._calls

    def _lookup(self, bits: int) -> float | None:
        with self._lock:
            v = self._cache.get(bits)
            if v is not None and self.capacity is not None:
                self._cache.move_to_end(bits)
            return v

    def _store(self, bits: int, v: float) -> None:
        with self._lock:
            self._cache[bits] = v
            if self.capacity is not None:
                self._cache.move_to_end(bits)
                while len(self._cache) > self.capacity:
                    self._cache.popitem(last=False)

    def _count(self, k: int) -> None:
        with self._lock:
            self._calls += k

    def _inner_batch(self, sets: list[PlayerSet], workers: int) -> list[float]:
        if workers <= 1 or len(sets) < 2 * workers:
            out = self.inner.value_batch(sets)
        else:
            chunk = -(-len(sets) // workers)
            parts = [sets[i:i + chunk] for i in range(0, len(sets), chunk)]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                out = [v for part in pool.map(self.inner.value_batch, parts) for v in part]
        vals = [float(v) for v in out]
        for s, v in zip(sets, vals):
            if not np.isfinite(v):
                raise ContractViolation(f"oracle {self.name!r} returned non-finite value for {s}")
        return vals

    def evaluate(self, s: PlayerSet | Iterable[int]) -> float:
        """Return ``f(s)``, evaluating the inner oracle only on a cache miss."""
        s = as_player_set(self.n, s)
        v = self._lookup(s.bits)
        if v is not None:
            return v
        v = self._inner_batch([s], 1)[0]
        self._count(1)
        self._store(s.bits, v)
        return v

    __call__ = evaluate

    def evaluate_batch(self, sets: Sequence[PlayerSet | Iterable[int]], workers: int | None = None) -> list[float]:
        """Evaluate many coalitions; element ``i`` equals ``evaluate(sets[i])``.

        Every input is validated before anything is evaluated, so the first
        invalid entry (lowest index) is always the one reported.  Duplicate
        uncached coalitions are evaluated once.
        """
        checked = [as_player_set(self.n, s) for s in sets]
        return self._evaluate_checked(checked, workers)

    def _evaluate_checked(self, checked: Sequence[PlayerSet], workers: int | None = None) -> list[float]:
        out: list[float | None] = [None] * len(checked)
        missing: dict[int, PlayerSet] = {}
        for k, s in enumerate(checked):
            v = self._lookup(s.bits)
            if v is None:
                missing.setdefault(s.bits, s)
            else:
                out[k] = v
        if missing:
            todo = list(missing.values())
            vals = self._inner_batch(todo, self.workers if workers is None else max(1, workers))
            self._count(len(todo))
            fresh = dict(zip(missing, vals))
            for bits, v in fresh.items():
                self._store(bits, v)
            for k, s in enumerate(checked):
                if out[k] is None:
                    out[k] = fresh[s.bits]
        return out  # type: ignore[return-value]

    def evaluate_bits(self, bits_list: Sequence[int], workers: int | None = None) -> np.ndarray:
        """Evaluate coalitions given as raw bitmasks; used by enumeration loops."""
        n = self.n
        top = 1 << n
        for b in bits_list:
            if b < 0 or b >= top:
                raise ContractViolation(f"bitmask {b:#x} has bits outside [0, {n})")
        sets = [PlayerSet._raw(n, b) for b in bits_list]
        return np.asarray(self._evaluate_checked(sets, workers), dtype=np.float64)

    # Classification passthrough; predictions come from the same forward pass
    # as the reward, so they are not counted separately.
    @property
    def classifies(self) -> bool:
        return isinstance(self.inner, ClassifyingOracle)

    @property
    def label(self) -> int:
        return self._classifier().label

    def _classifier(self) -> ClassifyingOracle:
        if not isinstance(self.inner, ClassifyingOracle):
            raise ContractViolation(f"oracle {self.name!r} does not expose predictions")
        return self.inner

    def predict(self, s: PlayerSet) -> int:
        return self._classifier().predict(as_player_set(self.n, s))

    def confidence(self, s: PlayerSet) -> float:
        return self._classifier().confidence(as_player_set(self.n, s))


def cached(oracle: RewardOracle | CachedOracle, **kwargs) -> CachedOracle:
    """Wrap ``oracle`` in a :class:`CachedOracle` unless it already is one."""
    return oracle if isinstance(oracle, CachedOracle) else CachedOracle(oracle, **kwargs)

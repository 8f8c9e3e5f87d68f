"""Greedy insertion/deletion (MoXI) and the static ranking baselines.

Greedy insertion grows a coalition one player at a time, always adding the
player that maximizes the reward.  That marginal gain splits exactly into a
self-context Shapley value plus the self-context interaction with the
players already chosen, which is what separates it from ranking players by
their individual contributions.  Greedy deletion is the mirror image on the
complement, scored with full-context deletion quantities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from moxi.game import CachedOracle, ClassifyingOracle, ContractViolation, PlayerSet, RewardOracle, cached
from moxi.shapley import (
    EXACT_LIMIT,
    SamplingConfig,
    exact_shapley_all,
    full_context_deletion_interaction,
    full_context_deletion_shapley,
    mc_shapley_all,
    self_context_interaction,
    self_context_shapley,
)

DIRECTIONS = ("insertion", "deletion")
STOP_MODES = ("full", "on_correct", "on_incorrect", "threshold")


class OracleError(RuntimeError):
    """An oracle evaluation failed during a greedy step."""

    def __init__(self, step: int, cause: BaseException):
        super().__init__(f"oracle failed at step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class StoppingRule:
    """When a greedy run or ranking walk ends early.

    The rule is checked on the coalition that is still *present* after each
    step (``S_k`` for insertion, ``N - S_k`` for deletion).  ``threshold``
    requires a correct prediction with confidence at least ``tau``; during
    deletion it stops as soon as that no longer holds.
    """

    mode: str = "full"
    tau: float = 0.0

    def __post_init__(self):
        if self.mode not in STOP_MODES:
            raise ValueError(f"unknown stopping mode {self.mode!r}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")

    def should_stop(self, oracle: CachedOracle, present: PlayerSet, direction: str) -> bool:
        if self.mode == "full":
            return False
        correct = oracle.predict(present) == oracle.label
        if self.mode == "on_correct":
            return correct
        if self.mode == "on_incorrect":
            return not correct
        confident = correct and oracle.confidence(present) >= self.tau
        return confident if direction == "insertion" else not confident

    @classmethod
    def default_for(cls, direction: str) -> "StoppingRule":
        return cls("on_correct" if direction == "insertion" else "on_incorrect")


FULL = StoppingRule()


@dataclass(frozen=True)
class SelectionTrace:
    """Ordered picks of a greedy run or ranking, with per-step bookkeeping.

    ``step_rewards[k]`` is the reward of the coalition present after step
    ``k``.  ``oracle_calls[k]`` is the cumulative number of distinct oracle
    evaluations after step ``k``.
    """

    direction: str
    method: str
    n: int
    order: tuple[int, ...]
    step_scores: tuple[float, ...]
    step_rewards: tuple[float, ...]
    oracle_calls: tuple[int, ...]
    step_predictions: tuple[int, ...] | None = None
    initial_reward: float | None = None
    stop_reason: str = "exhausted"
    grid: tuple[int, int] | None = None
    start: tuple[int, ...] = ()

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if len(set(self.order)) != len(self.order):
            raise ValueError("trace order contains duplicates")
        if len(self.order) > self.n:
            raise ValueError("trace is longer than the player count")
        k = len(self.order)
        if not len(self.step_scores) == len(self.step_rewards) == len(self.oracle_calls) == k:
            raise ValueError("per-step fields must match the order length")
        if self.step_predictions is not None and len(self.step_predictions) != k:
            raise ValueError("step_predictions must match the order length")
        if any(b < a for a, b in zip(self.oracle_calls, self.oracle_calls[1:])):
            raise ValueError("oracle_calls must be non-decreasing")

    def __len__(self) -> int:
        return len(self.order)

    def selected(self, k: int | None = None) -> PlayerSet:
        """Players picked in the first ``k`` steps (all steps by default)."""
        order = self.order if k is None else self.order[:k]
        return PlayerSet(self.n, order)

    def with_grid(self, grid: tuple[int, int] | None) -> "SelectionTrace":
        from dataclasses import replace

        return replace(self, grid=None if grid is None else (int(grid[0]), int(grid[1])))

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "method": self.method,
            "n": self.n,
            "grid": None if self.grid is None else list(self.grid),
            "start": list(self.start),
            "order": list(self.order),
            "step_scores": list(self.step_scores),
            "step_rewards": list(self.step_rewards),
            "step_predictions": None if self.step_predictions is None else list(self.step_predictions),
            "oracle_calls": list(self.oracle_calls),
            "initial_reward": self.initial_reward,
            "stop_reason": self.stop_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionTrace":
        preds = d.get("step_predictions")
        grid = d.get("grid")
        return cls(
            direction=d["direction"],
            method=d["method"],
            n=int(d["n"]),
            order=tuple(int(p) for p in d["order"]),
            step_scores=tuple(float(v) for v in d["step_scores"]),
            step_rewards=tuple(float(v) for v in d["step_rewards"]),
            oracle_calls=tuple(int(c) for c in d["oracle_calls"]),
            step_predictions=None if preds is None else tuple(int(p) for p in preds),
            initial_reward=d.get("initial_reward"),
            stop_reason=d.get("stop_reason", "exhausted"),
            grid=None if grid is None else (int(grid[0]), int(grid[1])),
            start=tuple(int(p) for p in d.get("start", ())),
        )


class _TraceBuilder:
    def __init__(self, oracle: CachedOracle, direction: str, method: str, stop: StoppingRule, start: PlayerSet):
        if stop.mode != "full" and not oracle.classifies:
            raise ContractViolation(f"stopping mode {stop.mode!r} needs an oracle that exposes predictions")
        self.oracle = oracle
        self.direction = direction
        self.method = method
        self.stop = stop
        self.start = start
        self.order: list[int] = []
        self.scores: list[float] = []
        self.rewards: list[float] = []
        self.calls: list[int] = []
        self.preds: list[int] | None = [] if oracle.classifies else None
        self.initial: float | None = None
        self.reason = "exhausted"

    def present(self, chosen: PlayerSet) -> PlayerSet:
        return chosen if self.direction == "insertion" else chosen.complement()

    def record(self, b: int, score: float, reward: float, chosen: PlayerSet) -> bool:
        """Append a step; return True when the stopping rule fires."""
        self.order.append(b)
        self.scores.append(float(score))
        self.rewards.append(float(reward))
        present = self.present(chosen)
        if self.preds is not None:
            self.preds.append(int(self.oracle.predict(present)))
        self.calls.append(self.oracle.call_count())
        if self.stop.should_stop(self.oracle, present, self.direction):
            self.reason = "stop_rule"
            return True
        return False

    def build(self) -> SelectionTrace:
        return SelectionTrace(
            direction=self.direction,
            method=self.method,
            n=self.oracle.n,
            order=tuple(self.order),
            step_scores=tuple(self.scores),
            step_rewards=tuple(self.rewards),
            oracle_calls=tuple(self.calls),
            step_predictions=None if self.preds is None else tuple(self.preds),
            initial_reward=self.initial,
            stop_reason=self.reason,
            start=tuple(self.start),
        )


def _first_best(values: Sequence[float], maximize: bool) -> int:
    """Index of the best value; ties go to the earliest index."""
    best = 0
    for k in range(1, len(values)):
        if (values[k] > values[best]) if maximize else (values[k] < values[best]):
            best = k
    return best


def insertion_decomposition(oracle: CachedOracle, s: PlayerSet, b: int) -> tuple[float, float]:
    """Self-context Shapley value of ``b`` and its self-context interaction with ``s``.

    Their sum is the marginal gain ``f(s + b) - f(s)``.
    """
    return self_context_shapley(oracle, b).value, self_context_interaction(oracle, s, b).value


def deletion_decomposition(oracle: CachedOracle, s: PlayerSet, b: int) -> tuple[float, float, float]:
    """Full-context deletion terms for removing ``b`` after the group ``s``.

    Returns the deletion Shapley value of ``b`` in ``N - s``, that of the
    merged group ``s`` in ``N - b``, and their full-context interaction, all
    scaled by ``1 / (|N| - |s|)``.  Their sum is
    ``(f(N) - f(N - s - b)) / (|N| - |s|)``.
    """
    grand = oracle.grand_set()
    if not s:
        return full_context_deletion_shapley(oracle, b).value, 0.0, 0.0
    lone = full_context_deletion_shapley(oracle, b, context=grand - s).value
    group = full_context_deletion_shapley(oracle, s, context=grand.without_player(b)).value
    inter = full_context_deletion_interaction(oracle, s, b).value
    return lone, group, inter


def greedy_insertion(oracle: RewardOracle | CachedOracle, stop: StoppingRule = FULL,
                     start: PlayerSet | None = None, workers: int | None = None) -> SelectionTrace:
    """Grow a coalition by repeatedly adding the player with the largest reward.

    Each step evaluates every remaining candidate in one batch.  The
    recorded score is the self-context Shapley value plus self-context
    interaction of the winner, which equals its marginal gain.
    """
    oracle = cached(oracle)
    n = oracle.n
    chosen = PlayerSet.empty(n) if start is None else start
    tb = _TraceBuilder(oracle, "insertion", "moxi", stop, chosen)
    step = 0
    try:
        tb.initial = oracle.evaluate(chosen)
        while len(chosen) < n:
            step += 1
            candidates = [p for p in range(n) if p not in chosen]
            vals = oracle.evaluate_batch([chosen.with_player(p) for p in candidates], workers)
            k = _first_best(vals, maximize=True)
            b = candidates[k]
            phi0, inter0 = insertion_decomposition(oracle, chosen, b)
            chosen = chosen.with_player(b)
            if tb.record(b, phi0 + inter0, vals[k], chosen):
                break
    except (OracleError, ContractViolation):
        raise
    except Exception as exc:
        raise OracleError(step, exc) from exc
    return tb.build()


def greedy_deletion(oracle: RewardOracle | CachedOracle, stop: StoppingRule = FULL,
                    start: PlayerSet | None = None, workers: int | None = None,
                    method: str = "moxi") -> SelectionTrace:
    """Shrink the grand coalition by repeatedly removing the player whose removal lowers the reward most.

    ``start`` lists players already removed.  The recorded score is the sum
    of the full-context deletion terms from :func:`deletion_decomposition`.
    """
    oracle = cached(oracle)
    n = oracle.n
    grand = oracle.grand_set()
    removed = PlayerSet.empty(n) if start is None else start
    tb = _TraceBuilder(oracle, "deletion", method, stop, removed)
    step = 0
    try:
        oracle.evaluate(grand)
        tb.initial = oracle.evaluate(grand - removed)
        while len(removed) < n:
            step += 1
            candidates = [p for p in range(n) if p not in removed]
            vals = oracle.evaluate_batch([grand - removed.with_player(p) for p in candidates], workers)
            k = _first_best(vals, maximize=False)
            b = candidates[k]
            score = sum(deletion_decomposition(oracle, removed, b))
            removed = removed.with_player(b)
            if tb.record(b, score, vals[k], removed):
                break
    except (OracleError, ContractViolation):
        raise
    except Exception as exc:
        raise OracleError(step, exc) from exc
    return tb.build()


def rank_order(scores: Sequence[float]) -> list[int]:
    """Players by descending score, lowest index first among ties.

    Scores are compared after rounding to 9 decimals so that values equal up
    to floating-point noise count as ties.
    """
    return sorted(range(len(scores)), key=lambda p: (-round(float(scores[p]), 9), p))


def walk_ranking(oracle: RewardOracle | CachedOracle, order: Sequence[int], scores: Sequence[float],
                 method: str, direction: str = "insertion", stop: StoppingRule = FULL) -> SelectionTrace:
    """Turn a static player order into a trace by inserting (or deleting) along it."""
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    oracle = cached(oracle)
    n = oracle.n
    chosen = PlayerSet.empty(n)
    tb = _TraceBuilder(oracle, direction, method, stop, chosen)
    tb.initial = oracle.evaluate(tb.present(chosen))
    for b in order:
        chosen = chosen.with_player(b)
        if tb.record(b, scores[b], oracle.evaluate(tb.present(chosen)), chosen):
            break
    return tb.build()


def moxi_minus_ranking(oracle: RewardOracle | CachedOracle, direction: str = "insertion",
                       stop: StoppingRule = FULL) -> SelectionTrace:
    """Rank players by self-context Shapley value alone, ignoring interactions."""
    oracle = cached(oracle)
    scores = [self_context_shapley(oracle, b).value for b in range(oracle.n)]
    return walk_ranking(oracle, rank_order(scores), scores, "moxi-minus", direction, stop)


def shapley_scores(oracle: CachedOracle, cfg: SamplingConfig | None = None, exact: bool | None = None,
                   workers: int | None = None) -> list[float]:
    """Shapley value of every player in the grand set, exact for small games."""
    if exact is None:
        exact = oracle.n <= EXACT_LIMIT
    if exact:
        return [sc.value for sc in exact_shapley_all(oracle)]
    return [sc.value for sc in mc_shapley_all(oracle, cfg=cfg or SamplingConfig(), workers=workers)]


def shapley_ranking(oracle: RewardOracle | CachedOracle, cfg: SamplingConfig | None = None,
                    direction: str = "insertion", stop: StoppingRule = FULL,
                    exact: bool | None = None) -> SelectionTrace:
    """Rank players by Shapley value in the grand set."""
    oracle = cached(oracle)
    scores = shapley_scores(oracle, cfg, exact)
    return walk_ranking(oracle, rank_order(scores), scores, "shapley", direction, stop)


def random_ranking(oracle: RewardOracle | CachedOracle, seed: int = 0, direction: str = "insertion",
                   stop: StoppingRule = FULL) -> SelectionTrace:
    """Uniformly random player order from a seeded generator."""
    oracle = cached(oracle)
    rng = np.random.Generator(np.random.PCG64(seed))
    order = [int(p) for p in rng.permutation(oracle.n)]
    scores = [0.0] * oracle.n
    for rank, p in enumerate(order):
        scores[p] = float(oracle.n - rank)
    return walk_ranking(oracle, order, scores, "random", direction, stop)


METHODS = ("moxi", "moxi-minus", "shapley", "random")


def run_method(oracle: RewardOracle | CachedOracle, method: str, direction: str, stop: StoppingRule = FULL,
               cfg: SamplingConfig | None = None, seed: int = 0, workers: int | None = None) -> SelectionTrace:
    """Dispatch by method name."""
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    if method == "moxi":
        fn = greedy_insertion if direction == "insertion" else greedy_deletion
        return fn(oracle, stop, workers=workers)
    if method == "moxi-minus":
        return moxi_minus_ranking(oracle, direction, stop)
    if method == "shapley":
        return shapley_ranking(oracle, cfg, direction, stop)
    if method == "random":
        return random_ranking(oracle, seed, direction, stop)
    raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


# Class-discriminative deletion ------------------------------------------

EPS = 1e-7


def _logodds(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, EPS, 1.0 - EPS)
    return np.log(p / (1.0 - p))


def _odds(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, EPS, 1.0 - EPS)
    return p / (1.0 - p)


@dataclass(frozen=True)
class TargetClassConfig:
    """Target of class-discriminative deletion.

    With ``use_log_on_second_term=False`` the target-class term of the
    switched reward is the raw odds rather than the log-odds.
    """

    target_label: int
    use_log_on_second_term: bool = True


class _ConfidenceReward(ClassifyingOracle):
    """Reward computed from a classifier's confidences for a fixed label."""

    def __init__(self, source, label: int, reward: Callable[[np.ndarray], np.ndarray], name: str):
        super().__init__(source.n)
        self.source = source
        self.label = label
        self.reward = reward
        self.name = name

    def value(self, s: PlayerSet) -> float:
        return float(self.reward(self.source.confidences_batch([s]))[0])

    def value_batch(self, sets):
        return [float(v) for v in self.reward(self.source.confidences_batch(sets))]

    def predict(self, s: PlayerSet) -> int:
        return int(np.argmax(self.source.confidences(s)))

    def confidence(self, s: PlayerSet) -> float:
        return float(self.source.confidences(s)[self.label])


@dataclass(frozen=True)
class ClassDiscriminativeResult:
    """Both phases of a class-discriminative deletion.

    ``phase2`` is ``None`` when the target class never became the
    prediction (``exhausted``).
    """

    phase1: SelectionTrace
    phase2: SelectionTrace | None
    exhausted: bool
    initial_prediction: int
    target_label: int

    def __iter__(self):
        return iter((self.phase1, self.phase2))


def class_discriminative_deletion(source, cfg: TargetClassConfig, stop: StoppingRule | None = None,
                                  workers: int | None = None) -> ClassDiscriminativeResult:
    """Find patches supporting a chosen target class.

    ``source`` must provide ``confidences(s)`` and ``confidences_batch(sets)``
    (e.g. :class:`moxi.tasks.ClassifierOracle`).  Phase 1 deletes patches that
    support the model's initial prediction and oppose the target, until the
    target is predicted.  Phase 2 then greedily deletes patches supporting
    the target until the prediction changes.
    """
    if isinstance(source, CachedOracle):
        source = source.inner
    n = source.n
    grand = PlayerSet.full(n)
    conf = source.confidences(grand)
    if not 0 <= cfg.target_label < conf.size:
        raise ContractViolation(f"target label {cfg.target_label} outside [0, {conf.size})")
    predicted = int(np.argmax(conf))
    target = cfg.target_label
    second = _logodds if cfg.use_log_on_second_term else _odds

    def switched(c: np.ndarray) -> np.ndarray:
        c = np.atleast_2d(c)
        return _logodds(c[:, predicted]) - second(c[:, target])

    def target_reward(c: np.ndarray) -> np.ndarray:
        return _logodds(np.atleast_2d(c)[:, target])

    phase1_oracle = CachedOracle(_ConfidenceReward(source, target, switched, "switched-reward"))
    phase2_oracle = CachedOracle(_ConfidenceReward(source, target, target_reward, "target-logodds"))
    if predicted == target:
        phase1 = _TraceBuilder(phase1_oracle, "deletion", "moxi", FULL, PlayerSet.empty(n))
        phase1.initial = phase1_oracle.evaluate(grand)
        phase1 = phase1.build()
    else:
        phase1 = greedy_deletion(phase1_oracle, StoppingRule("on_correct"), workers=workers)
        if phase1.stop_reason != "stop_rule":
            return ClassDiscriminativeResult(phase1, None, True, predicted, target)
    removed = phase1.selected()
    phase2 = greedy_deletion(phase2_oracle, stop or StoppingRule("on_incorrect"), start=removed, workers=workers)
    return ClassDiscriminativeResult(phase1, phase2, False, predicted, target)

"""Insertion, deletion, and corruption curves over a dataset.

A curve sweeps ``k = 0..n`` patches along a method's ordering and records the
fraction of instances whose prediction is still (or already) correct.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TextIO, Union

import numpy as np

from moxi.game import CachedOracle, ClassifyingOracle, ContractViolation, PlayerSet
from moxi.greedy import FULL, run_method
from moxi.shapley import SamplingConfig
from moxi.tasks import (
    ClassifierOracle,
    CorruptionSpec,
    PatchClassifierModel,
    PatchGridInstance,
    SetSumGame,
    SetSumOracle,
    apply_corruption,
)

CURVE_HEADER = ("method", "direction", "fraction", "accuracy", "n")

Instance = Union[SetSumGame, PatchGridInstance]
OracleFactory = Callable[[Instance], ClassifyingOracle]
Ordering = Union[str, Callable[[CachedOracle, str], Sequence[int]]]


class PreconditionError(ContractViolation):
    """Some instances are not classified correctly with every patch visible."""

    def __init__(self, ids: list[str]):
        super().__init__(f"instances misclassified at full coalition: {', '.join(ids)}")
        self.ids = ids


@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    accuracy: float
    n_evaluated: int


@dataclass(frozen=True)
class CurveResult:
    """Accuracy against the fraction of patches inserted, deleted, or corrupted.

    ``correct[i, k]`` tells whether instance ``i`` was classified correctly
    after ``k`` steps.
    """

    method: str
    direction: str
    points: tuple[CurvePoint, ...]
    auc: float
    correct: np.ndarray = field(repr=False, compare=False, default=None)

    def accuracy_at(self, fraction: float) -> float:
        for p in self.points:
            if abs(p.fraction - fraction) < 1e-12:
                return p.accuracy
        raise KeyError(f"no point at fraction {fraction}")

    @property
    def fractions(self) -> np.ndarray:
        return np.array([p.fraction for p in self.points])

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([p.accuracy for p in self.points])


def trapezoid_auc(fractions: Sequence[float], accuracies: Sequence[float]) -> float:
    x = np.asarray(fractions, dtype=np.float64)
    y = np.asarray(accuracies, dtype=np.float64)
    if x.size < 2:
        return 0.0
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def setsum_factory(game: SetSumGame) -> SetSumOracle:
    return SetSumOracle(game)


def classifier_factory(model: PatchClassifierModel) -> OracleFactory:
    def make(inst: PatchGridInstance) -> ClassifierOracle:
        return ClassifierOracle(model, inst)

    return make


def default_factory(dataset: Sequence[Instance], model: PatchClassifierModel | None = None) -> OracleFactory:
    if all(isinstance(x, SetSumGame) for x in dataset):
        return setsum_factory
    if model is None:
        raise ContractViolation("patch-grid datasets need a model")
    return classifier_factory(model)


def method_name(method: Ordering) -> str:
    return method if isinstance(method, str) else getattr(method, "__name__", "custom")


def ordering_for(oracle: CachedOracle, method: Ordering, direction: str,
                 cfg: SamplingConfig | None = None, seed: int = 0) -> list[int]:
    if isinstance(method, str):
        return list(run_method(oracle, method, direction, FULL, cfg=cfg, seed=seed).order)
    order = [int(p) for p in method(oracle, direction)]
    if sorted(order) != list(range(oracle.n)):
        raise ContractViolation(f"ordering {method_name(method)!r} is not a permutation of the players")
    return order


def predictions(oracle: ClassifyingOracle, sets: Sequence[PlayerSet]) -> np.ndarray:
    """Predicted labels for many coalitions, batched when the oracle allows it."""
    if isinstance(oracle, ClassifierOracle):
        return np.argmax(oracle.confidences_batch(sets), axis=1)
    return np.array([oracle.predict(s) for s in sets])


def _prefix_sets(n: int, order: Sequence[int], insertion: bool) -> list[PlayerSet]:
    sets = []
    chosen = PlayerSet.empty(n)
    for k in range(n + 1):
        if k:
            chosen = chosen.with_player(order[k - 1])
        sets.append(chosen if insertion else chosen.complement())
    return sets


def _check_full(dataset: Sequence[Instance], factory: OracleFactory) -> list[ClassifyingOracle]:
    oracles = [factory(x) for x in dataset]
    if not oracles:
        raise ContractViolation("dataset is empty")
    sizes = {o.n for o in oracles}
    if len(sizes) != 1:
        raise ContractViolation(f"instances have different player counts: {sorted(sizes)}")
    bad = [str(x.id) for x, o in zip(dataset, oracles) if o.predict(o.grand_set()) != o.label]
    if bad:
        raise PreconditionError(bad)
    return oracles


def _map(fn, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _result(method: str, direction: str, correct: np.ndarray) -> CurveResult:
    count, steps = correct.shape
    n = steps - 1
    fractions = [k / n for k in range(steps)]
    acc = correct.mean(axis=0)
    points = tuple(CurvePoint(f, float(a), count) for f, a in zip(fractions, acc))
    return CurveResult(method, direction, points, trapezoid_auc(fractions, acc), correct)


def _sweep(dataset, factory, method, direction, cfg, seed, workers, corruption: CorruptionSpec | None = None):
    oracles = _check_full(dataset, factory)
    order_direction = "insertion" if direction == "insertion" else "deletion"

    def one(idx: int) -> np.ndarray:
        inner = oracles[idx]
        oracle = CachedOracle(inner)
        order = ordering_for(oracle, method, order_direction, cfg, seed)
        if corruption is None:
            preds = predictions(inner, _prefix_sets(inner.n, order, direction == "insertion"))
        else:
            inst = inner.instance
            model = inner.model
            stack = np.stack([apply_corruption(inst, order[:k], corruption).features for k in range(inner.n + 1)])
            full = np.ones(stack.shape[:2], dtype=bool)
            feats = np.where(full[..., None], stack, model.mask_fill)
            preds = np.argmax(model.confidences_from_features(feats), axis=1)
        return preds == inner.label

    correct = np.array(_map(one, list(range(len(oracles))), workers), dtype=bool)
    return _result(method_name(method), direction, correct)


def insertion_curve(dataset: Sequence[Instance], factory: OracleFactory, method: Ordering,
                    cfg: SamplingConfig | None = None, seed: int = 0, workers: int = 1) -> CurveResult:
    """Accuracy as patches are unmasked in the method's insertion order."""
    return _sweep(dataset, factory, method, "insertion", cfg, seed, workers)


def deletion_curve(dataset: Sequence[Instance], factory: OracleFactory, method: Ordering,
                   cfg: SamplingConfig | None = None, seed: int = 0, workers: int = 1) -> CurveResult:
    """Accuracy as patches are masked in the method's deletion order."""
    return _sweep(dataset, factory, method, "deletion", cfg, seed, workers)


def corruption_curve(dataset: Sequence[PatchGridInstance], factory: OracleFactory, method: Ordering,
                     spec: CorruptionSpec, cfg: SamplingConfig | None = None, seed: int = 0,
                     workers: int = 1) -> CurveResult:
    """Like :func:`deletion_curve`, but the deletion-order prefix is corrupted instead of masked."""
    if not all(isinstance(x, PatchGridInstance) for x in dataset):
        raise ContractViolation("corruption curves need patch-grid instances")
    return _sweep(dataset, factory, method, "corruption", cfg, seed, workers, corruption=spec)


def compare_orderings(dataset: Sequence[Instance], factory: OracleFactory, methods: Sequence[Ordering],
                      directions: Iterable[str] = ("insertion",), spec: CorruptionSpec | None = None,
                      cfg: SamplingConfig | None = None, seed: int = 0, workers: int = 1) -> list[CurveResult]:
    """Curves for several methods on identical instances and seeds, grouped by direction."""
    if len(methods) < 2:
        raise ContractViolation("comparison needs at least two methods")
    out = []
    for direction in directions:
        for m in methods:
            if direction == "insertion":
                out.append(insertion_curve(dataset, factory, m, cfg, seed, workers))
            elif direction == "deletion":
                out.append(deletion_curve(dataset, factory, m, cfg, seed, workers))
            elif direction == "corruption":
                if spec is None:
                    raise ContractViolation("corruption curves need a CorruptionSpec")
                out.append(corruption_curve(dataset, factory, m, spec, cfg, seed, workers))
            else:
                raise ValueError(f"unknown curve direction {direction!r}")
    return out


def write_curves_csv(results: Sequence[CurveResult], out: TextIO) -> None:
    """Write curves as ``method,direction,fraction,accuracy,n`` rows with LF endings."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for r in results:
        for p in r.points:
            writer.writerow([r.method, r.direction, f"{p.fraction:.6f}", f"{p.accuracy:.6f}", p.n_evaluated])


def curves_to_csv(results: Sequence[CurveResult]) -> str:
    buf = io.StringIO()
    write_curves_csv(results, buf)
    return buf.getvalue()


def read_curves_csv(text: str) -> list[dict]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CURVE_HEADER:
        raise ValueError("missing curve header")
    return [
        {"method": r[0], "direction": r[1], "fraction": float(r[2]), "accuracy": float(r[3]), "n": int(r[4])}
        for r in rows[1:]
    ]

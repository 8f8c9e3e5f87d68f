"""Concrete reward oracles and synthetic data.

Two families of tasks are provided:

* **Set-Sum**: each player carries an integer, and the reward of a
  coalition is the sum of the *distinct* integers it holds.  Duplicates add
  nothing, which is the simplest case where individual contributions
  mislead and interactions matter.
* **Patch grids**: an instance is a grid of per-patch feature vectors read
  by a softmax classifier (linear plus an optional pairwise coupling term).
  Masked patches are replaced by a base value before pooling, and the reward
  is the log-odds of the instance's class.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from moxi.game import ClassifyingOracle, ContractViolation, PlayerSet, as_player_set

EPS = 1e-7


class GenerationError(RuntimeError):
    """Rejection sampling did not produce enough valid instances."""


def rng_for(seed: int) -> np.random.Generator:
    """The package's pinned generator: PCG64 seeded directly with ``seed``."""
    return np.random.Generator(np.random.PCG64(int(seed) & (2**64 - 1)))


# Set-Sum -----------------------------------------------------------------

@dataclass(frozen=True)
class SetSumGame:
    """Integers held by the players; the label is the sum of the distinct ones."""

    values: tuple[int, ...]
    id: str = "setsum"
    grid: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if not self.values:
            raise ContractViolation("a Set-Sum game needs at least one player")
        if self.grid is not None and self.grid[0] * self.grid[1] != len(self.values):
            raise ContractViolation("grid size does not match the number of values")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def label(self) -> int:
        return sum(set(self.values))


def setsum_reward(game: SetSumGame, s: PlayerSet) -> float:
    """Sum of the distinct values held by the players in ``s``."""
    s = as_player_set(game.n, s)
    return float(sum({game.values[i] for i in s}))


class SetSumOracle(ClassifyingOracle):
    """Set-Sum reward; a coalition is 'classified' as its reward rounded to an integer."""

    name = "setsum"

    def __init__(self, game: SetSumGame):
        super().__init__(game.n)
        self.game = game
        self.label = game.label

    def value(self, s: PlayerSet) -> float:
        return setsum_reward(self.game, s)

    def predict(self, s: PlayerSet) -> int:
        return math.floor(self.value(s) + 0.5)


# Patch grids -------------------------------------------------------------

@dataclass(frozen=True)
class PatchGridInstance:
    """A ``rows x cols`` grid of ``d``-dimensional patch features, row-major."""

    grid: tuple[int, int]
    features: np.ndarray
    label: int
    id: str = "0"

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64)
        rows, cols = (int(g) for g in self.grid)
        object.__setattr__(self, "grid", (rows, cols))
        if feats.ndim != 2 or feats.shape[0] != rows * cols:
            raise ContractViolation(
                f"instance {self.id}: expected {rows * cols} patch vectors, got shape {feats.shape}"
            )
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def with_features(self, features: np.ndarray) -> "PatchGridInstance":
        return replace(self, features=features)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class PatchClassifierModel:
    """Softmax classifier over the mean of the (masked) patch features.

    ``logits_c = weights[c] . m + bias[c] + m . coupling[c] . m`` where ``m``
    is the mean over all grid positions, masked positions contributing
    ``mask_fill``.  The quadratic term is what gives the games non-zero
    pairwise interactions.

    Reductions are written as elementwise products and sums instead of
    matrix products so that a row's result does not depend on batch size.
    """

    weights: np.ndarray
    bias: np.ndarray
    mask_fill: np.ndarray | None = None
    coupling: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ContractViolation("weights must be a C x d matrix")
        c, d = w.shape
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if b.shape != (c,):
            raise ContractViolation(f"bias must have length {c}")
        fill = np.zeros(d) if self.mask_fill is None else np.array(self.mask_fill, dtype=np.float64).reshape(-1)
        if fill.shape != (d,):
            raise ContractViolation(f"mask_fill must have length {d}")
        q = None
        if self.coupling is not None:
            q = np.array(self.coupling, dtype=np.float64)
            if q.shape != (c, d, d):
                raise ContractViolation(f"coupling must have shape ({c}, {d}, {d})")
        for name, arr in (("weights", w), ("bias", b), ("mask_fill", fill), ("coupling", q)):
            if arr is not None:
                if not np.all(np.isfinite(arr)):
                    raise ContractViolation(f"{name} must be finite")
                arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "mask_fill", fill)
        object.__setattr__(self, "coupling", q)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def _check(self, inst: PatchGridInstance) -> None:
        if inst.d != self.d:
            raise ContractViolation(f"instance {inst.id} has feature dimension {inst.d}, model expects {self.d}")

    def masked_features(self, inst: PatchGridInstance, present: np.ndarray) -> np.ndarray:
        """Features with absent patches replaced by ``mask_fill``; ``present`` is ``(B, n)`` bool."""
        self._check(inst)
        present = np.asarray(present, dtype=bool)
        return np.where(present[..., None], inst.features, self.mask_fill)

    def logits_from_features(self, feats: np.ndarray) -> np.ndarray:
        """Logits for a ``(B, n, d)`` stack of effective patch features."""
        feats = np.asarray(feats, dtype=np.float64)
        if feats.shape[-1] != self.d:
            raise ContractViolation(f"feature dimension {feats.shape[-1]} does not match model ({self.d})")
        pooled = feats.mean(axis=-2)
        logits = (pooled[..., None, :] * self.weights).sum(axis=-1) + self.bias
        if self.coupling is not None:
            inner = (pooled[..., None, :, None] * self.coupling).sum(axis=-2)
            logits = logits + (inner * pooled[..., None, :]).sum(axis=-1)
        return logits

    def confidences_from_features(self, feats: np.ndarray) -> np.ndarray:
        return _softmax(self.logits_from_features(feats))

    def forward(self, inst: PatchGridInstance, s: PlayerSet) -> np.ndarray:
        """Class confidences for ``inst`` with only the patches in ``s`` visible."""
        return classifier_forward(self, inst, s)


def presence_matrix(n: int, sets: Sequence[PlayerSet]) -> np.ndarray:
    """``(len(sets), n)`` boolean matrix of membership."""
    out = np.zeros((len(sets), n), dtype=bool)
    for r, s in enumerate(sets):
        for p in s:
            out[r, p] = True
    return out


def classifier_forward(model: PatchClassifierModel, inst: PatchGridInstance, s: PlayerSet | Sequence[int]) -> np.ndarray:
    """Confidence vector for ``inst`` restricted to the visible patches ``s``."""
    s = as_player_set(inst.n, s)
    feats = model.masked_features(inst, presence_matrix(inst.n, [s]))
    return model.confidences_from_features(feats)[0]


def logit_odds_reward(conf: np.ndarray, y: int) -> float:
    """``log(p / (1 - p))`` of class ``y``, with ``p`` clamped to ``[1e-7, 1 - 1e-7]``."""
    conf = np.asarray(conf, dtype=np.float64)
    if not 0 <= int(y) < conf.shape[-1]:
        raise ContractViolation(f"class id {y} outside [0, {conf.shape[-1]})")
    p = min(max(float(conf[int(y)]), EPS), 1.0 - EPS)
    return math.log(p / (1.0 - p))


def logit_odds(p: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)
    return np.log(p / (1.0 - p))


class ClassifierOracle(ClassifyingOracle):
    """Log-odds reward of a patch classifier on one instance.

    ``label`` defaults to the instance's class.
    """

    def __init__(self, model: PatchClassifierModel, inst: PatchGridInstance, label: int | None = None):
        super().__init__(inst.n)
        model._check(inst)
        self.model = model
        self.instance = inst
        self.label = inst.label if label is None else int(label)
        if not 0 <= self.label < model.n_classes:
            raise ContractViolation(f"class id {self.label} outside [0, {model.n_classes})")
        self.name = f"classifier[{inst.id}]"
        self._conf_cache = functools.lru_cache(maxsize=4096)(self._confidences_bits)

    def confidences_batch(self, sets: Sequence[PlayerSet]) -> np.ndarray:
        if not len(sets):
            return np.zeros((0, self.model.n_classes))
        feats = self.model.masked_features(self.instance, presence_matrix(self.n, sets))
        return self.model.confidences_from_features(feats)

    def _confidences_bits(self, bits: int) -> np.ndarray:
        return self.confidences_batch([PlayerSet.from_bits(self.n, bits)])[0]

    def confidences(self, s: PlayerSet) -> np.ndarray:
        return self._conf_cache(as_player_set(self.n, s).bits)

    def value(self, s: PlayerSet) -> float:
        return self.value_batch([s])[0]

    def value_batch(self, sets: Sequence[PlayerSet]) -> list[float]:
        conf = self.confidences_batch(sets)
        return [float(v) for v in logit_odds(conf[:, self.label])]

    def predict(self, s: PlayerSet) -> int:
        return int(np.argmax(self.confidences(s)))

    def confidence(self, s: PlayerSet) -> float:
        return float(self.confidences(s)[self.label])


# Corruption --------------------------------------------------------------

@dataclass(frozen=True)
class CorruptionSpec:
    """Feature corruption applied to selected patches instead of masking."""

    kind: str = "gaussian"
    sigma: float = 1.0
    fill: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "constant_fill"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def apply_corruption(inst: PatchGridInstance, patches: PlayerSet | Sequence[int], spec: CorruptionSpec) -> PatchGridInstance:
    """Corrupt the features of ``patches``.

    Gaussian noise for patch ``p`` comes from its own generator seeded with
    ``spec.seed ^ p``, so corrupting a superset extends the noise of a subset
    instead of redrawing it.
    """
    patches = as_player_set(inst.n, patches)
    feats = np.array(inst.features)
    if spec.kind == "constant_fill":
        for p in patches:
            feats[p, :] = spec.fill
    elif spec.sigma > 0:
        for p in patches:
            feats[p, :] += rng_for(spec.seed ^ p).normal(0.0, spec.sigma, size=inst.d)
    return inst.with_features(feats)


# Synthetic data ----------------------------------------------------------

def generate_setsum_dataset(count: int, grid: tuple[int, int] = (2, 2), seed: int = 0,
                            duplicate_rate: float = 1.0, max_value: int = 9,
                            max_attempts: int = 10_000) -> list[SetSumGame]:
    """Random Set-Sum instances over ``0..max_value``.

    With probability ``duplicate_rate`` an instance holds its largest value
    in exactly two patches: ``n - 1`` values with a unique maximum are drawn
    and the maximum is copied into the remaining patch.  Otherwise all ``n``
    values are drawn independently.
    """
    if count < 1:
        raise ContractViolation("count must be >= 1")
    if not 0.0 <= duplicate_rate <= 1.0:
        raise ContractViolation("duplicate_rate must lie in [0, 1]")
    n = grid[0] * grid[1]
    if n < 2 and duplicate_rate > 0:
        raise ContractViolation("duplicated maxima need at least two patches")
    rng = rng_for(seed)
    out = []
    for k in range(count):
        if rng.random() < duplicate_rate:
            for _ in range(max_attempts):
                vals = rng.integers(0, max_value + 1, size=n - 1)
                top = vals.max()
                if (vals == top).sum() == 1:
                    break
            else:
                raise GenerationError("could not draw values with a unique maximum")
            vals = np.append(vals, top)
            vals = rng.permutation(vals)
        else:
            vals = rng.integers(0, max_value + 1, size=n)
        out.append(SetSumGame(tuple(int(v) for v in vals), id=str(k), grid=tuple(grid)))
    return out


@dataclass(frozen=True)
class PlantedConfig:
    """Knobs of the planted patch-grid task.

    Every class ``c`` is recognized from two parts, ``c`` and ``c + 1``
    (mod ``C``), each a unit direction in feature space.  An instance of class
    ``c`` shows several redundant copies of its primary part, one weaker
    copy of its secondary part, a few distractor patches carrying other
    parts, and noise elsewhere.  The model saturates on repeated evidence for
    a part and rewards the two parts appearing together.
    """

    grid: tuple[int, int] = (3, 3)
    d: int = 12
    n_classes: int = 8
    linear: float = 6.0
    saturation: float = 3.0
    synergy: float = 6.0
    primary_copies: tuple[int, int] = (2, 3)
    primary_strength: float = 3.0
    secondary_strength: float = 1.5
    distractors: tuple[int, int] = (1, 2)
    distractor_strength: float = 2.5
    noise: float = 0.3
    coupled: bool = True


def planted_model(cfg: PlantedConfig, rng: np.random.Generator) -> tuple[PatchClassifierModel, np.ndarray]:
    """The planted classifier and its part directions (``C x d``)."""
    c, d = cfg.n_classes, cfg.d
    if d < c:
        raise ContractViolation("the planted task needs d >= number of classes")
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    parts = q[:, :c].T.copy()
    n = cfg.grid[0] * cfg.grid[1]
    # evidence enters through the pooled mean, so rescale to per-patch units
    lin, sat, syn = cfg.linear * n, cfg.saturation * n * n, cfg.synergy * n * n
    weights = np.zeros((c, d))
    coupling = np.zeros((c, d, d))
    for k in range(c):
        a, b = parts[k], parts[(k + 1) % c]
        weights[k] = lin * (a + b)
        if cfg.coupled:
            coupling[k] = -sat * (np.outer(a, a) + np.outer(b, b)) + 0.5 * syn * (np.outer(a, b) + np.outer(b, a))
    model = PatchClassifierModel(weights, np.zeros(c), np.zeros(d), coupling if cfg.coupled else None)
    return model, parts


def _planted_instance(cfg: PlantedConfig, parts: np.ndarray, label: int, rng: np.random.Generator, ident: str) -> PatchGridInstance:
    n = cfg.grid[0] * cfg.grid[1]
    c = cfg.n_classes
    feats = rng.normal(0.0, cfg.noise, size=(n, cfg.d))
    slots = rng.permutation(n)
    k_primary = int(rng.integers(cfg.primary_copies[0], cfg.primary_copies[1] + 1))
    k_distract = int(rng.integers(cfg.distractors[0], cfg.distractors[1] + 1))
    pos = 0
    for _ in range(k_primary):
        feats[slots[pos]] += cfg.primary_strength * rng.uniform(0.8, 1.2) * parts[label]
        pos += 1
    feats[slots[pos]] += cfg.secondary_strength * rng.uniform(0.8, 1.2) * parts[(label + 1) % c]
    pos += 1
    for _ in range(k_distract):
        if pos >= n:
            break
        other = (label + int(rng.integers(2, c))) % c
        feats[slots[pos]] += cfg.distractor_strength * rng.uniform(0.8, 1.2) * parts[other]
        pos += 1
    return PatchGridInstance(cfg.grid, feats, label, ident)


def generate_patch_dataset(count: int, cfg: PlantedConfig = PlantedConfig(), seed: int = 0,
                           max_rejections: int | None = None) -> tuple[list[PatchGridInstance], PatchClassifierModel]:
    """Planted classifier plus ``count`` instances it classifies correctly at full visibility.

    Labels cycle through the classes; misclassified candidates are discarded
    and redrawn.
    """
    if count < 1:
        raise ContractViolation("count must be >= 1")
    if cfg.grid[0] * cfg.grid[1] < 2 + cfg.distractors[0]:
        raise ContractViolation("grid too small for the planted layout")
    rng = rng_for(seed)
    model, parts = planted_model(cfg, rng)
    limit = 50 * count if max_rejections is None else max_rejections
    full = np.ones((1, cfg.grid[0] * cfg.grid[1]), dtype=bool)
    out: list[PatchGridInstance] = []
    rejected = 0
    while len(out) < count:
        label = len(out) % cfg.n_classes
        inst = _planted_instance(cfg, parts, label, rng, str(len(out)))
        pred = int(np.argmax(model.confidences_from_features(model.masked_features(inst, full))[0]))
        if pred == label:
            out.append(inst)
            continue
        rejected += 1
        if rejected > limit:
            raise GenerationError(f"rejected {rejected} candidates while generating {count} instances")
    return out, model


@dataclass
class SyntheticData:
    setsum: list[SetSumGame]
    patches: list[PatchGridInstance]
    model: PatchClassifierModel
    config: PlantedConfig = field(default_factory=PlantedConfig)


def generate_synthetic_dataset(grid: tuple[int, int] = (3, 3), d: int = 12, n_classes: int = 8, count: int = 200,
                               seed: int = 0, duplicate_rate: float = 1.0, setsum_grid: tuple[int, int] = (2, 2),
                               coupled: bool = True) -> SyntheticData:
    """Both synthetic tasks from one seed."""
    cfg = PlantedConfig(grid=tuple(grid), d=d, n_classes=n_classes, coupled=coupled)
    patches, model = generate_patch_dataset(count, cfg, seed=seed)
    setsum = generate_setsum_dataset(count, setsum_grid, seed=seed ^ 0x5E7, duplicate_rate=duplicate_rate)
    return SyntheticData(setsum, patches, model, cfg)

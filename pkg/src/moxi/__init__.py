"""Game-theoretic identification of informative player subsets.

The core objects are :class:`PlayerSet` coalitions and reward oracles
wrapped in a :class:`CachedOracle`.  On top of these sit exact and sampled
Shapley values and interactions (:mod:`moxi.shapley`), greedy insertion and
deletion with ranking baselines (:mod:`moxi.greedy`), synthetic tasks
(:mod:`moxi.tasks`), and insertion/deletion/corruption curves
(:mod:`moxi.curves`).
"""

from moxi.game import (
    AdditiveGame,
    CachedOracle,
    ClassifyingOracle,
    ContractViolation,
    PlayerSet,
    RewardOracle,
    TableGame,
)
from moxi.greedy import (
    SelectionTrace,
    StoppingRule,
    TargetClassConfig,
    class_discriminative_deletion,
    greedy_deletion,
    greedy_insertion,
    moxi_minus_ranking,
    random_ranking,
    shapley_ranking,
)
from moxi.kernels import BACKEND as KERNEL_BACKEND
from moxi.shapley import (
    AttributionScore,
    SamplingConfig,
    deletion_shapley,
    exact_interaction,
    exact_shapley,
    full_context_deletion_interaction,
    full_context_deletion_shapley,
    mc_shapley,
    self_context_interaction,
    self_context_shapley,
)
from moxi.tasks import (
    ClassifierOracle,
    CorruptionSpec,
    PatchClassifierModel,
    PatchGridInstance,
    SetSumGame,
    SetSumOracle,
)

__version__ = "0.1.0"

__all__ = [
    "AdditiveGame", "AttributionScore", "CachedOracle", "ClassifierOracle", "ClassifyingOracle",
    "ContractViolation", "CorruptionSpec", "KERNEL_BACKEND", "PatchClassifierModel", "PatchGridInstance",
    "PlayerSet", "RewardOracle", "SamplingConfig", "SelectionTrace", "SetSumGame", "SetSumOracle",
    "StoppingRule", "TableGame", "TargetClassConfig", "class_discriminative_deletion", "deletion_shapley",
    "exact_interaction", "exact_shapley", "full_context_deletion_interaction", "full_context_deletion_shapley",
    "greedy_deletion", "greedy_insertion", "mc_shapley", "moxi_minus_ranking", "random_ranking",
    "self_context_interaction", "self_context_shapley", "shapley_ranking",
]

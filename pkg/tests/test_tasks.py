import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moxi.game import CachedOracle, ContractViolation, PlayerSet
from moxi.tasks import (
    ClassifierOracle,
    CorruptionSpec,
    PatchClassifierModel,
    PatchGridInstance,
    PlantedConfig,
    SetSumGame,
    SetSumOracle,
    apply_corruption,
    classifier_forward,
    generate_patch_dataset,
    generate_setsum_dataset,
    generate_synthetic_dataset,
    logit_odds_reward,
    setsum_reward,
)

GOLDEN = Path(__file__).parent / "golden"


def test_setsum_reward_counts_distinct_values():
    game = SetSumGame((2, 2, 1))
    assert setsum_reward(game, PlayerSet.full(3)) == 3
    assert setsum_reward(game, PlayerSet.empty(3)) == 0
    assert setsum_reward(game, PlayerSet(3, [0, 1])) == 2
    assert game.label == 3


def test_setsum_prediction_rounds_reward():
    oracle = SetSumOracle(SetSumGame((4, 1, 4)))
    assert oracle.predict(PlayerSet(3, [0, 2])) == 4
    assert oracle.predict(PlayerSet.full(3)) == oracle.label == 5


@pytest.mark.parametrize("p, want", [(0.5, 0.0), (0.9, math.log(9)), (1.0, math.log((1 - 1e-7) / 1e-7))])
def test_logit_odds_values(p, want):
    assert logit_odds_reward(np.array([p, 1 - p]), 0) == pytest.approx(want, abs=1e-9)


def test_logit_odds_clamp_value():
    assert logit_odds_reward(np.array([1.0, 0.0]), 0) == pytest.approx(16.1181, abs=1e-4)
    assert logit_odds_reward(np.array([1.0, 0.0]), 1) == pytest.approx(-16.1181, abs=1e-4)


def test_logit_odds_rejects_bad_class():
    with pytest.raises(ContractViolation):
        logit_odds_reward(np.array([0.5, 0.5]), 2)


def _identity_fixture():
    model = PatchClassifierModel(np.eye(3), np.array([0.0, 1.0, 0.0]))
    feats = np.array([[3.0, 0.0, 0.0], [0.0, 0.0, 3.0]])
    return model, PatchGridInstance((1, 2), feats, 0, "id")


def test_forward_by_hand():
    model, inst = _identity_fixture()
    # pooled mean (1.5, 0, 1.5) plus bias gives logits (1.5, 1, 1.5)
    z = np.array([1.5, 1.0, 1.5])
    want = np.exp(z) / np.exp(z).sum()
    np.testing.assert_allclose(classifier_forward(model, inst, [0, 1]), want, rtol=0, atol=1e-15)


def test_empty_coalition_is_uniform_with_zero_bias():
    model = PatchClassifierModel(np.eye(3), np.zeros(3))
    _, inst = _identity_fixture()
    np.testing.assert_allclose(classifier_forward(model, inst, []), np.full(3, 1 / 3), atol=1e-15)


def test_masked_content_is_irrelevant():
    model, inst = _identity_fixture()
    other = inst.with_features(np.array([[3.0, 0.0, 0.0], [-9.0, 4.0, 7.0]]))
    np.testing.assert_array_equal(classifier_forward(model, inst, [0]), classifier_forward(model, other, [0]))


def test_dimension_mismatch():
    model, _ = _identity_fixture()
    inst = PatchGridInstance((1, 2), np.zeros((2, 4)), 0, "bad")
    with pytest.raises(ContractViolation):
        classifier_forward(model, inst, [0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**9 - 1))
def test_softmax_sums_to_one(seed, bits):
    data = generate_synthetic_dataset(count=2, seed=seed % 50)
    inst = data.patches[seed % 2]
    conf = classifier_forward(data.model, inst, PlayerSet.from_bits(inst.n, bits))
    assert abs(conf.sum() - 1.0) < 1e-12


def test_classifier_oracle_is_deterministic_and_batch_consistent():
    data = generate_synthetic_dataset(count=4, seed=1)
    oracle = ClassifierOracle(data.model, data.patches[0])
    sets = [PlayerSet.from_bits(9, b) for b in range(0, 512, 7)]
    batch = oracle.value_batch(sets)
    singles = [oracle.value(s) for s in sets]
    assert batch == singles
    assert CachedOracle(oracle).evaluate(sets[3]) == batch[3]


def test_corruption_zero_sigma_is_noop():
    _, inst = _identity_fixture()
    out = apply_corruption(inst, [0, 1], CorruptionSpec("gaussian", sigma=0.0))
    np.testing.assert_array_equal(out.features, inst.features)


def test_constant_fill_equals_masking():
    data = generate_synthetic_dataset(count=2, seed=3)
    inst = data.patches[1]
    corrupted = apply_corruption(inst, [2, 5], CorruptionSpec("constant_fill", fill=0.0))
    visible = PlayerSet(inst.n, [2, 5]).complement()
    np.testing.assert_array_equal(
        classifier_forward(data.model, corrupted, PlayerSet.full(inst.n)),
        classifier_forward(data.model, inst, visible),
    )


def test_gaussian_noise_nests_over_supersets():
    data = generate_synthetic_dataset(count=1, seed=2)
    inst = data.patches[0]
    spec = CorruptionSpec("gaussian", sigma=1.0, seed=9)
    small = apply_corruption(inst, [1], spec).features
    big = apply_corruption(inst, [1, 4], spec).features
    np.testing.assert_array_equal(small[1], big[1])
    np.testing.assert_array_equal(small[4], inst.features[4])


def test_gaussian_corruption_golden():
    inst = PatchGridInstance((2, 2), np.arange(12, dtype=np.float64).reshape(4, 3), 0, "g")
    out = apply_corruption(inst, [0], CorruptionSpec("gaussian", sigma=1.0, seed=42))
    golden = json.loads((GOLDEN / "corruption_gaussian.json").read_text())
    assert out.features.reshape(-1).tolist() == golden["features"]


def test_setsum_duplicates_the_max_exactly_twice():
    for game in generate_setsum_dataset(200, (2, 2), seed=5, duplicate_rate=1.0):
        top = max(game.values)
        assert game.values.count(top) == 2


def test_generators_are_deterministic():
    a = generate_synthetic_dataset(count=10, seed=7)
    b = generate_synthetic_dataset(count=10, seed=7)
    assert [g.values for g in a.setsum] == [g.values for g in b.setsum]
    for x, y in zip(a.patches, b.patches):
        np.testing.assert_array_equal(x.features, y.features)
    np.testing.assert_array_equal(a.model.coupling, b.model.coupling)


def test_planted_model_is_correct_on_its_data():
    patches, model = generate_patch_dataset(64, PlantedConfig(), seed=11)
    for inst in patches:
        assert int(np.argmax(classifier_forward(model, inst, PlayerSet.full(inst.n)))) == inst.label


def test_instance_invariants():
    with pytest.raises(ContractViolation):
        PatchGridInstance((2, 2), np.zeros((3, 2)), 0, "bad")
    with pytest.raises(ContractViolation):
        PatchClassifierModel(np.eye(2), np.array([np.inf, 0.0]))

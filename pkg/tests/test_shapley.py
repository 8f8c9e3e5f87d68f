import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moxi.game import AdditiveGame, CachedOracle, ContractViolation, PlayerSet, TableGame
from moxi.shapley import (
    EnumerationLimitError,
    SamplingConfig,
    deletion_shapley,
    exact_interaction,
    exact_shapley,
    exact_shapley_all,
    full_context_deletion_interaction,
    full_context_deletion_shapley,
    mc_shapley,
    mc_shapley_all,
    self_context_interaction,
    self_context_shapley,
    self_interaction,
    shapley_weights,
)

from conftest import g2_table


def brute_shapley(game, n, i):
    # average marginal over every join order
    total = 0.0
    for order in itertools.permutations(range(n)):
        before = PlayerSet(n, order[: order.index(i)])
        total += game.value(before.with_player(i)) - game.value(before)
    return total / math.factorial(n)


def test_g2_values(g2):
    full = g2.grand_set()
    assert exact_shapley(g2, full, 0).value == pytest.approx(1.5)
    assert exact_shapley(g2, full, 1).value == pytest.approx(2.5)
    assert exact_interaction(g2, full, 0, 1).value == pytest.approx(1.0)
    assert deletion_shapley(g2, full, 0).value == pytest.approx(1.5)


def test_setsum_values(setsum):
    vals = [s.value for s in exact_shapley_all(setsum)]
    np.testing.assert_allclose(vals, [1.0, 1.0, 1.0], atol=1e-12)
    assert sum(vals) == pytest.approx(3.0)


def test_single_player_context_is_plain_marginal(g2):
    ctx = PlayerSet(2, [1])
    assert exact_shapley(g2, ctx, 1).value == pytest.approx(2.0)
    assert deletion_shapley(g2, ctx, 1).value == pytest.approx(2.0)


def test_self_context_examples(g2, setsum):
    assert self_context_shapley(g2, 0).value == 1.0
    assert self_context_shapley(setsum, 2).value == 1.0
    assert self_context_interaction(g2, PlayerSet(2, [0]), 1).value == 1.0
    assert self_context_interaction(setsum, PlayerSet(3, [0]), 1).value == -2.0
    assert self_context_interaction(setsum, PlayerSet.empty(3), 1).value == 0.0


def test_full_context_examples(g2, setsum):
    assert full_context_deletion_shapley(g2, 0).value == pytest.approx(1.0)
    assert full_context_deletion_shapley(setsum, 0).value == 0.0
    assert full_context_deletion_interaction(g2, PlayerSet(2, [0]), 1).value == pytest.approx(1.0)
    res = full_context_deletion_interaction(setsum, PlayerSet(3, [0]), 1)
    assert res.value == pytest.approx(-1.0)
    assert res.raw == pytest.approx(-2.0)


def test_additive_games_have_no_interaction():
    game = CachedOracle(AdditiveGame([0.5, -1.0, 2.0, 3.0]))
    full = game.grand_set()
    for i, j in itertools.combinations(range(4), 2):
        assert exact_interaction(game, full, i, j).value == pytest.approx(0.0, abs=1e-12)
        assert full_context_deletion_interaction(game, PlayerSet(4, [i]), j).value == pytest.approx(0.0, abs=1e-12)


def test_same_player_interaction_is_rejected(g2):
    with pytest.raises(ContractViolation):
        exact_interaction(g2, g2.grand_set(), 0, 0)
    assert self_interaction(g2, g2.grand_set(), 0).value == pytest.approx(-1.5)


def test_non_member_rejected(g2):
    with pytest.raises(ContractViolation):
        exact_shapley(g2, PlayerSet(2, [1]), 0)


def test_enumeration_limit():
    game = CachedOracle(AdditiveGame([1.0] * 22))
    with pytest.raises(EnumerationLimitError, match="mc_shapley"):
        exact_shapley(game, game.grand_set(), 0)


def test_weights_sum_to_one_per_player():
    for m in range(0, 12):
        w = shapley_weights(m)
        assert sum(math.comb(m, k) * w[k] for k in range(m + 1)) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_exact_matches_brute_force(n, seed):
    game = TableGame.random(n, np.random.Generator(np.random.PCG64(seed)))
    oracle = CachedOracle(game)
    got = [s.value for s in exact_shapley_all(oracle)]
    want = [brute_shapley(game, n, i) for i in range(n)]
    np.testing.assert_allclose(got, want, atol=1e-10)
    for i in range(n):
        assert exact_shapley(oracle, oracle.grand_set(), i).value == pytest.approx(want[i], abs=1e-10)
        assert deletion_shapley(oracle, oracle.grand_set(), i).value == pytest.approx(want[i], abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_scaling_and_offset(n, seed, scale):
    rng = np.random.Generator(np.random.PCG64(seed))
    game = TableGame.random(n, rng)
    shifted = TableGame(np.asarray(game.table) * scale + 3.0)
    a = [s.value for s in exact_shapley_all(CachedOracle(game))]
    b = [s.value for s in exact_shapley_all(CachedOracle(shifted))]
    np.testing.assert_allclose(np.asarray(a) * scale, b, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 7), st.integers(0, 2**32 - 1), st.data())
def test_interaction_symmetry(n, seed, data):
    oracle = CachedOracle(TableGame.random(n, np.random.Generator(np.random.PCG64(seed))))
    i, j = data.draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True))
    full = oracle.grand_set()
    assert exact_interaction(oracle, full, i, j).value == pytest.approx(exact_interaction(oracle, full, j, i).value)


def test_interaction_of_pure_pair_game():
    # f = 1 only when both 0 and 1 are present
    oracle = CachedOracle(TableGame.from_function(3, lambda s: float(0 in s and 1 in s)))
    assert exact_interaction(oracle, oracle.grand_set(), 0, 1).value == pytest.approx(1.0)


def test_mc_g2_is_bounded(g2):
    for seed in range(5):
        est = mc_shapley(g2, g2.grand_set(), 0, SamplingConfig(20, seed=seed)).value
        assert 1.0 <= est <= 2.0


def test_mc_exhaustive_equals_exact():
    oracle = CachedOracle(TableGame.random(3, np.random.Generator(np.random.PCG64(11))))
    cfg = SamplingConfig(exhaustive=True)
    for i in range(3):
        assert mc_shapley(oracle, oracle.grand_set(), i, cfg).value == pytest.approx(
            exact_shapley(oracle, oracle.grand_set(), i).value, abs=1e-9)


def test_mc_is_seed_deterministic_and_worker_independent():
    oracle = CachedOracle(TableGame.random(9, np.random.Generator(np.random.PCG64(5))))
    cfg = SamplingConfig(50, seed=7)
    a = mc_shapley(oracle, oracle.grand_set(), 3, cfg, workers=1)
    fresh = CachedOracle(TableGame(oracle.inner.table), workers=4)
    b = mc_shapley(fresh, fresh.grand_set(), 3, cfg, workers=4)
    assert a.value == b.value and a.std_error == b.std_error


def test_mc_all_matches_single_player_estimates_in_expectation():
    rng = np.random.Generator(np.random.PCG64(2))
    oracle = CachedOracle(TableGame.random(6, rng))
    est = mc_shapley_all(oracle, cfg=SamplingConfig(400, seed=1))
    exact = exact_shapley_all(oracle)
    for e, x in zip(est, exact):
        assert abs(e.value - x.value) < 5 * e.std_error + 1e-12


def test_mc_all_is_efficient_per_sample():
    # every ordering telescopes to f(N) - f(empty)
    oracle = CachedOracle(TableGame.random(7, np.random.Generator(np.random.PCG64(4))))
    est = mc_shapley_all(oracle, cfg=SamplingConfig(30, seed=0))
    target = oracle.evaluate(oracle.grand_set()) - oracle.evaluate(PlayerSet.empty(7))
    assert sum(e.value for e in est) == pytest.approx(target, abs=1e-9)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moxi.game import AdditiveGame, CachedOracle, ContractViolation, PlayerSet, TableGame, as_player_set

from conftest import g2_table


@st.composite
def two_sets(draw):
    n = draw(st.integers(1, 130))
    members = st.lists(st.integers(0, n - 1), max_size=min(n, 40))
    return n, draw(members), draw(members)


@given(two_sets())
def test_set_algebra_matches_python_sets(case):
    n, xs, ys = case
    a, b = PlayerSet(n, xs), PlayerSet(n, ys)
    assert set(a | b) == set(xs) | set(ys)
    assert set(a & b) == set(xs) & set(ys)
    assert set(a - b) == set(xs) - set(ys)
    assert set(a.complement()) == set(range(n)) - set(xs)
    assert len(a) == a.cardinality() == len(set(xs))
    assert a.issubset(a | b)
    assert list(a) == sorted(set(xs))


@given(two_sets())
def test_equal_sets_hash_alike(case):
    n, xs, _ = case
    a = PlayerSet(n, xs)
    b = PlayerSet(n, list(reversed(xs)))
    assert a == b and hash(a) == hash(b)
    assert PlayerSet.from_bits(n, a.bits) == a


def test_wide_sets_beyond_one_word():
    s = PlayerSet(200, [0, 63, 64, 199])
    assert 199 in s and 100 not in s
    assert s.without_player(64).to_list() == [0, 63, 199]
    assert len(PlayerSet.full(200)) == 200


@pytest.mark.parametrize("bad", [-1, 3, 10])
def test_out_of_range_player_rejected(bad):
    with pytest.raises(ContractViolation):
        PlayerSet(3, [bad])


def test_mixed_universe_rejected():
    with pytest.raises(ContractViolation):
        PlayerSet(3, [0]) | PlayerSet(4, [0])


def test_g2_lookup():
    oracle = CachedOracle(g2_table())
    assert oracle.evaluate([0, 1]) == 4.0
    assert oracle.evaluate([]) == 0.0


def test_batch_dedups_repeated_sets():
    oracle = CachedOracle(g2_table())
    assert oracle.evaluate_batch([[0], [1], [0]]) == [1.0, 2.0, 1.0]
    assert oracle.call_count() == 2


def test_cache_is_idempotent():
    oracle = CachedOracle(AdditiveGame([1.0, 2.0, 3.0]))
    first = oracle.evaluate([0, 2])
    calls = oracle.call_count()
    for _ in range(5):
        assert oracle.evaluate([2, 0]) == first
    assert oracle.call_count() == calls == 1


def test_parallel_batch_matches_serial():
    rng = np.random.Generator(np.random.PCG64(3))
    game = TableGame.random(8, rng)
    sets = [PlayerSet.from_bits(8, b) for b in range(256)]
    serial = CachedOracle(game).evaluate_batch(sets)
    parallel = CachedOracle(game, workers=4).evaluate_batch(sets)
    assert serial == parallel


def test_lru_capacity_evicts_oldest():
    counted = CachedOracle(g2_table(), capacity=1)
    counted.evaluate([0])
    counted.evaluate([1])
    counted.evaluate([0])
    assert counted.call_count() == 3


class _Broken(TableGame):
    def value(self, s):
        return float("nan")


def test_non_finite_reward_is_a_contract_violation():
    with pytest.raises(ContractViolation):
        CachedOracle(_Broken([0.0, 0.0])).evaluate([0])


def test_invalid_batch_member_raises_before_any_call():
    oracle = CachedOracle(g2_table())
    with pytest.raises(ContractViolation):
        oracle.evaluate_batch([[0], [5]])
    assert oracle.call_count() == 0


def test_as_player_set_checks_universe():
    assert as_player_set(3, [1, 2]) == PlayerSet(3, [1, 2])
    with pytest.raises(ContractViolation):
        as_player_set(3, PlayerSet(4, [1]))


@settings(max_examples=30)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_additive_game_sums_weights(ws):
    game = AdditiveGame(ws)
    full = PlayerSet.full(len(ws))
    assert game.value(full) == pytest.approx(sum(ws))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moxi.game import AdditiveGame, CachedOracle, PlayerSet, TableGame
from moxi.greedy import (
    SelectionTrace,
    StoppingRule,
    TargetClassConfig,
    class_discriminative_deletion,
    deletion_decomposition,
    greedy_deletion,
    greedy_insertion,
    insertion_decomposition,
    moxi_minus_ranking,
    random_ranking,
    rank_order,
    run_method,
    shapley_ranking,
)
from moxi.tasks import ClassifierOracle, PatchClassifierModel, PatchGridInstance

from conftest import g2_table, setsum_221


def test_setsum_insertion():
    trace = greedy_insertion(setsum_221())
    assert trace.order == (0, 2, 1)
    assert trace.step_rewards == (2.0, 3.0, 3.0)


def test_g2_insertion_and_deletion():
    ins = greedy_insertion(g2_table())
    assert ins.order == (1, 0) and ins.step_rewards == (2.0, 4.0)
    assert greedy_deletion(g2_table()).order == (1, 0)


def test_setsum_deletion_removes_singleton_first():
    trace = greedy_deletion(setsum_221())
    assert trace.order[0] == 2
    assert trace.step_rewards[0] == 2.0


def test_single_player_runs():
    game = AdditiveGame([1.0])
    assert greedy_insertion(game).order == (0,)
    assert greedy_deletion(game).order == (0,)


def test_equal_values_break_ties_by_index():
    game = AdditiveGame([1.0] * 5)
    assert greedy_deletion(game).order == (0, 1, 2, 3, 4)
    assert greedy_insertion(game).order == (0, 1, 2, 3, 4)
    assert moxi_minus_ranking(game).order == (0, 1, 2, 3, 4)


def test_baseline_rankings():
    assert moxi_minus_ranking(setsum_221()).order == (0, 1, 2)
    assert moxi_minus_ranking(g2_table()).order == (1, 0)
    assert shapley_ranking(setsum_221()).order == (0, 1, 2)
    assert shapley_ranking(g2_table()).order == (1, 0)


def test_additive_shapley_matches_moxi_minus():
    game = AdditiveGame([0.3, -1.0, 2.0, 0.7, 2.0])
    assert shapley_ranking(game).order == moxi_minus_ranking(game).order


def test_random_ranking_is_seeded():
    game = AdditiveGame([1.0] * 8)
    a = random_ranking(game, seed=3).order
    assert a == random_ranking(game, seed=3).order
    assert sorted(a) == list(range(8))
    assert a != random_ranking(game, seed=4).order


def test_rank_order_treats_float_noise_as_ties():
    assert rank_order([1.0, 1.0 + 1e-13, 0.5]) == [0, 1, 2]


def test_stop_on_correct_for_setsum():
    trace = greedy_insertion(setsum_221(), StoppingRule("on_correct"))
    assert trace.order == (0, 2)
    assert trace.stop_reason == "stop_rule"


def test_stop_on_incorrect_for_deletion():
    trace = greedy_deletion(setsum_221(), StoppingRule("on_incorrect"))
    assert trace.order == (2,)


def test_trace_roundtrip():
    trace = greedy_insertion(setsum_221()).with_grid((1, 3))
    assert SelectionTrace.from_dict(trace.to_dict()) == trace


def test_trace_rejects_duplicates():
    with pytest.raises(ValueError):
        SelectionTrace("insertion", "moxi", 3, (0, 0), (1.0, 1.0), (1.0, 1.0), (1, 2))


def test_run_method_rejects_unknown_names():
    with pytest.raises(ValueError):
        run_method(g2_table(), "lime", "insertion")
    with pytest.raises(ValueError):
        run_method(g2_table(), "moxi", "sideways")


def _brute_insertion(game, n):
    chosen = PlayerSet.empty(n)
    order = []
    while len(chosen) < n:
        best = None
        for p in range(n):
            if p in chosen:
                continue
            v = game.value(chosen.with_player(p))
            if best is None or v > best[0]:
                best = (v, p)
        order.append(best[1])
        chosen = chosen.with_player(best[1])
    return tuple(order)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_insertion_matches_brute_force_and_decomposes(n, seed):
    game = TableGame.random(n, np.random.Generator(np.random.PCG64(seed)))
    oracle = CachedOracle(game)
    trace = greedy_insertion(oracle)
    assert trace.order == _brute_insertion(game, n)
    prev = PlayerSet.empty(n)
    for b, score in zip(trace.order, trace.step_scores):
        phi0, i0 = insertion_decomposition(oracle, prev, b)
        marginal = game.value(prev.with_player(b)) - game.value(prev)
        assert phi0 + i0 == pytest.approx(marginal, abs=1e-9)
        assert score == pytest.approx(marginal, abs=1e-9)
        prev = prev.with_player(b)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_deletion_terms_sum_to_scaled_drop(n, seed):
    game = TableGame.random(n, np.random.Generator(np.random.PCG64(seed)))
    oracle = CachedOracle(game)
    trace = greedy_deletion(oracle)
    grand = PlayerSet.full(n)
    removed = PlayerSet.empty(n)
    for b in trace.order:
        terms = deletion_decomposition(oracle, removed, b)
        want = (game.value(grand) - game.value(grand - removed.with_player(b))) / (n - len(removed))
        assert sum(terms) == pytest.approx(want, abs=1e-9)
        removed = removed.with_player(b)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1), st.floats(0.1, 50))
def test_orders_invariant_under_positive_scaling(n, seed, scale):
    game = TableGame.random(n, np.random.Generator(np.random.PCG64(seed)))
    scaled = TableGame(np.asarray(game.table) * scale - 2.0)
    assert greedy_insertion(game).order == greedy_insertion(scaled).order
    assert greedy_deletion(game).order == greedy_deletion(scaled).order


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0, 5, allow_nan=False), min_size=2, max_size=8))
def test_insertion_rewards_monotone_for_monotone_games(ws):
    trace = greedy_insertion(AdditiveGame(ws))
    assert all(b >= a - 1e-12 for a, b in zip(trace.step_rewards, trace.step_rewards[1:]))


def test_call_count_matches_quadratic_bound():
    n = 9
    oracle = CachedOracle(TableGame.random(n, np.random.Generator(np.random.PCG64(0))))
    greedy_insertion(oracle)
    assert oracle.call_count() <= 1 + n * (n + 1) // 2


def test_calls_recorded_cumulatively():
    trace = greedy_insertion(setsum_221())
    assert list(trace.oracle_calls) == sorted(trace.oracle_calls)
    assert trace.oracle_calls[-1] <= 7


# class-discriminative deletion on hand-built two-class models

def _two_patch():
    model = PatchClassifierModel(np.eye(2), np.zeros(2))
    inst = PatchGridInstance((1, 2), np.array([[4.0, 0.0], [0.0, 2.0]]), 0, "ab")
    return ClassifierOracle(model, inst)


def test_phase_one_removes_patch_supporting_prediction():
    oracle = _two_patch()
    assert oracle.predict(PlayerSet.full(2)) == 0
    res = class_discriminative_deletion(oracle, TargetClassConfig(1))
    assert res.phase1.order == (0,)
    assert oracle.predict(PlayerSet(2, [1])) == 1
    assert res.phase2.order == (1,)
    assert not res.exhausted


def test_raw_odds_variant_agrees_on_easy_fixture():
    res = class_discriminative_deletion(_two_patch(), TargetClassConfig(1, use_log_on_second_term=False))
    assert res.phase1.order == (0,)


def test_target_equal_to_prediction_skips_phase_one():
    oracle = _two_patch()
    phase1, phase2 = class_discriminative_deletion(oracle, TargetClassConfig(0))
    assert phase1.order == ()
    assert phase2.order[0] == 0


def test_single_patch_flip():
    model = PatchClassifierModel(np.eye(2), np.array([0.0, 0.5]))
    inst = PatchGridInstance((1, 1), np.array([[2.0, 0.0]]), 0, "one")
    res = class_discriminative_deletion(ClassifierOracle(model, inst), TargetClassConfig(1))
    assert res.phase1.order == (0,)
    assert res.phase2 is not None and res.phase2.order == ()


def test_unreachable_target_is_exhausted():
    # class 2 never wins: its logit is fixed far below the others
    model = PatchClassifierModel(np.eye(3)[:, :2], np.array([0.0, 0.0, -50.0]))
    inst = PatchGridInstance((1, 2), np.array([[3.0, 0.0], [0.0, 1.0]]), 0, "x")
    res = class_discriminative_deletion(ClassifierOracle(model, inst), TargetClassConfig(2))
    assert res.exhausted and res.phase2 is None
    assert len(res.phase1.order) == 2

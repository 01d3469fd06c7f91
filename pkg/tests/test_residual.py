import math
import statistics

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sigmasched.core import SlotKind
from sigmasched.residual import ResidualState, predict_residual, replay_participant, update_residual

from helpers import make_participant


def run(errors):
    state = ResidualState()
    for e in errors:
        state = update_residual(state, e)
    return state


def test_cold_start_sigma_is_zero():
    assert predict_residual(ResidualState(), 450.0).sigma == 0.0
    assert predict_residual(run([12.0]), 450.0).sigma == 0.0


def test_prediction_is_user_time():
    assert predict_residual(run([30.0, 50.0, 40.0]), 431.5).t_hat == 431.5


def test_two_errors_example():
    state = run([10.0, -10.0])
    assert (state.m, state.mean_err, state.m2) == (2, 0.0, 200.0)
    # Two-pass oracle: sample SD of {10, -10}, inflated by sqrt(1 + 1/2).
    s = statistics.stdev([10.0, -10.0])
    assert s == pytest.approx(14.142135623730951, rel=1e-12)
    assert predict_residual(state, 0.0).sigma == pytest.approx(s * math.sqrt(1.5), rel=1e-12)
    assert predict_residual(state, 0.0).sigma == pytest.approx(17.320508075688775, rel=1e-12)


def test_single_update():
    assert run([10.0]) == ResidualState(1, 10.0, 0.0)


def test_invalid_state_rejected():
    with pytest.raises(ValueError):
        ResidualState(0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ResidualState(2, 0.0, -1.0)
    with pytest.raises(ValueError):
        update_residual(ResidualState(), float("nan"))


errors = st.lists(st.floats(-600, 600, allow_nan=False), min_size=2, max_size=200)


@given(errors)
def test_online_sd_matches_two_pass(errs):
    s = run(errs).sd
    oracle = statistics.stdev(errs)
    assert s == pytest.approx(oracle, rel=1e-9, abs=1e-9)


@given(errors, st.randoms(use_true_random=False))
def test_permutation_invariance(errs, rnd):
    shuffled = list(errs)
    rnd.shuffle(shuffled)
    a, b = run(errs), run(shuffled)
    assert a.m == b.m
    assert a.mean_err == pytest.approx(b.mean_err, abs=1e-9)
    assert a.m2 == pytest.approx(b.m2, rel=1e-9, abs=1e-6)


def test_inflation_factor_decreases_with_m():
    factors = [math.sqrt(1 + 1 / m) for m in range(2, 50)]
    assert all(a > b for a, b in zip(factors, factors[1:]))


def test_replay_keeps_slot_streams_separate():
    # Morning errors are tiny, evening errors large.
    times = {}
    for d in range(6):
        times[(d, "morning")] = 450.0 + (1 if d % 2 else -1)
        times[(d, "evening")] = 1260.0 + (60 if d % 2 else -60)
    p = make_participant("A", times)
    cells = list(replay_participant(p, anchor=0, n_days=6))
    morning = [pred.sigma for day, slot, _, pred in cells if slot is SlotKind.MORNING]
    evening = [pred.sigma for day, slot, _, pred in cells if slot is SlotKind.EVENING]
    assert morning[:2] == [0.0, 0.0] and evening[:2] == [0.0, 0.0]
    assert max(morning) < 5 < 50 < min(evening[2:])


def test_replay_skips_intervened_errors():
    times = {(d, "morning"): 450.0 + 10 * d for d in range(5)}
    p = make_participant("A", times, intervened={(0, "morning"), (1, "morning")})
    cells = [pred.sigma for _, slot, _, pred in replay_participant(p, 0, 5) if slot is SlotKind.MORNING]
    # Errors from days 2 and 3 only become usable at day 4.
    assert cells == [0.0, 0.0, 0.0, 0.0, pytest.approx(statistics.stdev([20, 30]) * math.sqrt(1.5))]


def test_sigma_is_computed_before_the_event():
    times = {(d, "morning"): 450.0 + e for d, e in enumerate([5.0, -5.0, 100.0])}
    p = make_participant("A", times)
    sig = [pred.sigma for _, slot, _, pred in replay_participant(p, 0, 3) if slot is SlotKind.MORNING]
    # Day 2 must not see its own error of 100.
    assert sig[2] == pytest.approx(np.std([5.0, -5.0], ddof=1) * math.sqrt(1.5))

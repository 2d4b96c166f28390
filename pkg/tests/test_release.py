import numpy as np
import pytest
from hypothesis import given, strategies as st

from aerothrow.errors import InvalidInputError
from aerothrow.projectile import ReleaseState, landing_error
from aerothrow.release import (NominalTrigger, ReleaseDecision, nominal_trigger, predicted_landing_errors,
                               reassess)

DT, H = 0.02, 0.5


def test_strictly_decreasing_errors_push_release_later():
    d = reassess(ReleaseDecision(1.0), np.linspace(1.0, 0.1, 25), 1.0, DT, H)
    assert d.k_star == 25 and not d.triggered
    assert d.t_r_current == pytest.approx(1.0 + 25 * DT)


def test_interior_minimum():
    errs = [0.30, 0.12, 0.05, 0.11, 0.2, 0.4]
    d = reassess(ReleaseDecision(1.0), errs, 1.0, DT, H)
    assert d.k_star == 3 and not d.triggered
    assert d.t_r_current == pytest.approx(1.0 + 3 * DT)
    assert np.array_equal(d.error_sequence, errs)


def test_minimum_at_first_element_triggers():
    d = reassess(ReleaseDecision(1.0), [0.01, 0.2, 0.3], 1.0, DT, H)
    assert d.triggered and d.k_star == 1 and d.trigger_time == 1.0
    assert 1.0 <= d.t_r_current <= 1.0 + DT + 1e-12


def test_ties_break_toward_earliest():
    d = reassess(ReleaseDecision(1.0), [0.3, 0.1, 0.1, 0.1], 1.0, DT, H)
    assert d.k_star == 2


def test_inactive_outside_window_and_noop_on_all_infinite():
    d = reassess(ReleaseDecision(2.0), [0.0, 1.0], 1.0, DT, H)
    assert d.t_r_current == 2.0 and d.k_star == -1
    d = reassess(ReleaseDecision(1.0), [np.inf, np.inf], 1.0, DT, H)
    assert d.t_r_current == 1.0 and not d.triggered


def test_infinite_sentinel_is_skipped():
    d = reassess(ReleaseDecision(1.0), [np.inf, 0.4, 0.2, np.inf], 1.0, DT, H)
    assert d.k_star == 3


def test_delay_compensation_triggers_early():
    errs = [0.3, 0.2, 0.05, 0.2]
    assert not reassess(ReleaseDecision(1.0), errs, 1.0, DT, H).triggered
    d = reassess(ReleaseDecision(1.0), errs, 1.0, DT, H, delay=0.06)
    assert d.triggered and d.t_r_current == pytest.approx(1.0 + 3 * DT)


@given(st.lists(st.lists(st.floats(0, 5), min_size=1, max_size=30), min_size=1, max_size=40))
def test_latch_and_never_in_the_past(seqs):
    d = ReleaseDecision(0.0)
    t = 0.0
    fired_at = None
    for errs in seqs:
        before = (d.t_r_current, d.k_star)
        d = reassess(d, errs, t, DT, H)
        if fired_at is not None:
            assert (d.t_r_current, d.k_star) == before
        else:
            assert d.t_r_current >= t or abs(d.t_r_current - t) > H
            if d.triggered:
                fired_at = t
        t += DT


def test_reassess_is_deterministic():
    rng = np.random.default_rng(0)
    errs = rng.uniform(0, 1, 25)
    a = reassess(ReleaseDecision(1.0), errs, 1.0, DT, H)
    b = reassess(ReleaseDecision(1.0), errs.copy(), 1.0, DT, H)
    assert (a.k_star, a.t_r_current, a.triggered) == (b.k_star, b.t_r_current, b.triggered)


def test_nominal_trigger_is_one_shot():
    trig = NominalTrigger(1.0)
    ticks = np.round(np.arange(0.9, 1.2, DT), 10)
    fired = [trig(t) for t in ticks]
    assert sum(fired) == 1
    assert ticks[fired.index(True)] == pytest.approx(1.0)
    assert not nominal_trigger(0.99, 1.0, DT)
    assert nominal_trigger(1.01, 1.0, DT)
    assert not nominal_trigger(1.03, 1.0, DT, already_fired=True)


def test_predicted_errors_sentinel_and_empty_input():
    P = np.array([[0, 0, 1.0], [0, 0, -0.3]])
    V = np.array([[0, 0, 0.0], [0, 0, -1.0]])
    e = predicted_landing_errors(P, V, [0, 0, 0])
    assert e[0] == 0.0 and e[1] == np.inf
    with pytest.raises(InvalidInputError):
        predicted_landing_errors(np.zeros((0, 3)), np.zeros((0, 3)), [0, 0, 0])


def test_trigger_converges_to_true_best_instant_on_exact_predictions():
    """Fly a known pass, feed exact predictions each tick and compare with dense brute force."""
    target = np.array([2.63, 0.3, 0.0])
    pos = lambda t: np.array([2.0 * t - 0.4, 0.25 * t * t, 1.25 + 0.1 * t])
    vel = lambda t: np.array([2.0, 0.5 * t, 0.1])
    N = 25
    d = ReleaseDecision(1.0)
    t = 0.6
    while not d.triggered:
        ks = t + DT * np.arange(1, N + 1)
        errs = predicted_landing_errors(np.array([pos(s) for s in ks]), np.array([vel(s) for s in ks]), target)
        d = reassess(d, errs, t, DT, H)
        t = round(t + DT, 12)
    dense = np.linspace(0.6, 1.6, 100001)
    best = dense[np.argmin([landing_error(ReleaseState(pos(s), vel(s)), target) for s in dense])]
    assert 0.7 < best < 1.4
    assert abs(d.t_r_current - best) <= DT

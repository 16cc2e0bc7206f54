import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svodrive.errors import NegativeVelocity, PhiOutOfRange
from svodrive.svo import joint_optimal_svo, optimal_svo, outcome, utility


def grid_argmax(u_self, u_other, step=1e-5):
    """Brute-force maximizer of the SVO utility over [0, pi/2]."""
    phi = np.arange(0.0, math.pi / 2 + step, step)
    phi = phi[phi <= math.pi / 2]
    vals = u_self * np.cos(phi) + u_other * np.sin(phi)
    return phi[np.argmax(vals)], vals.max()


def test_outcome_examples():
    assert outcome(10, 20) == 0.5
    assert outcome(0, 7) == 0.0


def test_outcome_distance_floor():
    unfloored = 5 / 0.05
    assert unfloored == pytest.approx(100.0)
    assert outcome(5, 0.05) == pytest.approx(5 / 0.1)
    assert outcome(5, -3.0) == pytest.approx(50.0)


def test_outcome_rejects_negative_velocity():
    with pytest.raises(NegativeVelocity):
        outcome(-1.0, 5.0)


def test_utility_examples():
    assert utility(1, 0, 0) == 1
    assert utility(1, 1, math.pi / 4) == pytest.approx(math.sqrt(2), abs=1e-6)
    _, best = grid_argmax(2.0, 1.0)
    assert utility(2, 1, math.atan(0.5)) == pytest.approx(best, abs=1e-9)
    assert best == pytest.approx(math.sqrt(5), abs=1e-9)


@pytest.mark.parametrize("phi", [-0.01, math.pi / 2 + 1e-6, 3.0])
def test_utility_rejects_out_of_range(phi):
    with pytest.raises(PhiOutOfRange):
        utility(1, 1, phi)


def test_optimal_svo_examples():
    assert optimal_svo(1, 1) == pytest.approx(math.pi / 4)
    assert optimal_svo(1, 0) == 0.0
    assert optimal_svo(0, 1) == pytest.approx(math.pi / 2)
    oracle, _ = grid_argmax(2.0, 1.0)
    assert oracle == pytest.approx(0.463648, abs=1e-5)
    assert optimal_svo(2, 1) == pytest.approx(oracle, abs=1e-4)


def test_optimal_svo_neutral_when_both_outcomes_vanish():
    assert optimal_svo(0.0, 0.0) == pytest.approx(math.pi / 4)


def test_joint_optimal_svo_examples():
    assert joint_optimal_svo(5, 10, 5, 10) == pytest.approx((math.pi / 4, math.pi / 4))
    phi_e, phi_o = joint_optimal_svo(0.0, 10.0, 4.0, 8.0)
    assert phi_e == pytest.approx(math.pi / 2) and phi_o == 0.0
    oracle, _ = grid_argmax(8 / 4, 2 / 2)
    assert joint_optimal_svo(8, 4, 2, 2)[0] == pytest.approx(oracle, abs=1e-4)


def test_joint_optimal_svo_propagates_negative_velocity():
    with pytest.raises(NegativeVelocity):
        joint_optimal_svo(1.0, 5.0, -0.5, 5.0)


outcomes = st.floats(min_value=0.0, max_value=1e3, allow_nan=False)


@given(outcomes, outcomes, st.floats(min_value=1e-3, max_value=1e3))
def test_common_scaling_leaves_svo_unchanged(u, uh, k):
    assert optimal_svo(k * u, k * uh) == pytest.approx(optimal_svo(u, uh), abs=1e-12)


@given(outcomes, outcomes, st.floats(min_value=0.0, max_value=math.pi / 2))
def test_optimum_dominates_any_angle(u, uh, phi):
    best = utility(u, uh, optimal_svo(u, uh))
    assert best >= utility(u, uh, phi) - 1e-9 * max(1.0, best)


@given(outcomes, outcomes)
def test_range_and_closed_form(u, uh):
    phi = optimal_svo(u, uh)
    assert 0.0 <= phi <= math.pi / 2
    assert utility(u, uh, phi) == pytest.approx(math.hypot(u, uh), rel=1e-9, abs=1e-300)


@settings(max_examples=50)
@given(st.floats(0, 20), st.floats(0.5, 80), st.floats(0, 20), st.floats(0.5, 80))
def test_other_vehicle_svo_is_complement(v, d, vh, dh):
    phi_e, phi_o = joint_optimal_svo(v, d, vh, dh)
    assert phi_e + phi_o == pytest.approx(math.pi / 2, abs=1e-12)

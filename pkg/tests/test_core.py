import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdcast import (EPS, InvalidWeights, ObservationWindow, ParamSet,
                       PredictorConfig, SceneHistory, WindowTooShort,
                       desired_speed, finite_velocity, step_speeds,
                       wrap_angle)
from conftest import history_of, straight_track, straight_window


# ----------------------------------------------------------------- angles

def test_wrap_angle_known_values():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(-3 * math.pi / 2) == pytest.approx(math.pi / 2)
    assert wrap_angle(5 * math.pi) == pytest.approx(math.pi)


@given(st.floats(-50.0, 50.0))
def test_wrap_angle_range_and_congruence(theta):
    w = wrap_angle(theta)
    assert -math.pi < w <= math.pi
    # congruent mod 2*pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-9)


# --------------------------------------------------------------- ParamSet

def test_paramset_validation():
    ParamSet(1, 1, 1, 1, 1, 1, 2.0, 1.0)
    with pytest.raises(ValueError):
        ParamSet(-0.1, 1, 1, 1, 1, 1, 2.0, 1.0)
    with pytest.raises(ValueError):
        ParamSet(1, 1, 1, 1, 1, 1, 0.0, 0.0)
    with pytest.raises(ValueError):
        ParamSet(1, 1, 1, 1, 1, 1, 2.0, 2.0)  # alpha must stay below d
    with pytest.raises(ValueError):
        ParamSet(1, 1, 1, 1, 1, -1e-9, 2.0, 0.0)


def test_paramset_vector_round_trip():
    p = ParamSet(0.5, 1.5, 2.5, 3.5, 4.5, 0.25, 3.0, 1.25)
    q = ParamSet.from_vector(p.as_vector())
    assert np.array_equal(p.as_vector(), q.as_vector())


def test_paramset_from_vector_clamps_alpha():
    p = ParamSet.from_vector([1, 1, 1, 1, 1, 1, 2.0, 9.0])
    assert 0.0 <= p.alpha < p.d
    p = ParamSet.from_vector([1, 1, 1, 1, 1, 1, 2.0, -3.0])
    assert p.alpha == 0.0
    with pytest.raises(ValueError):
        ParamSet.from_vector([1, 2, 3])


# ---------------------------------------------------------------- config

def test_config_defaults_valid():
    cfg = PredictorConfig()
    assert cfg.obs_len == 8 and cfg.pred_len == 12
    assert cfg.issue_stride == 8
    assert PredictorConfig(stride=3).issue_stride == 3


@pytest.mark.parametrize("kwargs", [
    dict(obs_len=1),
    dict(pred_len=0),
    dict(dt=0.0),
    dict(eta=1.5),
    dict(n_headings=4),        # must be odd
    dict(n_headings=0),
    dict(heading_step=0.0),
    dict(v_bound=0.0),
    dict(stride=0),
    dict(min_obs=0),
    dict(rng_seed=-1),
    dict(n_v_salps=0),
    dict(speed_weights=(0.5, -0.5)),
    dict(theta_lo=(0,) * 7),
])
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        PredictorConfig(**kwargs)


# ---------------------------------------------------------------- window

def test_window_invariants():
    w = straight_window(n=4)
    assert len(w) == 4
    assert w.issue_frame == 3
    assert np.allclose(w.last_position, [3 * 0.4, 0.0])
    with pytest.raises(ValueError):
        ObservationWindow(1, (0, 2), np.zeros((2, 2)), 0.4)  # gap
    with pytest.raises(ValueError):
        ObservationWindow(1, (0, 1), np.zeros((3, 2)), 0.4)  # length clash
    with pytest.raises(ValueError):
        ObservationWindow(1, (), np.zeros((0, 2)), 0.4)
    with pytest.raises(ValueError):
        ObservationWindow(1, (0,), np.zeros((1, 2)), 0.0)


def test_finite_velocity_and_speeds():
    w = straight_window(vel=(1.5, -0.5), n=5, dt=0.4)
    v = finite_velocity(w, 1)
    assert np.allclose(v, [1.5, -0.5])
    assert np.allclose(step_speeds(w), [math.hypot(1.5, 0.5)] * 4)
    with pytest.raises(WindowTooShort):
        finite_velocity(w, 0)
    with pytest.raises(WindowTooShort):
        finite_velocity(w, 5)
    single = ObservationWindow(1, (0,), np.zeros((1, 2)), 0.4)
    with pytest.raises(WindowTooShort):
        step_speeds(single)


def test_desired_speed_uniform_and_weighted():
    # speeds 1, 2, 3 over three steps
    pos = np.array([[0, 0], [0.4, 0], [1.2, 0], [2.4, 0]])
    w = ObservationWindow(1, (0, 1, 2, 3), pos, 0.4)
    assert desired_speed(w) == pytest.approx(2.0)
    assert desired_speed(w, (0.2, 0.3, 0.5)) == pytest.approx(
        0.2 * 1 + 0.3 * 2 + 0.5 * 3)
    with pytest.raises(InvalidWeights):
        desired_speed(w, (0.5, 0.5))            # wrong length
    with pytest.raises(InvalidWeights):
        desired_speed(w, (0.5, 0.4, 0.2))       # does not sum to 1
    with pytest.raises(InvalidWeights):
        desired_speed(w, (1.0, 0.5, -0.5))      # nonpositive entry


# --------------------------------------------------------------- history

def test_history_velocities_and_lookup():
    frames, pos = straight_track([0, 0], [1, 0], 5)
    hist = history_of({7: (frames, pos)})
    p0, v0 = hist.state_of(7, 0)
    assert np.allclose(v0, [0, 0])          # first appearance
    p2, v2 = hist.state_of(7, 2)
    assert np.allclose(v2, [1, 0])
    assert hist.state_of(7, 99) is None
    assert hist.agents_at(3) == [7]
    assert hist.agents_at(42) == []


def test_history_up_to_hides_future():
    frames, pos = straight_track([0, 0], [1, 0], 10)
    hist = history_of({1: (frames, pos)})
    early = hist.up_to(4)
    assert max(early.frame_ids) == 4
    assert early.state_of(1, 5) is None


def test_window_of_suffix_semantics():
    # agent leaves and returns: 0..3 then 6..9
    pos = np.zeros((8, 2))
    pos[:, 0] = np.arange(8)
    hist = history_of({1: ([0, 1, 2, 3, 6, 7, 8, 9], pos)})
    w = hist.window_of(1, 9, max_len=8)
    assert w.frames == (6, 7, 8, 9)         # stops at the gap
    assert np.allclose(w.positions[:, 0], [4, 5, 6, 7])
    w = hist.window_of(1, 3, max_len=2)
    assert w.frames == (2, 3)               # capped at max_len
    assert hist.window_of(1, 5, max_len=8) is None
    assert hist.window_of(2, 9, max_len=8) is None


def test_history_gap_velocity_is_zero():
    pos = np.zeros((5, 2))
    pos[:, 0] = [0, 1, 2, 10, 11]
    hist = history_of({1: ([0, 1, 2, 7, 8], pos)}, dt=0.5)
    _, v = hist.state_of(1, 7)
    assert np.allclose(v, [0, 0])           # re-entry, no previous frame
    _, v = hist.state_of(1, 8)
    assert np.allclose(v, [2.0, 0])


def test_history_rejects_duplicate_frames():
    from crowdcast import SceneFrame
    f = SceneFrame(0, {1: (np.zeros(2), np.zeros(2))})
    with pytest.raises(ValueError):
        SceneHistory([f, f], 0.4)

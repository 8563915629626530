"""Shared builders for the test suite."""

import numpy as np

from crowdcast import ObservationWindow, SceneHistory


def straight_window(agent_id=1, start=(0.0, 0.0), vel=(1.0, 0.0), n=8,
                    dt=0.4, first_frame=0):
    """Window of a constant-velocity walker."""
    start = np.asarray(start, dtype=np.float64)
    vel = np.asarray(vel, dtype=np.float64)
    pos = start + np.arange(n)[:, None] * vel * dt
    frames = tuple(range(first_frame, first_frame + n))
    return ObservationWindow(agent_id, frames, pos, dt)


def straight_track(start, vel, n, dt=0.4, first_frame=0):
    """(frames, positions) of a constant-velocity walker."""
    start = np.asarray(start, dtype=np.float64)
    vel = np.asarray(vel, dtype=np.float64)
    frames = list(range(first_frame, first_frame + n))
    return frames, start + np.arange(n)[:, None] * vel * dt


def history_of(tracks, dt=0.4, obstacles=None):
    return SceneHistory.from_tracks(tracks, dt, obstacles)

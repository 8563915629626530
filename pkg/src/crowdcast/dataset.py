"""Trajectory file loading and the prediction issue stream.

Two text formats are supported. The native format is one observation
per line, whitespace separated: frame, agent id, x, y. The obsmat
format is the eight-column layout common to public pedestrian
benchmarks (frame, id, x, z, y, vx, vz, vy); only frame, id, x and y
are retained. Both accept an optional header line and '#' comments.

frame_stride divides raw frame numbers so consecutive retained frames
sit exactly dt seconds apart, e.g. stride 10 for material annotated
every 10 video frames at 0.4 s intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .core import ObservationWindow, PredictorConfig, SceneHistory
from .errors import DuplicateRecord, ParseError


@dataclass(frozen=True)
class TrajectoryTable:
    """Per-agent observed tracks in resampled frame units."""

    tracks: Dict[int, Tuple[np.ndarray, np.ndarray]]  # id -> (frames, (n,2))

    @property
    def agent_ids(self) -> List[int]:
        return sorted(self.tracks)

    @property
    def frame_range(self) -> Tuple[int, int]:
        lo = min(int(f[0]) for f, _ in self.tracks.values())
        hi = max(int(f[-1]) for f, _ in self.tracks.values())
        return lo, hi

    def lookup(self, agent_id: int, frame: int) -> Optional[np.ndarray]:
        """Position of an agent at a frame, or None."""
        track = self.tracks.get(agent_id)
        if track is None:
            return None
        frames, pos = track
        i = np.searchsorted(frames, frame)
        if i < frames.size and frames[i] == frame:
            return pos[i]
        return None

    def to_history(self, dt: float, obstacles=None) -> SceneHistory:
        return SceneHistory.from_tracks(
            {a: (f.tolist(), p) for a, (f, p) in self.tracks.items()},
            dt, obstacles)


def _data_lines(path) -> Iterator[Tuple[int, List[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, stripped.split()


def _is_header(tokens: List[str]) -> bool:
    for tok in tokens:
        try:
            float(tok)
        except ValueError:
            return True
    return False


def _build_table(rows: List[Tuple[int, int, float, float]],
                 frame_stride: int, lineno_of) -> TrajectoryTable:
    seen = {}
    for idx, (frame, agent, x, y) in enumerate(rows):
        if frame % frame_stride != 0:
            raise ParseError(
                "frame %d not divisible by stride %d" % (frame, frame_stride),
                line=lineno_of(idx))
        key = (frame // frame_stride, agent)
        if key in seen:
            raise DuplicateRecord(
                "agent %d appears twice at frame %d" % (agent, key[0]))
        seen[key] = (x, y)
    per_agent: Dict[int, List[Tuple[int, float, float]]] = {}
    for (frame, agent), (x, y) in seen.items():
        per_agent.setdefault(agent, []).append((frame, x, y))
    tracks = {}
    for agent, items in per_agent.items():
        items.sort()
        frames = np.array([it[0] for it in items], dtype=np.int64)
        pos = np.array([[it[1], it[2]] for it in items], dtype=np.float64)
        tracks[agent] = (frames, pos)
    return TrajectoryTable(tracks)


def _load_columns(path, n_cols: int, picks: Tuple[int, int, int, int],
                  frame_stride: int) -> TrajectoryTable:
    if frame_stride < 1:
        raise ValueError("frame_stride must be >= 1")
    rows = []
    linenos = []
    first = True
    for lineno, tokens in _data_lines(path):
        if first and _is_header(tokens):
            first = False
            continue
        first = False
        if len(tokens) != n_cols:
            raise ParseError(
                "expected %d columns, got %d" % (n_cols, len(tokens)),
                line=lineno)
        try:
            vals = [float(tokens[i]) for i in picks]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        frame_f, agent_f, x, y = vals
        if not all(np.isfinite(v) for v in vals):
            raise ParseError("non-finite value", line=lineno)
        if frame_f != int(frame_f) or agent_f != int(agent_f):
            raise ParseError("frame and id must be integers", line=lineno)
        rows.append((int(frame_f), int(agent_f), x, y))
        linenos.append(lineno)
    if not rows:
        raise ParseError("no data rows in %s" % path)
    return _build_table(rows, frame_stride, lambda i: linenos[i])


def load_tsv(path, frame_stride: int = 1) -> TrajectoryTable:
    """Load the native four-column format: frame, id, x, y."""
    return _load_columns(path, 4, (0, 1, 2, 3), frame_stride)


def load_obsmat(path, frame_stride: int = 1) -> TrajectoryTable:
    """Load the eight-column obsmat format, keeping frame, id, x, y."""
    return _load_columns(path, 8, (0, 1, 2, 4), frame_stride)


def load_trajectories(path, fmt: str = "tsv",
                      frame_stride: int = 1) -> TrajectoryTable:
    if fmt == "tsv":
        return load_tsv(path, frame_stride)
    if fmt == "obsmat":
        return load_obsmat(path, frame_stride)
    raise ValueError("unknown format %r" % fmt)


def load_obstacles(path) -> np.ndarray:
    """Load static obstacle points, one 'x y' pair per line."""
    pts = []
    for lineno, tokens in _data_lines(path):
        if len(tokens) != 2:
            raise ParseError("expected 2 columns, got %d" % len(tokens),
                             line=lineno)
        try:
            pts.append([float(tokens[0]), float(tokens[1])])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return np.array(pts, dtype=np.float64).reshape(-1, 2)


def window_stream(table: TrajectoryTable, cfg: PredictorConfig,
                  obstacles=None):
    """Yield (issue frame, windows, history) at stride-spaced frames.

    Issue frames start once a full window fits after the dataset's
    first frame and advance by cfg.issue_stride. Windows cover every
    agent present at the issue frame, each holding that agent's
    contiguous observation suffix (at most obs_len frames); the
    history never extends past the issue frame.
    """
    if not table.tracks:
        return
    full = table.to_history(cfg.dt, obstacles)
    lo, hi = table.frame_range
    t = lo + cfg.obs_len - 1
    while t <= hi:
        hist = full.up_to(t)
        windows = [hist.window_of(a, t, cfg.obs_len)
                   for a in hist.agents_at(t)]
        if windows:
            yield t, windows, hist
        t += cfg.issue_stride

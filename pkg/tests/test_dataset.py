import numpy as np
import pytest

from crowdcast import (DuplicateRecord, ParseError, PredictorConfig,
                       TrajectoryTable, load_obsmat, load_obstacles,
                       load_trajectories, load_tsv, window_stream)


def write(tmp_path, text, name="data.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ------------------------------------------------------------- native tsv

def test_load_tsv_round_trip(tmp_path):
    p = write(tmp_path, """\
# walking pair
frame id x y
0 1 0.0 0.0
1 1 0.4 0.0

1 2 5.0 5.0
# late line for agent 2
2 2 5.0 5.4
2 1 0.8 0.0
""")
    table = load_tsv(p)
    assert table.agent_ids == [1, 2]
    assert table.frame_range == (0, 2)
    f1, p1 = table.tracks[1]
    np.testing.assert_array_equal(f1, [0, 1, 2])
    np.testing.assert_allclose(p1, [[0, 0], [0.4, 0], [0.8, 0]])
    np.testing.assert_allclose(table.lookup(2, 2), [5.0, 5.4])
    assert table.lookup(2, 0) is None
    assert table.lookup(9, 1) is None


def test_load_tsv_without_header(tmp_path):
    p = write(tmp_path, "0 1 1.0 2.0\n1 1 1.5 2.0\n")
    table = load_tsv(p)
    np.testing.assert_allclose(table.lookup(1, 0), [1.0, 2.0])


def test_frame_stride_rebases_frames(tmp_path):
    p = write(tmp_path, "0 1 0 0\n10 1 1 0\n20 1 2 0\n")
    table = load_tsv(p, frame_stride=10)
    np.testing.assert_array_equal(table.tracks[1][0], [0, 1, 2])
    assert table.frame_range == (0, 2)


def test_frame_stride_rejects_offgrid_frames(tmp_path):
    p = write(tmp_path, "0 1 0 0\n15 1 1 0\n")
    with pytest.raises(ParseError) as exc:
        load_tsv(p, frame_stride=10)
    assert exc.value.line == 2
    with pytest.raises(ValueError):
        load_tsv(p, frame_stride=0)


@pytest.mark.parametrize("body,bad_line", [
    ("0 1 0.0 0.0\n1 1 0.4\n", 2),                  # missing column
    ("0 1 0.0 0.0\n1 oops 0.4 0.0\n", 2),           # non-numeric id
    ("0 1 0.0 0.0\n1 1 nan 0.0\n", 2),              # non-finite
    ("0 1 0.0 0.0\n1.5 1 0.4 0.0\n", 2),            # fractional frame
    ("0 1.2 0.0 0.0\n", 1),                         # fractional id
])
def test_load_tsv_parse_errors(tmp_path, body, bad_line):
    p = write(tmp_path, body)
    with pytest.raises(ParseError) as exc:
        load_tsv(p)
    assert exc.value.line == bad_line


def test_load_tsv_empty_file(tmp_path):
    p = write(tmp_path, "# nothing here\n\n")
    with pytest.raises(ParseError):
        load_tsv(p)


def test_duplicate_cell_rejected(tmp_path):
    p = write(tmp_path, "0 1 0 0\n1 1 1 0\n1 1 1.5 0\n")
    with pytest.raises(DuplicateRecord):
        load_tsv(p)


# ----------------------------------------------------------------- obsmat

def test_load_obsmat_picks_columns(tmp_path):
    # frame id x z y vx vz vy: z and the velocities are discarded.
    p = write(tmp_path, """\
0 3 1.0 99.0 2.0 0.5 99.0 0.0
10 3 1.5 99.0 2.0 0.5 99.0 0.0
""")
    table = load_obsmat(p, frame_stride=10)
    np.testing.assert_allclose(table.lookup(3, 0), [1.0, 2.0])
    np.testing.assert_allclose(table.lookup(3, 1), [1.5, 2.0])


def test_load_obsmat_column_count(tmp_path):
    p = write(tmp_path, "0 3 1.0 99.0 2.0 0.5\n")
    with pytest.raises(ParseError):
        load_obsmat(p)


def test_load_trajectories_dispatch(tmp_path):
    tsv = write(tmp_path, "0 1 0 0\n", name="a.txt")
    assert load_trajectories(tsv, "tsv").agent_ids == [1]
    with pytest.raises(ValueError):
        load_trajectories(tsv, "csv")


# -------------------------------------------------------------- obstacles

def test_load_obstacles(tmp_path):
    p = write(tmp_path, "# wall\n1.0 2.0\n3.0 -4.0\n")
    pts = load_obstacles(p)
    np.testing.assert_allclose(pts, [[1.0, 2.0], [3.0, -4.0]])
    empty = load_obstacles(write(tmp_path, "# nothing\n", name="e.txt"))
    assert empty.shape == (0, 2)
    with pytest.raises(ParseError):
        load_obstacles(write(tmp_path, "1.0 2.0 3.0\n", name="bad.txt"))


# ---------------------------------------------------------------- history

def test_to_history_velocities(tmp_path):
    p = write(tmp_path, "0 1 0.0 0.0\n1 1 0.4 0.0\n2 1 0.8 0.0\n")
    hist = load_tsv(p).to_history(dt=0.4)
    pos, vel = hist.state_of(1, 2)
    np.testing.assert_allclose(pos, [0.8, 0.0])
    np.testing.assert_allclose(vel, [1.0, 0.0])
    np.testing.assert_allclose(hist.state_of(1, 0)[1], [0.0, 0.0])


# ------------------------------------------------------------ issue stream

def stream_table(rows):
    frames = {}
    for frame, agent, x, y in rows:
        frames.setdefault(agent, []).append((frame, x, y))
    tracks = {}
    for agent, items in frames.items():
        items.sort()
        tracks[agent] = (np.array([i[0] for i in items], dtype=np.int64),
                         np.array([[i[1], i[2]] for i in items]))
    return TrajectoryTable(tracks)


def full_walk(agent, first, n, vx=1.0, y=0.0):
    return [(first + k, agent, vx * (first + k), y) for k in range(n)]


def test_window_stream_issue_arithmetic():
    table = stream_table(full_walk(1, 1, 20) + full_walk(2, 1, 20, y=3.0))
    cfg = PredictorConfig(obs_len=8)
    seen = list(window_stream(table, cfg))
    assert [t for t, _, _ in seen] == [8, 16]
    for t, windows, hist in seen:
        assert [w.agent_id for w in windows] == [1, 2]
        assert all(len(w) == 8 for w in windows)
        assert all(w.issue_frame == t for w in windows)
        assert max(hist.frame_ids) == t


def test_window_stream_respects_stride_override():
    table = stream_table(full_walk(1, 0, 25))
    cfg = PredictorConfig(obs_len=8, stride=5)
    assert [t for t, _, _ in window_stream(table, cfg)] == [7, 12, 17, 22]


def test_window_stream_short_entrant():
    table = stream_table(full_walk(1, 1, 20) + full_walk(2, 14, 3, y=2.0))
    cfg = PredictorConfig(obs_len=8)
    seen = {t: windows for t, windows, _ in window_stream(table, cfg)}
    assert [w.agent_id for w in seen[8]] == [1]
    by_id = {w.agent_id: w for w in seen[16]}
    assert len(by_id[2]) == 3
    np.testing.assert_array_equal(by_id[2].frames, [14, 15, 16])


def test_window_stream_skips_empty_frames():
    table = stream_table(full_walk(1, 1, 7) + full_walk(2, 10, 11, y=1.0))
    cfg = PredictorConfig(obs_len=8)
    seen = list(window_stream(table, cfg))
    # Nobody is visible at frame 8; the stream resumes at 16.
    assert [t for t, _, _ in seen] == [16]
    assert [w.agent_id for w in seen[0][1]] == [2]


def test_window_stream_truncates_at_gaps():
    rows = full_walk(1, 1, 5) + full_walk(1, 8, 9)
    table = stream_table(rows)
    cfg = PredictorConfig(obs_len=12)
    seen = list(window_stream(table, cfg))
    assert [t for t, _, _ in seen] == [12]
    w = seen[0][1][0]
    np.testing.assert_array_equal(w.frames, range(8, 13))


def test_window_stream_empty_table():
    assert list(window_stream(TrajectoryTable({}), PredictorConfig())) == []


def test_window_stream_passes_obstacles():
    table = stream_table(full_walk(1, 1, 10))
    cfg = PredictorConfig(obs_len=8)
    walls = np.array([[5.0, 1.0]])
    for _, _, hist in window_stream(table, cfg, obstacles=walls):
        np.testing.assert_array_equal(hist.obstacles, walls)

"""Group division by discrete Frechet distance between observed paths.

Two agents whose observed polylines stay within a distance threshold of
each other (under the best monotone coupling) are linked; connected
components of the link graph with at least two members form groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import ObservationWindow, desired_speed
from .errors import EmptySequence

#: Similarity entry used when two windows share fewer than two frames.
#: Finite, but beyond any plausible grouping threshold.
NO_OVERLAP = 1e9


def discrete_frechet(path_a, path_b) -> float:
    """Discrete Frechet distance between two polylines.

    Dynamic program over the coupling lattice: entry (i, j) holds the
    cheapest achievable maximum pointwise distance for coupling the
    first i+1 and j+1 points, with moves (i-1,j), (i,j-1), (i-1,j-1).
    """
    a = np.asarray(path_a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(path_b, dtype=np.float64).reshape(-1, 2)
    n, m = a.shape[0], b.shape[0]
    if n == 0 or m == 0:
        raise EmptySequence("cannot compare an empty polyline")
    # Pairwise point distances, then the DP sweep.
    diff = a[:, None, :] - b[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    ca = np.empty((n, m))
    ca[0, 0] = dist[0, 0]
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], dist[0, j])
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], dist[i, 0])
        row = ca[i]
        prev = ca[i - 1]
        for j in range(1, m):
            reach = min(prev[j], prev[j - 1], row[j - 1])
            row[j] = reach if reach > dist[i, j] else dist[i, j]
    return float(ca[n - 1, m - 1])


def similarity_matrix(windows: Sequence[ObservationWindow]) -> np.ndarray:
    """Symmetric matrix of pairwise Frechet distances between windows.

    Each pair is compared on its overlapping frame range only, so a
    late entrant is judged against the frames it actually shares with
    the other agent. Pairs overlapping on fewer than two frames get the
    NO_OVERLAP sentinel and therefore never group. The diagonal is 0.
    """
    m = len(windows)
    sim = np.zeros((m, m))
    for i in range(m):
        wi = windows[i]
        fi = set(wi.frames)
        for j in range(i + 1, m):
            wj = windows[j]
            shared = sorted(fi.intersection(wj.frames))
            if len(shared) < 2:
                d = NO_OVERLAP
            else:
                ai = wi.positions[[wi.frames.index(f) for f in shared]]
                bj = wj.positions[[wj.frames.index(f) for f in shared]]
                d = discrete_frechet(ai, bj)
            sim[i, j] = sim[j, i] = d
    return sim


def binary_matrix(sim: np.ndarray, threshold: float) -> np.ndarray:
    """Link matrix: 1 where the pair distance is within threshold.

    The comparison is inclusive and the diagonal stays 0.
    """
    sim = np.asarray(sim, dtype=np.float64)
    b = (sim <= threshold).astype(np.int8)
    np.fill_diagonal(b, 0)
    return b


@dataclass(frozen=True)
class Group:
    group_id: int
    members: Tuple[int, ...]
    avg_speed: Optional[float] = None


@dataclass(frozen=True)
class GroupTable:
    """Group membership for one issue frame. Ungrouped agents appear
    in no entry; singleton components never form a group."""

    groups: Tuple[Group, ...]

    def group_of(self, agent_id: int) -> Optional[Group]:
        for g in self.groups:
            if agent_id in g.members:
                return g
        return None

    def companions(self, agent_id: int) -> Tuple[int, ...]:
        g = self.group_of(agent_id)
        if g is None:
            return ()
        return tuple(m for m in g.members if m != agent_id)


def divide_groups(b: np.ndarray, ids: Optional[Sequence[int]] = None) -> GroupTable:
    """Connected components of the link matrix, breadth first.

    Exploration starts from the lowest unvisited row; a component is a
    group only when it has at least two members. Member order follows
    discovery order. ids optionally relabels matrix rows.
    """
    b = np.asarray(b)
    m = b.shape[0]
    if b.shape != (m, m):
        raise ValueError("link matrix must be square")
    if ids is None:
        ids = list(range(m))
    if len(ids) != m:
        raise ValueError("ids must match the matrix size")
    pending = list(range(m))
    visited = [False] * m
    groups: List[Group] = []
    while pending:
        root = pending.pop(0)
        if visited[root]:
            continue
        visited[root] = True
        frontier = [j for j in range(m) if b[root, j] and not visited[j]]
        if not frontier:
            continue
        members = [root]
        for j in frontier:
            visited[j] = True
        members.extend(frontier)
        queue = list(frontier)
        while queue:
            cur = queue.pop(0)
            for j in range(m):
                if b[cur, j] and not visited[j]:
                    visited[j] = True
                    members.append(j)
                    queue.append(j)
        groups.append(Group(len(groups) + 1, tuple(ids[k] for k in members)))
    return GroupTable(tuple(groups))


def group_speeds(table: GroupTable, windows: Sequence[ObservationWindow],
                 weights=None) -> GroupTable:
    """Fill each group's average desired speed from its members' windows.

    weights follows desired_speed; None averages uniformly over each
    member's own step count. Members lacking a 2-frame window are
    skipped in the average.
    """
    by_id: Dict[int, ObservationWindow] = {w.agent_id: w for w in windows}
    filled = []
    for g in table.groups:
        speeds = []
        for member in g.members:
            w = by_id.get(member)
            if w is not None and len(w) >= 2:
                speeds.append(desired_speed(w, weights))
        avg = float(np.mean(speeds)) if speeds else None
        filled.append(Group(g.group_id, g.members, avg))
    return GroupTable(tuple(filled))

"""Displacement-error metrics over streams of issued forecasts.

Two aggregation rules are provided. The classic rule keeps only
forecasts whose agent stays observable for the whole horizon and
averages per step (ADE) and at the final step (FDE). The resampled
rule keeps every forecast with at least one comparable step, compares
each against the contiguous stretch of truth actually available, and
averages within an agent before averaging across agents, so
long-lived agents do not drown out brief ones.

Truth is supplied as a lookup callable (agent_id, frame) -> position
or None, which keeps the metrics independent of any file format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyEvaluation

TruthLookup = Callable[[int, int], Optional[np.ndarray]]


def _truth_path(truth: TruthLookup, agent_id: int, issue_frame: int,
                horizon: int) -> np.ndarray:
    """Contiguous truth positions after the issue frame, up to horizon."""
    rows = []
    for k in range(1, horizon + 1):
        p = truth(agent_id, issue_frame + k)
        if p is None:
            break
        rows.append(np.asarray(p, dtype=np.float64))
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def ade_fde(records: Sequence, truth: TruthLookup) -> Tuple[float, float]:
    """Average and final displacement error over full-truth forecasts.

    Forecasts whose agent leaves the scene before the horizon ends are
    dropped entirely. Raises EmptyEvaluation when nothing survives.
    """
    step_errors = []
    final_errors = []
    for rec in records:
        horizon = len(rec.predicted)
        actual = _truth_path(truth, rec.agent_id, rec.issue_frame, horizon)
        if len(actual) < horizon:
            continue
        err = np.linalg.norm(rec.predicted - actual, axis=1)
        step_errors.append(err)
        final_errors.append(err[-1])
    if not step_errors:
        raise EmptyEvaluation("no forecast has truth for the full horizon")
    ade = float(np.mean(np.concatenate(step_errors)))
    fde = float(np.mean(final_errors))
    return ade, fde


@dataclass(frozen=True)
class AgentEval:
    """Per-agent accumulation for the resampled metrics."""

    agent_id: int
    n_forecasts: int
    n_steps: int
    ade: float
    fde: float


@dataclass(frozen=True)
class EvalReport:
    ade: Optional[float]
    fde: Optional[float]
    ade2: float
    fde2: float
    n_eva: int
    n_full: int
    per_agent: Dict[int, AgentEval] = field(default_factory=dict)


def ade2_fde2(records: Sequence, truth: TruthLookup,
              min_obs: int = 1) -> EvalReport:
    """Resampled metrics tolerant of partially observed futures.

    A forecast enters the pool when its observation window holds at
    least min_obs frames and at least one truth frame follows the
    issue frame without a gap. Each surviving forecast is scored over
    its comparable stretch only; the final error is taken at the last
    comparable step and weighted by that stretch's length. Scores
    average per agent first (normalized by the agent's total compared
    length), then across the agents that kept at least one forecast.
    """
    if min_obs < 1:
        raise ValueError("min_obs must be >= 1")
    sums: Dict[int, List[float]] = {}
    for rec in records:
        if len(rec.window) < min_obs:
            continue
        horizon = len(rec.predicted)
        actual = _truth_path(truth, rec.agent_id, rec.issue_frame, horizon)
        n = len(actual)
        if n == 0:
            continue
        err = np.linalg.norm(rec.predicted[:n] - actual, axis=1)
        acc = sums.setdefault(rec.agent_id, [0, 0, 0.0, 0.0])
        acc[0] += 1
        acc[1] += n
        acc[2] += float(err.sum())
        acc[3] += n * float(err[-1])
    if not sums:
        raise EmptyEvaluation("no forecast has a comparable truth step")
    per_agent = {}
    for a, (k, steps, err_sum, fin_sum) in sorted(sums.items()):
        per_agent[a] = AgentEval(a, k, steps, err_sum / steps,
                                 fin_sum / steps)
    n_eva = len(per_agent)
    ade2 = float(np.mean([e.ade for e in per_agent.values()]))
    fde2 = float(np.mean([e.fde for e in per_agent.values()]))
    return EvalReport(None, None, ade2, fde2, n_eva, 0, per_agent)


def evaluate_records(records: Sequence, truth: TruthLookup,
                     min_obs: int = 1) -> EvalReport:
    """Both metric families over one record stream."""
    report = ade2_fde2(records, truth, min_obs)
    try:
        ade, fde = ade_fde(records, truth)
        n_full = sum(
            1 for rec in records
            if len(_truth_path(truth, rec.agent_id, rec.issue_frame,
                               len(rec.predicted))) == len(rec.predicted))
    except EmptyEvaluation:
        ade = fde = None
        n_full = 0
    return EvalReport(ade, fde, report.ade2, report.fde2,
                      report.n_eva, n_full, report.per_agent)

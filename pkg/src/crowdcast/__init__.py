"""Energy-based trajectory prediction for interacting agents.

The package forecasts every agent in a crowded scene a few seconds
ahead. Each agent minimizes a personal energy balancing momentum,
preferred speed, a target heading, group cohesion, and collision
avoidance; the weights are fitted online to the agent's own recent
motion, the heading is recovered by resampling the observed window
under candidate goals, and all agents then roll forward jointly.
"""

from .core import (EPS, ObservationWindow, ParamSet, PredictorConfig,
                   SceneFrame, SceneHistory, desired_speed, finite_velocity,
                   step_speeds, wrap_angle)
from .dataset import (TrajectoryTable, load_obsmat, load_obstacles,
                      load_trajectories, load_tsv, window_stream)
from .energy import (Destination, EnergyBreakdown, EnergyContext, Heading,
                     LegacyParamSet, ReducedEnergy, build_context,
                     collision_energy_new, collision_energy_original,
                     interaction_gain, reduce_context, total_energy)
from .errors import (CrowdcastError, DuplicateRecord, EmptyEvaluation,
                     EmptySequence, HeadingUndefined, InvalidWeights,
                     ParseError, PathLengthMismatch, WindowTooShort)
from .grouping import (Group, GroupTable, binary_matrix, discrete_frechet,
                       divide_groups, group_speeds, similarity_matrix)
from .heading import (HeadingCandidate, average_heading, estimate_target_heading,
                      heading_candidates, heading_cost, resample_path,
                      sample_headings)
from .metrics import (AgentEval, EvalReport, ade2_fde2, ade_fde,
                      evaluate_records)
from .optimizer import (GdSettings, ParamFit, Swarm, estimate_parameters,
                        estimate_velocity, gradient_descent, ssa_gd_minimize,
                        ssa_step, ssa_update)
from .pipeline import (FALLBACK_PARAMS, PredictionRecord, issue_windows,
                       linear_baseline, predict_scene, predict_stream,
                       rollout, scene_groups, stage_rng)

__version__ = "0.1.0"

__all__ = [
    "EPS", "ObservationWindow", "ParamSet", "PredictorConfig", "SceneFrame",
    "SceneHistory", "desired_speed", "finite_velocity", "step_speeds",
    "wrap_angle",
    "TrajectoryTable", "load_obsmat", "load_obstacles", "load_trajectories",
    "load_tsv", "window_stream",
    "Destination", "EnergyBreakdown", "EnergyContext", "Heading",
    "LegacyParamSet", "ReducedEnergy", "build_context",
    "collision_energy_new", "collision_energy_original", "interaction_gain",
    "reduce_context", "total_energy",
    "CrowdcastError", "DuplicateRecord", "EmptyEvaluation", "EmptySequence",
    "HeadingUndefined", "InvalidWeights", "ParseError", "PathLengthMismatch",
    "WindowTooShort",
    "Group", "GroupTable", "binary_matrix", "discrete_frechet",
    "divide_groups", "group_speeds", "similarity_matrix",
    "HeadingCandidate", "average_heading", "estimate_target_heading",
    "heading_candidates", "heading_cost", "resample_path", "sample_headings",
    "AgentEval", "EvalReport", "ade2_fde2", "ade_fde", "evaluate_records",
    "GdSettings", "ParamFit", "Swarm", "estimate_parameters",
    "estimate_velocity", "gradient_descent", "ssa_gd_minimize", "ssa_step",
    "ssa_update",
    "FALLBACK_PARAMS", "PredictionRecord", "issue_windows",
    "linear_baseline", "predict_scene", "predict_stream", "rollout",
    "scene_groups", "stage_rng",
    "__version__",
]

"""Plane-constrained sliding-window bundle adjustment."""
from .graph import FactorGraph, LmConfig, Observation, PlaneFactor
from .lm import IterationStats, SolveResult, lm_solve, solve_damped
from .localize import FrameResult, Localizer, LocalizerConfig, localize_frame
from .residuals import (
    Problem,
    VariableOrdering,
    apply_update,
    cost_breakdown,
    linearize,
    plane_residual,
    reprojection_residual,
    total_cost,
)
from .window import SlidingWindow, drop_frames, window_update

__all__ = [
    "FactorGraph", "LmConfig", "Observation", "PlaneFactor", "IterationStats", "SolveResult",
    "lm_solve", "solve_damped", "FrameResult", "Localizer", "LocalizerConfig", "localize_frame",
    "Problem", "VariableOrdering", "apply_update", "cost_breakdown", "linearize", "plane_residual",
    "reprojection_residual", "total_cost", "SlidingWindow", "drop_frames", "window_update",
]

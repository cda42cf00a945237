"""Simulation and extremal analysis of diagonal stochastic recurrence equations."""

__version__ = "0.1.0"

from .distributions import (  # noqa: E402
    AffineFactor,
    ChiSquare1,
    PointMass,
    StandardNormal,
    TabulatedPositive,
    abs_moment,
    log_moment,
    tilted_sample,
)
from .engine import DiagSREModel, TrajectoryStream, simulate  # noqa: E402
from .models import (  # noqa: E402
    block_partition,
    build_bekk,
    build_ccc_degenerate,
    build_ccc_general,
    figure_model,
    load_config,
)
from .tail_index import solve_alpha, solve_profile  # noqa: E402

__all__ = [
    "AffineFactor",
    "ChiSquare1",
    "DiagSREModel",
    "PointMass",
    "StandardNormal",
    "TabulatedPositive",
    "TrajectoryStream",
    "abs_moment",
    "block_partition",
    "build_bekk",
    "build_ccc_degenerate",
    "build_ccc_general",
    "figure_model",
    "load_config",
    "log_moment",
    "simulate",
    "solve_alpha",
    "solve_profile",
    "tilted_sample",
]

"""Moment analysis for ATC diffusion with leak and zero attractor."""

from .moments import expected_abs, expected_sign, gaussian_fourth_moment, sample_fourth_moment
from .recursion import (
    GlobalMoments,
    StackedOperators,
    TheoryError,
    TheoryTrace,
    mean_square_step,
    mean_step,
    transient,
    unvec,
    vec,
)
from .stability import StabilityBounds, is_stable, stability_bounds
from .steady_state import SteadyState, UnstableError, steady_state_msd, trace_via_vec

__all__ = [
    "GlobalMoments",
    "StabilityBounds",
    "StackedOperators",
    "SteadyState",
    "TheoryError",
    "TheoryTrace",
    "UnstableError",
    "expected_abs",
    "expected_sign",
    "gaussian_fourth_moment",
    "is_stable",
    "mean_square_step",
    "mean_step",
    "sample_fourth_moment",
    "stability_bounds",
    "steady_state_msd",
    "trace_via_vec",
    "transient",
    "unvec",
    "vec",
]

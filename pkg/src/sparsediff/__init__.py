"""Leaky and zero-attracting diffusion LMS: simulation, moment theory and experiments."""

__version__ = "0.1.0"

from .algorithms import (
    AlgorithmVariant,
    Attractor,
    DivergenceError,
    HyperParams,
    NetworkState,
    Strategy,
    TrialResult,
    TrialSpec,
    atc,
    atc_step,
    cta,
    cta_step,
    run_trial,
    simulate,
)
from .kernels import BACKEND
from .network import (
    CombinationMatrix,
    Topology,
    build_metropolis_combiner,
    build_uniform_combiner,
    random_geometric_topology,
    validate_combiner,
)
from .signal import RegressorStream, SignalProfile, SystemSchedule, generate_trial_data, sample_profile

__all__ = [
    "BACKEND",
    "AlgorithmVariant",
    "Attractor",
    "CombinationMatrix",
    "DivergenceError",
    "HyperParams",
    "NetworkState",
    "RegressorStream",
    "SignalProfile",
    "Strategy",
    "SystemSchedule",
    "Topology",
    "TrialResult",
    "TrialSpec",
    "atc",
    "atc_step",
    "build_metropolis_combiner",
    "build_uniform_combiner",
    "cta",
    "cta_step",
    "generate_trial_data",
    "random_geometric_topology",
    "run_trial",
    "sample_profile",
    "simulate",
    "validate_combiner",
]

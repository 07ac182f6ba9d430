"""Structured covariance estimation from array snapshots with missing entries.

The estimator alternates Gaussian conditioning (E-step) with a projection onto
a structured covariance set (M-step).  Around it sit MVDR beamforming, model
order selection and a convergence-rate analysis.
"""

from .beamforming import BeamformerWeights, adaptive_beamform, mvdr_weights, normalized_si
from .detection import PenaltyRule, detect_sources, eigen_statistic, penalty
from .em import (
    EmConfig,
    EmResult,
    conditional_moments,
    e_step,
    observed_fit_statistic,
    observed_log_likelihood,
    run_em,
)
from .mstep import ConstraintSet
from .scene import (
    ArrayGeometry,
    JammerSpec,
    MissingnessModel,
    SelectionPattern,
    SnapshotSet,
    SourceSpec,
    sample_snapshots,
    steering_vector,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "BeamformerWeights",
    "ConstraintSet",
    "EmConfig",
    "EmResult",
    "JammerSpec",
    "MissingnessModel",
    "PenaltyRule",
    "SelectionPattern",
    "SnapshotSet",
    "SourceSpec",
    "adaptive_beamform",
    "conditional_moments",
    "detect_sources",
    "e_step",
    "eigen_statistic",
    "mvdr_weights",
    "normalized_si",
    "observed_fit_statistic",
    "observed_log_likelihood",
    "penalty",
    "run_em",
    "sample_snapshots",
    "steering_vector",
]

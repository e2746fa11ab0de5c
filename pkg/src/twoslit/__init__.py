"""Entangled two-particle two-slit experiment: standard vs Bohmian predictions."""
from .core_state import ExperimentParams, PairConfiguration, Slit, Statistics, total_wavefunction
from .detection import (
    Bins,
    DetectionEvent,
    Histogram,
    SelectiveFilter,
    apply_selective_detection,
    bqm_ensemble,
    fringe_spacing,
    sqm_conditional_s2_density,
    sqm_joint_probability,
)
from .errors import ConfigParseError, PhysicsError, TwoSlitError
from .guidance import velocity_y
from .integrator import IntegratorSettings, Scheme, integrate_pair
from .sampler import SamplerMode, SamplerSpec, sample_pair

__version__ = "0.1.0"

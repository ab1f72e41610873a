"""Simulation and orientation optimization of rotatable coupler antennas.

An RCA is one RF-fed dipole surrounded by passive dipoles whose axes can be
rotated. Currents induced on the passive elements through mutual coupling
shape the radiated beam; :func:`optimize` picks the axes that maximize the
received SNR for a given multipath channel.
"""

from ._version import __version__
from .beamforming import Scenario, achievable_rate, beampattern, normalized_gain, objective, snr
from .channel import ChannelRealization, PathSpec
from .em_coupling import (ImpedanceMatrix, MutualImpedanceSolver, WireParameters, assemble_impedance_matrix,
                          mutual_impedance, self_impedance)
from .errors import ConfigurationError, IllConditionedError, ModelViolationError
from .geometry import ElementGeometry, SphericalCap, cap_retract, is_feasible, segment_min_distance
from .optimizer import OptimizationTrace, OptimizerParams, optimize, refine

__all__ = [
    "__version__",
    "ChannelRealization",
    "ConfigurationError",
    "ElementGeometry",
    "IllConditionedError",
    "ImpedanceMatrix",
    "ModelViolationError",
    "MutualImpedanceSolver",
    "OptimizationTrace",
    "OptimizerParams",
    "PathSpec",
    "Scenario",
    "SphericalCap",
    "WireParameters",
    "achievable_rate",
    "assemble_impedance_matrix",
    "beampattern",
    "cap_retract",
    "is_feasible",
    "mutual_impedance",
    "normalized_gain",
    "objective",
    "optimize",
    "refine",
    "segment_min_distance",
    "self_impedance",
    "snr",
]

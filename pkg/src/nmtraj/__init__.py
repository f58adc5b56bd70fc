"""Non-Markovian quantum trajectories for spectrally resolved photodetection.

A resonantly driven two-level atom is monitored by detectors that see its
fluorescence through frequency-selective channels (a filter cavity or a
prism). Detection probabilities depend on the emission history over a
finite memory window, so the conditioned state is tracked as a weighted set
of branch states at the window boundary.
"""

from .atom import AtomParams, apply_lowering, pauli_expectations, u_eff
from .channels import (ChannelResponse, completeness_deviation, filter_responses, markov_channel,
                       prism_channels, prism_response)
from .engine import BranchState, DetectionRecord, MemoryWindow, TrajectoryOutput, run_trajectory
from .errors import ConfigurationError, NumericalFault, StepSizeError, WindowOverflowError

__all__ = [
    "AtomParams", "u_eff", "apply_lowering", "pauli_expectations",
    "ChannelResponse", "filter_responses", "prism_response", "prism_channels", "markov_channel",
    "completeness_deviation",
    "MemoryWindow", "BranchState", "DetectionRecord", "TrajectoryOutput", "run_trajectory",
    "ConfigurationError", "NumericalFault", "StepSizeError", "WindowOverflowError",
]

__version__ = "0.1.0"

"""Simulation and security analysis of a relativistic quantum bit commitment."""

from .geometry import C, PartyId, ProtocolLayout, TimingObservations
from .kernels import USE_NUMBA
from .photonic import DetectorModel, PostselectRule, SourceParams
from .protocol import EngineConfig, run_honest_protocol
from .security import SecurityParams, epsilon_b_bound, verify

__all__ = [
    "C",
    "DetectorModel",
    "EngineConfig",
    "PartyId",
    "PostselectRule",
    "ProtocolLayout",
    "SecurityParams",
    "SourceParams",
    "TimingObservations",
    "USE_NUMBA",
    "epsilon_b_bound",
    "run_honest_protocol",
    "verify",
]

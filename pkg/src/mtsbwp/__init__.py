"""Multi-timescale bandwidth profiles: dimensioning, packet marking and a
flow-level fluid simulator for fairness across timescales."""

from .alloc import AllocationResult, Bounds, allocate, bounds, congestion_dp, split_per_dp
from .fluid import FlowRecord, FluidSim, Scenario, SimTrace, bad_history_scenario, run
from .profile import (
    ProfileConfig,
    ProfileError,
    Requirements,
    ValidationReport,
    dimension,
    example1_profile,
    example1_requirements,
    trtcm_profile,
    validate,
)

__version__ = "0.1.0"

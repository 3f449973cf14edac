"""Discrete-event simulator of coded multi-path fronthaul."""

from fhbounds.sim.engine import Replication, SimResult, SimSpec, replicate, simulate
from fhbounds.sim.kernel import BACKEND
from fhbounds.sim.model import (
    AllocationPolicy,
    FronthaulTopology,
    NonOrthogonal,
    OrthogonalBandwidth,
    OrthogonalPath,
    TrafficClass,
    resolve_allocation,
)

__all__ = [
    "BACKEND",
    "AllocationPolicy",
    "FronthaulTopology",
    "NonOrthogonal",
    "OrthogonalBandwidth",
    "OrthogonalPath",
    "Replication",
    "SimResult",
    "SimSpec",
    "TrafficClass",
    "replicate",
    "resolve_allocation",
    "simulate",
]

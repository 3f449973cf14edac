"""Latency bounds, simulation and split planning for (n, k) fork-join fronthaul."""

from fhbounds.analytics import (
    Mm1Params,
    QueueLengthPmf,
    erlang_delay_tail,
    mm1_sojourn_tail,
    queue_length_pmf,
)
from fhbounds.bounds import (
    ForkJoinConfig,
    bound_curve,
    lower_bound_tail,
    upper_bound_tail,
)
from fhbounds.curves import DelayCurve, empirical_ccdf
from fhbounds.errors import (
    ConfigError,
    EmptySampleError,
    FhBoundsError,
    InstabilityError,
    InvalidParameters,
    InvalidPolicyError,
    UnreachableReliabilityError,
)
from fhbounds.oracles import oracle_lower_bound_mc, oracle_upper_bound_mc

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DelayCurve",
    "EmptySampleError",
    "FhBoundsError",
    "ForkJoinConfig",
    "InstabilityError",
    "InvalidParameters",
    "InvalidPolicyError",
    "Mm1Params",
    "QueueLengthPmf",
    "UnreachableReliabilityError",
    "bound_curve",
    "empirical_ccdf",
    "erlang_delay_tail",
    "lower_bound_tail",
    "mm1_sojourn_tail",
    "oracle_lower_bound_mc",
    "oracle_upper_bound_mc",
    "queue_length_pmf",
    "upper_bound_tail",
]

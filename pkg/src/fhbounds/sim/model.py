"""Traffic classes, fronthaul topology and resource-allocation policies.

A policy is resolved into *servers*: FIFO queues each with a capacity in bits
per second. Paths are servers directly under the non-orthogonal and
orthogonal-path policies; under orthogonal bandwidth every class gets its own
virtual queue on each path, carrying its fraction of that path's capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Union

from fhbounds.errors import InstabilityError, InvalidParameters, InvalidPolicyError


@dataclass(frozen=True)
class TrafficClass:
    """A service flow. ``packet_size`` is in bits, ``arrival_rate`` in packets/s.

    ``n_alloc`` is the number of encoded blocks (and paths) per packet; None
    means "every path the policy gives this class".
    """

    name: str
    packet_size: float
    arrival_rate: float
    k: int
    n_alloc: int | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidParameters("traffic class needs a name")
        for attr in ("packet_size", "arrival_rate"):
            value = float(getattr(self, attr))
            if not math.isfinite(value) or value <= 0.0:
                raise InvalidParameters(f"{self.name}: {attr} must be finite and > 0, got {value!r}")
            object.__setattr__(self, attr, value)
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise InvalidParameters(f"{self.name}: k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        if self.n_alloc is not None:
            if int(self.n_alloc) != self.n_alloc or self.n_alloc < self.k:
                raise InvalidParameters(
                    f"{self.name}: need k <= n_alloc, got k={self.k}, n_alloc={self.n_alloc!r}"
                )
            object.__setattr__(self, "n_alloc", int(self.n_alloc))


@dataclass(frozen=True)
class FronthaulTopology:
    capacities: tuple[float, ...]

    def __post_init__(self) -> None:
        caps = tuple(float(c) for c in self.capacities)
        if not caps:
            raise InvalidParameters("topology needs at least one path")
        if any(not math.isfinite(c) or c <= 0.0 for c in caps):
            raise InvalidParameters("path capacities must be finite and > 0")
        object.__setattr__(self, "capacities", caps)

    @classmethod
    def homogeneous(cls, n_paths: int, capacity: float) -> "FronthaulTopology":
        if n_paths < 1:
            raise InvalidParameters("topology needs at least one path")
        return cls((float(capacity),) * int(n_paths))

    @property
    def n_paths(self) -> int:
        return len(self.capacities)

    @property
    def is_homogeneous(self) -> bool:
        return len(set(self.capacities)) == 1


@dataclass(frozen=True)
class NonOrthogonal:
    """Every class uses the full capacity of the paths; blocks share FIFO queues."""

    name = "non_orthogonal"


@dataclass(frozen=True)
class OrthogonalBandwidth:
    """Each class owns a fraction of every path's capacity."""

    fractions: Mapping[str, float] = field(default_factory=dict)
    name = "orthogonal_bandwidth"


@dataclass(frozen=True)
class OrthogonalPath:
    """Each class owns a disjoint set of whole paths, assigned in class order."""

    paths: Mapping[str, int] = field(default_factory=dict)
    name = "orthogonal_path"


AllocationPolicy = Union[NonOrthogonal, OrthogonalBandwidth, OrthogonalPath]


@dataclass(frozen=True)
class ClassAllocation:
    """Resolved resources of one class: consecutive servers and their capacities."""

    traffic: TrafficClass
    server_start: int
    capacities: tuple[float, ...]

    @property
    def n_alloc(self) -> int:
        return len(self.capacities)

    @property
    def service_means(self) -> tuple[float, ...]:
        """Mean block service time ``B / (k * capacity)`` on each server."""
        b, k = self.traffic.packet_size, self.traffic.k
        return tuple(b / (k * cap) for cap in self.capacities)

    @property
    def service_rate(self) -> float:
        """Block service rate on the slowest allocated server."""
        return self.traffic.k * min(self.capacities) / self.traffic.packet_size


@dataclass(frozen=True)
class Allocation:
    classes: tuple[ClassAllocation, ...]
    n_servers: int
    shared: bool

    def groups(self) -> list[tuple[ClassAllocation, ...]]:
        """Classes that interact through common queues; simulated together."""
        if self.shared:
            return [self.classes]
        return [(c,) for c in self.classes]


def _take_paths(traffic: TrafficClass, available: int) -> int:
    n = available if traffic.n_alloc is None else traffic.n_alloc
    if n > available:
        raise InvalidPolicyError(
            f"{traffic.name}: n_alloc={n} exceeds the {available} paths available to it"
        )
    if traffic.k > n:
        raise InvalidPolicyError(f"{traffic.name}: k={traffic.k} exceeds its {n} paths")
    return n


def _check_names(classes, mapping, what: str) -> None:
    names = [c.name for c in classes]
    if len(set(names)) != len(names):
        raise InvalidParameters(f"duplicate traffic class names: {names}")
    missing = [n for n in names if n not in mapping]
    extra = [n for n in mapping if n not in names]
    if missing or extra:
        raise InvalidPolicyError(
            f"{what} must name exactly the traffic classes; missing={missing}, unknown={extra}"
        )


def resolve_allocation(
    topology: FronthaulTopology,
    classes: list[TrafficClass] | tuple[TrafficClass, ...],
    policy: AllocationPolicy,
) -> Allocation:
    """Map classes onto servers and check budgets and stability."""
    classes = tuple(classes)
    if not classes:
        raise InvalidParameters("need at least one traffic class")
    caps = topology.capacities
    resolved = []
    if isinstance(policy, NonOrthogonal):
        names = [c.name for c in classes]
        if len(set(names)) != len(names):
            raise InvalidParameters(f"duplicate traffic class names: {names}")
        for c in classes:
            n = _take_paths(c, topology.n_paths)
            resolved.append(ClassAllocation(c, 0, caps[:n]))
        alloc = Allocation(tuple(resolved), topology.n_paths, shared=True)
    elif isinstance(policy, OrthogonalBandwidth):
        _check_names(classes, policy.fractions, "bandwidth fractions")
        fracs = [float(policy.fractions[c.name]) for c in classes]
        if any(not 0.0 < f <= 1.0 for f in fracs):
            raise InvalidPolicyError(f"bandwidth fractions must lie in (0, 1], got {fracs}")
        if sum(fracs) > 1.0 + 1e-12:
            raise InvalidPolicyError(f"bandwidth fractions sum to {sum(fracs)!r} > 1")
        for idx, (c, f) in enumerate(zip(classes, fracs)):
            n = _take_paths(c, topology.n_paths)
            resolved.append(
                ClassAllocation(c, idx * topology.n_paths, tuple(f * cap for cap in caps[:n]))
            )
        alloc = Allocation(tuple(resolved), len(classes) * topology.n_paths, shared=False)
    elif isinstance(policy, OrthogonalPath):
        _check_names(classes, policy.paths, "path counts")
        counts = [policy.paths[c.name] for c in classes]
        if any(isinstance(p, bool) or int(p) != p or p < 1 for p in counts):
            raise InvalidPolicyError(f"path counts must be positive integers, got {counts}")
        if sum(counts) > topology.n_paths:
            raise InvalidPolicyError(
                f"path counts sum to {sum(counts)} > {topology.n_paths} available paths"
            )
        offset = 0
        for c, count in zip(classes, counts):
            n = _take_paths(c, int(count))
            resolved.append(ClassAllocation(c, offset, caps[offset : offset + n]))
            offset += int(count)
        alloc = Allocation(tuple(resolved), topology.n_paths, shared=False)
    else:
        raise InvalidPolicyError(f"unknown allocation policy {policy!r}")
    check_stability(alloc)
    return alloc


def check_stability(alloc: Allocation) -> None:
    for ca in alloc.classes:
        mu = ca.service_rate
        if ca.traffic.arrival_rate >= mu:
            raise InstabilityError(
                f"class {ca.traffic.name!r} is unstable: arrival rate "
                f"{ca.traffic.arrival_rate!r}/s >= per-block service rate {mu!r}/s"
            )
    if alloc.shared:
        load = [0.0] * alloc.n_servers
        for ca in alloc.classes:
            for j, mean in enumerate(ca.service_means):
                load[ca.server_start + j] += ca.traffic.arrival_rate * mean
        worst = max(range(len(load)), key=load.__getitem__)
        if load[worst] >= 1.0:
            names = ", ".join(ca.traffic.name for ca in alloc.classes)
            raise InstabilityError(
                f"shared path {worst} is unstable: combined utilization {load[worst]!r} "
                f">= 1 from classes {names}"
            )

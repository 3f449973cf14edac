"""Simulation of multi-path coded fronthaul: Poisson packets, n-way block fan-out,
FIFO path queues, packet done when its k-th block is served (non-purging).

Every block of a packet joins its queue at the packet's arrival instant and
queues are FIFO, so a block's completion time is fixed the moment it is
enqueued: ``max(arrival, server_free_at) + service``. The event loop therefore
walks arrivals in (time, class, sequence) order and never needs a departure
heap; ``fhbounds.sim.reference`` runs the same model with an explicit event
heap and is used to cross-check this path.

Random streams: replication ``r`` of seed ``s`` draws the arrivals of class
``c`` (its position in the class list) from ``SeedSequence(s, spawn_key=(r, c, 0))``
and the service times of its ``j``-th block from ``spawn_key=(r, c, 1 + j)``,
each feeding its own PCG64 generator.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from fhbounds.curves import DEFAULT_Z, check_grid, curve_from_counts, exceedance_counts
from fhbounds.errors import InvalidParameters
from fhbounds.sim import kernel
from fhbounds.sim.stats import batch_means
from fhbounds.sim.model import (
    AllocationPolicy,
    ClassAllocation,
    FronthaulTopology,
    TrafficClass,
    resolve_allocation,
)

log = logging.getLogger(__name__)

# fixed draw size per stream; part of the reproducibility contract
CHUNK = 1 << 16


def stream(seed: int, replication: int, class_index: int, stream_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication), int(class_index), int(stream_index)))
    return np.random.Generator(np.random.PCG64(ss))


def unit_exponentials(rng: np.random.Generator, m: int) -> np.ndarray:
    return -np.log1p(-rng.random(m))


class ClassSource:
    """Arrival times and per-block service times for one class, drawn in fixed chunks."""

    def __init__(self, alloc: ClassAllocation, class_index: int, seed: int, replication: int):
        self.alloc = alloc
        self.rate = alloc.traffic.arrival_rate
        self.means = alloc.service_means
        self.arrival_rng = stream(seed, replication, class_index, 0)
        self.path_rngs = [stream(seed, replication, class_index, 1 + j) for j in range(alloc.n_alloc)]
        self.clock = 0.0
        self.times = np.empty(0)
        self.services = np.empty((0, alloc.n_alloc))
        self.cursor = 0
        self.issued = 0

    def refill(self) -> None:
        gaps = unit_exponentials(self.arrival_rng, CHUNK) / self.rate
        # sequential accumulate, so arrival times do not depend on chunk edges
        self.times = np.add.accumulate(np.concatenate(([self.clock], gaps)))[1:]
        self.clock = float(self.times[-1])
        services = np.empty((CHUNK, len(self.means)))
        for j, (rng, mean) in enumerate(zip(self.path_rngs, self.means)):
            services[:, j] = unit_exponentials(rng, CHUNK) * mean
        self.services = services
        self.cursor = 0

    def ensure(self) -> None:
        if self.cursor >= self.times.size:
            self.refill()

    @property
    def last_buffered(self) -> float:
        return float(self.times[-1])

    def take(self, count: int):
        lo, hi = self.cursor, self.cursor + count
        self.cursor = hi
        first = self.issued
        self.issued += count
        return self.times[lo:hi], self.services[lo:hi], first


@dataclass
class SimResult:
    """Outcome of one replication.

    ``delays[name]`` holds the post-warm-up packet delays in arrival order.
    After :meth:`bin` the raw delays may be dropped and only exceedance counts
    on a tau grid are kept.
    """

    delays: dict[str, np.ndarray | None]
    packets: int
    warmup: int
    seed: int
    replication: int
    policy: str
    backend: str
    arrivals: dict[str, np.ndarray] | None = None
    packets_processed: dict[str, int] = field(default_factory=dict)
    blocks_enqueued: dict[str, int] = field(default_factory=dict)
    server_busy: np.ndarray | None = None
    server_blocks: np.ndarray | None = None
    horizon: float = 0.0
    sample_counts: dict[str, int] = field(default_factory=dict)
    delay_sums: dict[str, float] = field(default_factory=dict)
    delay_stderr: dict[str, float] = field(default_factory=dict)
    bin_grid: np.ndarray | None = None
    exceed: dict[str, np.ndarray] | None = None

    @property
    def class_names(self) -> list[str]:
        return list(self.sample_counts)

    def sample_count(self, name: str) -> int:
        return self.sample_counts[name]

    def mean_delay(self, name: str) -> float:
        return self.delay_sums[name] / self.sample_counts[name]

    def bin(self, tau_grid, drop_samples: bool = False) -> None:
        taus = check_grid(tau_grid)
        self.bin_grid = taus
        self.exceed = {}
        for name, d in self.delays.items():
            if d is None:
                raise InvalidParameters("samples already dropped; cannot re-bin")
            self.exceed[name] = exceedance_counts(np.sort(d), taus)
        if drop_samples:
            self.delays = {name: None for name in self.delays}
            self.arrivals = None

    def _counts(self, name: str, taus: np.ndarray) -> np.ndarray:
        if self.exceed is not None and np.array_equal(self.bin_grid, taus):
            return self.exceed[name]
        d = self.delays[name]
        if d is None:
            raise InvalidParameters("samples were dropped and the grid differs from the binned one")
        return exceedance_counts(np.sort(d), taus)

    def ccdf(self, name: str, tau_grid, z: float = DEFAULT_Z, metadata: dict | None = None):
        taus = check_grid(tau_grid)
        meta = {
            "class": name,
            "seed": self.seed,
            "replications": 1,
            "packets": self.packets,
            "warmup": self.warmup,
            "policy": self.policy,
        }
        meta.update(metadata or {})
        return curve_from_counts(taus, self._counts(name, taus), self.sample_counts[name], z, meta)


def _default_warmup(packets: int) -> int:
    return packets // 10


def _check_counts(packets: int, warmup: int | None) -> tuple[int, int]:
    if isinstance(packets, bool) or int(packets) != packets or packets < 1:
        raise InvalidParameters(f"packets must be a positive integer, got {packets!r}")
    packets = int(packets)
    warmup = _default_warmup(packets) if warmup is None else warmup
    if int(warmup) != warmup or not 0 <= warmup < packets:
        raise InvalidParameters(f"need 0 <= warmup < packets, got warmup={warmup!r}, packets={packets}")
    return packets, int(warmup)


def _run_group(group, indices, n_servers, packets, warmup, seed, replication, run_chunk, record_arrivals, state):
    free_at, busy, served = state
    sources = [ClassSource(ca, idx, seed, replication) for ca, idx in zip(group, indices)]
    keep = packets - warmup
    delays = [np.empty(keep) for _ in group]
    arrivals = [np.empty(keep) for _ in group] if record_arrivals else None
    width = max(ca.n_alloc for ca in group)
    server_start = np.array([ca.server_start for ca in group], dtype=np.int64)
    n_alloc = np.array([ca.n_alloc for ca in group], dtype=np.int64)
    k_needed = np.array([ca.traffic.k for ca in group], dtype=np.int64)
    horizon = 0.0

    # arrival time of each class's last recorded packet, once it has been drawn
    final = [None] * len(sources)
    done = False
    while not done:
        for c, src in enumerate(sources):
            src.ensure()
            base = src.issued - src.cursor
            if final[c] is None and packets - 1 < base + src.times.size:
                final[c] = float(src.times[packets - 1 - base])
        if len(sources) == 1:
            src = sources[0]
            take = [min(src.times.size - src.cursor, packets - src.issued)]
            done = src.issued + take[0] >= packets
        else:
            # all buffered arrivals up to the earliest buffer end are final in
            # order; background traffic stops at the last recorded arrival
            cut = min(src.last_buffered for src in sources)
            if None not in final:
                stop = max(final)
                done = stop <= cut
                cut = min(cut, stop)
            take = [
                int(np.searchsorted(src.times[src.cursor :], cut, side="right")) for src in sources
            ]
        parts = [src.take(n) for src, n in zip(sources, take)]
        times = np.concatenate([p[0] for p in parts])
        cls = np.concatenate([np.full(n, c, dtype=np.int32) for c, n in enumerate(take)])
        seq = np.concatenate([np.arange(p[2], p[2] + n) for p, n in zip(parts, take)])
        services = np.zeros((times.size, width))
        row = 0
        for p, n in zip(parts, take):
            services[row : row + n, : p[1].shape[1]] = p[1]
            row += n
        if len(sources) > 1:
            order = np.argsort(times, kind="stable")
            times, cls, seq, services = times[order], cls[order], seq[order], services[order]
        out = np.empty(times.size)
        run_chunk(
            np.ascontiguousarray(times),
            np.ascontiguousarray(cls),
            np.ascontiguousarray(services),
            server_start,
            n_alloc,
            k_needed,
            free_at,
            busy,
            served,
            out,
        )
        if times.size:
            horizon = max(horizon, float(times[-1]))
        for c in range(len(group)):
            mask = (cls == c) & (seq >= warmup) & (seq < packets)
            pos = seq[mask] - warmup
            delays[c][pos] = out[mask]
            if arrivals is not None:
                arrivals[c][pos] = times[mask]
    processed = {ca.traffic.name: src.issued for ca, src in zip(group, sources)}
    return delays, arrivals, processed, horizon


def simulate(
    topology: FronthaulTopology,
    classes,
    policy: AllocationPolicy,
    packets: int,
    warmup: int | None = None,
    seed: int = 0,
    *,
    replication: int = 0,
    record_arrivals: bool = False,
    backend: str | None = None,
) -> SimResult:
    """Simulate ``packets`` arrivals of every class and record their delays.

    The first ``warmup`` packets of each class (default 10%) are discarded.
    Classes that share queues are simulated jointly; under a shared policy a
    class keeps generating background traffic until every class has reached
    ``packets`` arrivals.
    """
    classes = tuple(classes)
    packets, warmup = _check_counts(packets, warmup)
    alloc = resolve_allocation(topology, classes, policy)
    backend = backend or kernel.BACKEND
    if backend not in kernel.BACKENDS:
        raise InvalidParameters(f"kernel backend {backend!r} unavailable; have {sorted(kernel.BACKENDS)}")
    run_chunk = kernel.BACKENDS[backend]
    index = {ca.traffic.name: i for i, ca in enumerate(alloc.classes)}
    state = (
        np.zeros(alloc.n_servers),
        np.zeros(alloc.n_servers),
        np.zeros(alloc.n_servers, dtype=np.int64),
    )
    result = SimResult(
        delays={},
        packets=packets,
        warmup=warmup,
        seed=int(seed),
        replication=int(replication),
        policy=policy.name,
        backend=backend,
        arrivals={} if record_arrivals else None,
    )
    for group in alloc.groups():
        indices = [index[ca.traffic.name] for ca in group]
        delays, arrivals, processed, horizon = _run_group(
            group, indices, alloc.n_servers, packets, warmup, seed, replication,
            run_chunk, record_arrivals, state,
        )
        result.horizon = max(result.horizon, horizon)
        for c, ca in enumerate(group):
            name = ca.traffic.name
            result.delays[name] = delays[c]
            if arrivals is not None:
                result.arrivals[name] = arrivals[c]
            result.packets_processed[name] = processed[name]
            result.blocks_enqueued[name] = processed[name] * ca.n_alloc
    for ca in alloc.classes:
        name = ca.traffic.name
        result.sample_counts[name] = int(result.delays[name].size)
        result.delay_sums[name] = float(np.sum(result.delays[name]))
        result.delay_stderr[name] = batch_means(result.delays[name])[1]
    result.server_busy, result.server_blocks = state[1], state[2]
    log.debug("simulated %d packets/class (seed=%d, rep=%d, backend=%s)", packets, seed, replication, backend)
    return result


@dataclass(frozen=True)
class SimSpec:
    topology: FronthaulTopology
    classes: tuple[TrafficClass, ...]
    policy: AllocationPolicy
    packets: int
    warmup: int | None = None


@dataclass
class Replication:
    results: list[SimResult]
    pooled: dict[str, object]
    base_seed: int

    @property
    def sample_counts(self) -> dict[str, int]:
        return {name: c.metadata["sample_count"] for name, c in self.pooled.items()}


def _replica(args):
    spec, base_seed, r, taus, keep_samples, backend = args
    res = simulate(
        spec.topology, spec.classes, spec.policy, spec.packets, spec.warmup, base_seed,
        replication=r, backend=backend,
    )
    res.bin(taus, drop_samples=not keep_samples)
    return res


def replicate(
    spec: SimSpec,
    replications: int,
    base_seed: int,
    tau_grid,
    z: float = DEFAULT_Z,
    *,
    keep_samples: bool = True,
    jobs: int = 1,
    backend: str | None = None,
) -> Replication:
    """Run independent replications and pool their CCDFs.

    Replication ``r`` uses streams derived from ``(base_seed, r)``; the pooled
    curve sums exceedance counts and sample counts across replications.
    """
    if isinstance(replications, bool) or int(replications) != replications or replications < 1:
        raise InvalidParameters(f"replications must be a positive integer, got {replications!r}")
    taus = check_grid(tau_grid)
    args = [(spec, base_seed, r, taus, keep_samples, backend) for r in range(int(replications))]
    if jobs > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replica, args))
    else:
        results = [_replica(a) for a in args]
    pooled = {}
    for name in results[0].class_names:
        exceed = sum(r.exceed[name] for r in results)
        count = sum(r.sample_count(name) for r in results)
        pooled[name] = curve_from_counts(
            taus,
            exceed,
            count,
            z,
            {
                "class": name,
                "seed": int(base_seed),
                "replications": len(results),
                "packets": spec.packets,
                "warmup": results[0].warmup,
                "policy": spec.policy.name,
            },
        )
    return Replication(results, pooled, int(base_seed))

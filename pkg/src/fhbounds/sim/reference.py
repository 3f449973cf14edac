"""Event-heap simulator of the same fronthaul model, instrumented for invariant checks.

Slow (pure Python, one heap event per arrival and per block departure) but
explicit: arrivals enqueue blocks, departures start the next queued block, a
packet completes at its k-th block departure. It consumes the same random
streams as :mod:`fhbounds.sim.engine`, so recorded delays must agree exactly.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from fhbounds.sim.engine import ClassSource, _check_counts
from fhbounds.sim.model import FronthaulTopology, resolve_allocation

ARRIVAL, DEPARTURE = 0, 1


@dataclass
class Trace:
    delays: dict[str, list[float]]
    enqueue_order: list[list[int]]
    service_order: list[list[int]]
    busy_time: np.ndarray
    blocks_served: np.ndarray
    blocks_enqueued: dict[str, int]
    completed_at_sampling: list[int]
    packets_arrived: dict[str, int]
    time_avg_in_system: float
    horizon: float
    window_area: list[float] = field(default_factory=list)
    window_length: float = 0.0


def _arrival_stream(group, indices, packets, seed, replication):
    """Merged (time, class, seq, services) arrivals, up to the last recorded one."""
    sources = [ClassSource(ca, idx, seed, replication) for ca, idx in zip(group, indices)]
    per_class = []
    for src in sources:
        times, services = [], []
        while sum(len(t) for t in times) < packets:
            src.refill()
            times.append(src.times)
            services.append(src.services)
        per_class.append((np.concatenate(times), np.concatenate(services)))
    stop = max(t[packets - 1] for t, _ in per_class)
    events = []
    for c, (times, services) in enumerate(per_class):
        # keep drawing background arrivals until they pass the stop time
        src = sources[c]
        while times[-1] < stop:
            src.refill()
            times = np.concatenate([times, src.times])
            services = np.concatenate([services, src.services])
        for seq in range(int(np.searchsorted(times, stop, side="right"))):
            events.append((float(times[seq]), c, seq, services[seq]))
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    return events


def run_reference(
    topology: FronthaulTopology,
    classes,
    policy,
    packets: int,
    warmup: int | None = None,
    seed: int = 0,
    *,
    replication: int = 0,
    windows: int = 0,
) -> Trace:
    """Event-driven run; every class that shares a queue is simulated jointly.

    With ``windows > 0`` the area under N(t) is also reported per equal-length
    time window, for batch-means error bars on the time-average.
    """
    classes = tuple(classes)
    packets, warmup = _check_counts(packets, warmup)
    alloc = resolve_allocation(topology, classes, policy)
    index = {ca.traffic.name: i for i, ca in enumerate(alloc.classes)}
    n_servers = alloc.n_servers
    queues = [deque() for _ in range(n_servers)]
    in_service = [None] * n_servers
    enqueue_order = [[] for _ in range(n_servers)]
    service_order = [[] for _ in range(n_servers)]
    busy = np.zeros(n_servers)
    served = np.zeros(n_servers, dtype=np.int64)
    delays = {ca.traffic.name: [] for ca in alloc.classes}
    enqueued = {ca.traffic.name: 0 for ca in alloc.classes}
    arrived = {ca.traffic.name: 0 for ca in alloc.classes}
    completed_at_sampling = []
    area = 0.0
    horizon = 0.0
    window_area: list[float] = []
    window_length = 0.0

    for group in alloc.groups():
        names = [ca.traffic.name for ca in group]
        arrivals = _arrival_stream(group, [index[n] for n in names], packets, seed, replication)
        packet_arrival = {}
        packet_done = {}
        heap = []
        counter = 0
        for t, c, seq, services in arrivals:
            heapq.heappush(heap, (t, counter, ARRIVAL, (c, seq, services)))
            counter += 1
        block_id = 0
        in_system = 0
        now = 0.0
        span = arrivals[-1][0] if arrivals else 0.0
        if windows:
            window_length = span / windows
            window_area = [0.0] * windows

        def start(server, t):
            nonlocal counter
            blk = queues[server].popleft()
            in_service[server] = blk
            service_order[server].append(blk[0])
            heapq.heappush(heap, (t + blk[3], counter, DEPARTURE, server))
            counter += 1

        while heap:
            t, _, kind, payload = heapq.heappop(heap)
            if t > now:
                if windows and now < span:
                    # split the piecewise-constant N(t) across window edges
                    lo, hi = now, min(t, span)
                    while lo < hi:
                        w = min(int(lo / window_length), windows - 1)
                        # rounding can put lo exactly on the edge of window w
                        while w < windows - 1 and (w + 1) * window_length <= lo:
                            w += 1
                        edge = min(hi, (w + 1) * window_length) if w < windows - 1 else hi
                        window_area[w] += in_system * (edge - lo)
                        lo = edge
                area += in_system * (t - now)
                now = t
            if kind == ARRIVAL:
                c, seq, services = payload
                ca = group[c]
                arrived[names[c]] += 1
                packet_arrival[(c, seq)] = t
                packet_done[(c, seq)] = 0
                in_system += 1
                for j in range(ca.n_alloc):
                    server = ca.server_start + j
                    queues[server].append((block_id, c, seq, float(services[j])))
                    enqueue_order[server].append(block_id)
                    block_id += 1
                    enqueued[names[c]] += 1
                    if in_service[server] is None:
                        start(server, t)
            else:
                server = payload
                blk_id, c, seq, svc = in_service[server]
                in_service[server] = None
                busy[server] += svc
                served[server] += 1
                key = (c, seq)
                packet_done[key] += 1
                if packet_done[key] == group[c].traffic.k:
                    completed_at_sampling.append(packet_done[key])
                    in_system -= 1
                    if warmup <= seq < packets:
                        delays[names[c]].append((seq, t - packet_arrival[key]))
                if queues[server]:
                    start(server, t)
        horizon = max(horizon, now)

    ordered = {name: [d for _, d in sorted(v)] for name, v in delays.items()}
    return Trace(
        delays=ordered,
        enqueue_order=enqueue_order,
        service_order=service_order,
        busy_time=busy,
        blocks_served=served,
        blocks_enqueued=enqueued,
        completed_at_sampling=completed_at_sampling,
        packets_arrived=arrived,
        time_avg_in_system=area / horizon if horizon > 0 else 0.0,
        horizon=horizon,
        window_area=window_area,
        window_length=window_length,
    )

"""Compare the compiled and pure-Python fork-join kernels.

Runs the same simulation with every available backend, checks that the
delays agree bit for bit, and reports wall time and packets per second.

    python3 benchmarks/bench_kernel.py --packets 200000 --repeat 3
"""

import argparse
import statistics
import time

from fhbounds.sim import kernel
from fhbounds.sim.engine import simulate
from fhbounds.sim.model import FronthaulTopology, NonOrthogonal, OrthogonalPath, TrafficClass

SCENARIOS = {
    "orthogonal_path": OrthogonalPath({"URLLC": 5, "eMBB": 5}),
    "non_orthogonal": NonOrthogonal(),
}


def classes(k: int):
    return (
        TrafficClass("URLLC", 500 * 8, 8000.0, k),
        TrafficClass("eMBB", 1500 * 8, 4000.0, k),
    )


def time_backend(backend, policy, packets, k, repeat):
    topo = FronthaulTopology.homogeneous(10, 1e8)
    runs, result = [], None
    for _ in range(repeat):
        start = time.perf_counter()
        result = simulate(topo, classes(k), policy, packets, seed=1, backend=backend)
        runs.append(time.perf_counter() - start)
    return statistics.median(runs), result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--packets", type=int, default=200_000, help="packets per class")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--k", type=int, default=2)
    args = ap.parse_args()

    backends = sorted(kernel.BACKENDS)
    print(f"backends: {', '.join(backends)} (default: {kernel.BACKEND})")
    print(f"{'scenario':<16} {'backend':<8} {'median s':>10} {'packets/s':>12} {'speedup':>8}")
    for name, policy in SCENARIOS.items():
        timings, results = {}, {}
        for b in backends:
            timings[b], results[b] = time_backend(b, policy, args.packets, args.k, args.repeat)
        base = timings["python"]
        total = sum(results["python"].packets_processed.values())
        for b in backends:
            print(f"{name:<16} {b:<8} {timings[b]:>10.3f} {total / timings[b]:>12.0f} {base / timings[b]:>7.1f}x")
        ref = results["python"]
        for b in backends:
            for cls, d in results[b].delays.items():
                if d.tobytes() != ref.delays[cls].tobytes():
                    raise SystemExit(f"backend {b} disagrees with python on {name}/{cls}")
    print("all backends produce identical delays")


if __name__ == "__main__":
    main()

import numpy as np
import pytest

from fhbounds.errors import InstabilityError, InvalidParameters, InvalidPolicyError
from fhbounds.sim import kernel
from fhbounds.sim.engine import SimSpec, replicate, simulate
from fhbounds.sim.model import (
    FronthaulTopology,
    NonOrthogonal,
    OrthogonalBandwidth,
    OrthogonalPath,
    TrafficClass,
    resolve_allocation,
)
from fhbounds.sim.reference import run_reference
from fhbounds.sim.stats import batch_means

TOPO = FronthaulTopology.homogeneous(4, 1000.0)
CLASSES = (TrafficClass("a", 200.0, 3.0, 2), TrafficClass("b", 100.0, 4.0, 1, n_alloc=3))

POLICIES = {
    "bandwidth": OrthogonalBandwidth({"a": 0.5, "b": 0.5}),
    "path": OrthogonalPath({"a": 2, "b": 2}),
    "shared": NonOrthogonal(),
}


def _classes_for(name):
    if name == "path":
        return (TrafficClass("a", 200.0, 3.0, 2), TrafficClass("b", 100.0, 4.0, 1))
    return CLASSES


@pytest.mark.parametrize("policy", sorted(POLICIES))
@pytest.mark.parametrize("backend", sorted(kernel.BACKENDS))
def test_kernel_matches_event_heap_reference(policy, backend):
    classes = _classes_for(policy)
    res = simulate(TOPO, classes, POLICIES[policy], 3000, 300, seed=11, backend=backend)
    ref = run_reference(TOPO, classes, POLICIES[policy], 3000, 300, seed=11)
    for c in classes:
        np.testing.assert_array_equal(res.delays[c.name], np.asarray(ref.delays[c.name]))
    np.testing.assert_allclose(res.server_busy, ref.busy_time, rtol=1e-12)
    np.testing.assert_array_equal(res.server_blocks, ref.blocks_served)


def test_backends_bit_identical():
    if "cython" not in kernel.BACKENDS:
        pytest.skip("compiled kernel not built")
    a = simulate(TOPO, CLASSES, NonOrthogonal(), 20_000, seed=2, backend="cython")
    b = simulate(TOPO, CLASSES, NonOrthogonal(), 20_000, seed=2, backend="python")
    for name in a.delays:
        assert a.delays[name].tobytes() == b.delays[name].tobytes()


def test_fifo_per_path():
    ref = run_reference(TOPO, CLASSES, NonOrthogonal(), 2000, 0, seed=5)
    for enq, srv in zip(ref.enqueue_order, ref.service_order):
        assert srv == enq[: len(srv)]
        assert len(srv) == len(enq)


def test_block_conservation_and_non_purging():
    ref = run_reference(TOPO, CLASSES, OrthogonalBandwidth({"a": 0.5, "b": 0.5}), 2000, 0, seed=6)
    # every encoded block is transmitted, including those after the k-th arrival
    assert ref.blocks_enqueued["a"] == 4 * ref.packets_arrived["a"]
    assert ref.blocks_enqueued["b"] == 3 * ref.packets_arrived["b"]
    assert ref.blocks_served.sum() == sum(ref.blocks_enqueued.values())
    res = simulate(TOPO, CLASSES, OrthogonalBandwidth({"a": 0.5, "b": 0.5}), 2000, 0, seed=6)
    assert res.blocks_enqueued == ref.blocks_enqueued


def test_completion_at_kth_block():
    ref = run_reference(TOPO, CLASSES, NonOrthogonal(), 1000, 0, seed=7)
    ks = {c.name: c.k for c in CLASSES}
    assert set(ref.completed_at_sampling) <= set(ks.values())
    assert len(ref.completed_at_sampling) == sum(ref.packets_arrived.values())


def test_more_required_blocks_delays_every_packet():
    topo = FronthaulTopology.homogeneous(5, 1000.0)
    # identical streams; the k-th order statistic grows with k for equal service means
    one = simulate(topo, [TrafficClass("x", 100.0, 5.0, 2)], OrthogonalPath({"x": 5}), 2000, 0, seed=3)
    two = simulate(topo, [TrafficClass("x", 50.0, 5.0, 1)], OrthogonalPath({"x": 5}), 2000, 0, seed=3)
    assert np.all(two.delays["x"] <= one.delays["x"])


def test_seed_determinism_and_sensitivity():
    a = simulate(TOPO, CLASSES, NonOrthogonal(), 5000, seed=1)
    b = simulate(TOPO, CLASSES, NonOrthogonal(), 5000, seed=1)
    c = simulate(TOPO, CLASSES, NonOrthogonal(), 5000, seed=2)
    assert a.delays["a"].tobytes() == b.delays["a"].tobytes()
    assert not np.array_equal(a.delays["a"], c.delays["a"])


def test_prefix_stable_in_packet_count():
    # longer runs extend shorter ones: chunking does not perturb the stream
    short = simulate(TOPO, CLASSES[:1], OrthogonalPath({"a": 4}), 70_000, 0, seed=4)
    long = simulate(TOPO, CLASSES[:1], OrthogonalPath({"a": 4}), 140_000, 0, seed=4)
    np.testing.assert_array_equal(short.delays["a"], long.delays["a"][:70_000])


def test_warmup_discarded():
    res = simulate(TOPO, CLASSES, NonOrthogonal(), 1000, 250, seed=1)
    assert res.sample_count("a") == 750
    full = simulate(TOPO, CLASSES, NonOrthogonal(), 1000, 0, seed=1)
    np.testing.assert_array_equal(res.delays["a"], full.delays["a"][250:])
    assert simulate(TOPO, CLASSES, NonOrthogonal(), 1000, seed=1).warmup == 100


@pytest.mark.parametrize("packets,warmup", [(0, None), (10, 10), (10, -1), (2.5, None)])
def test_bad_counts(packets, warmup):
    with pytest.raises(InvalidParameters):
        simulate(TOPO, CLASSES, NonOrthogonal(), packets, warmup)


def test_instability_detected():
    heavy = (TrafficClass("a", 200.0, 12.0, 1), TrafficClass("b", 100.0, 9.0, 1))
    with pytest.raises(InstabilityError):
        simulate(TOPO, heavy, NonOrthogonal(), 100)
    with pytest.raises(InstabilityError):
        resolve_allocation(TOPO, CLASSES, OrthogonalBandwidth({"a": 0.1, "b": 0.9}))


@pytest.mark.parametrize(
    "policy",
    [
        OrthogonalBandwidth({"a": 0.7, "b": 0.4}),
        OrthogonalBandwidth({"a": 0.5}),
        OrthogonalPath({"a": 3, "b": 2}),
        OrthogonalPath({"a": 2, "b": 1}),
    ],
)
def test_invalid_policy(policy):
    with pytest.raises(InvalidPolicyError):
        resolve_allocation(TOPO, CLASSES, policy)


def test_bandwidth_fraction_scales_service():
    alloc = resolve_allocation(TOPO, CLASSES, OrthogonalBandwidth({"a": 0.45, "b": 0.55}))
    a = alloc.classes[0]
    assert a.capacities == (450.0,) * 4
    assert a.service_rate == pytest.approx(2 * 450.0 / 200.0)


def test_shared_policy_interference():
    alone = simulate(TOPO, CLASSES[:1], NonOrthogonal(), 20_000, seed=8)
    shared = simulate(TOPO, CLASSES, NonOrthogonal(), 20_000, seed=8)
    assert shared.mean_delay("a") > alone.mean_delay("a")


def test_degenerate_mm1_mean():
    topo = FronthaulTopology.homogeneous(1, 2000.0)
    res = simulate(topo, [TrafficClass("q", 1.0, 1000.0, 1)], OrthogonalPath({"q": 1}), 200_000, seed=3)
    mean, se = batch_means(res.delays["q"])
    assert abs(mean - 1e-3) <= 4 * se


def test_replications_pool_and_shrink():
    spec = SimSpec(TOPO, CLASSES, NonOrthogonal(), 5000)
    taus = np.geomspace(1e-2, 10.0, 25)
    one = replicate(spec, 1, 3, taus)
    ten = replicate(spec, 10, 3, taus)
    assert ten.sample_counts["a"] == 10 * one.sample_counts["a"]
    # pooled curve of one replication is that replication's own curve
    assert one.pooled["a"].probs.tolist() == one.results[0].ccdf("a", taus).probs.tolist()
    # replication 0 is shared, the rest are new streams
    np.testing.assert_array_equal(ten.results[0].delays["a"], one.results[0].delays["a"])
    assert not np.array_equal(ten.results[1].delays["a"], ten.results[0].delays["a"])
    i = int(np.argmin(np.abs(ten.pooled["a"].probs - 0.3)))
    ratio = ten.pooled["a"].half_widths[i] / one.pooled["a"].half_widths[i]
    assert ratio == pytest.approx(1 / np.sqrt(10), rel=0.1)


def test_replicate_with_workers_matches_serial():
    spec = SimSpec(TOPO, CLASSES, NonOrthogonal(), 3000)
    taus = np.geomspace(1e-2, 10.0, 9)
    a = replicate(spec, 3, 1, taus, keep_samples=False)
    b = replicate(spec, 3, 1, taus, keep_samples=False, jobs=2)
    assert a.pooled["b"] == b.pooled["b"]


def test_reference_time_windows_partition_area():
    topo = FronthaulTopology.homogeneous(1, 2000.0)
    ref = run_reference(topo, [TrafficClass("q", 1.0, 1000.0, 1)], OrthogonalPath({"q": 1}), 20_000, 0, seed=2, windows=37)
    assert len(ref.window_area) == 37
    # windows cover the arrival span; the tail after the last arrival is excluded
    assert sum(ref.window_area) <= ref.time_avg_in_system * ref.horizon * (1 + 1e-12)
    assert sum(ref.window_area) > 0.99 * ref.time_avg_in_system * ref.horizon


def test_pure_python_fallback_selected_by_environment():
    import os
    import subprocess
    import sys

    env = {**os.environ, "FHBOUNDS_PURE_PYTHON": "1"}
    out = subprocess.run(
        [sys.executable, "-c", "from fhbounds.sim import BACKEND; print(BACKEND)"],
        capture_output=True, text=True, env=env, check=True,
    )
    assert out.stdout.strip() == "python"

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from fhbounds.bounds import ForkJoinConfig, bound_curve, lower_bound_tail, upper_bound_tail
from fhbounds.errors import InstabilityError, InvalidParameters


def unit_cfg(n, k):
    """Fork-join config whose per-block service rate is exactly 1."""
    return ForkJoinConfig(n, k, float(k), 1.0)


# Values computed with mpmath at 30 digits (direct summation, no logs) and frozen.
FROZEN_UPPER = [
    ((2, 1, 0.5, 1.0), 0.43113435976360307209),
    ((10, 5, 0.6, 3.0), 0.22413928683214043825),
    ((10, 1, 0.8, 40.0), 2.037223830311414555e-5),
    ((3, 3, 0.5, 60.0), 2.8035420017260665065e-13),
]
FROZEN_LOWER = [
    ((10, 9, 0.0, 3.0), 0.085503456489248802737),
    ((5, 1, 0.2, 8.0), 1.2664165549094153227e-14),
    ((10, 2, 0.5, 4.0), 1.3374941484517926391e-7),
]


def test_service_rate_scales_with_k():
    cfg = ForkJoinConfig(10, 4, 8000.0, 1e8)
    assert cfg.service_rate == pytest.approx(4 * 1e8 / 8000.0)


@pytest.mark.parametrize("n,k", [(3, 0), (3, 4), (0, 0), (2.5, 1)])
def test_bad_code_rejected(n, k):
    with pytest.raises(InvalidParameters):
        ForkJoinConfig(n, k, 1.0, 1.0)


def test_unstable_rejected():
    with pytest.raises(InstabilityError):
        lower_bound_tail(unit_cfg(3, 2), 1.0, 1.0)
    with pytest.raises(InstabilityError):
        upper_bound_tail(unit_cfg(3, 2), 1.5, 1.0)


def test_lower_bound_example():
    cfg = ForkJoinConfig(3, 2, 2.0, 1.0)
    p0 = math.exp(-0.5)
    want = 3 * (1 - p0) * p0**2 + p0**3
    assert lower_bound_tail(cfg, 0.0, 0.5) == pytest.approx(want, rel=1e-13)


@pytest.mark.parametrize("args,expected", FROZEN_LOWER)
def test_lower_bound_frozen(args, expected):
    n, k, lam, tau = args
    assert lower_bound_tail(unit_cfg(n, k), lam, tau) == pytest.approx(expected, rel=1e-11)


@pytest.mark.parametrize("args,expected", FROZEN_UPPER)
def test_upper_bound_frozen(args, expected):
    n, k, rho, tau = args
    assert upper_bound_tail(unit_cfg(n, k), rho, tau) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("n", [1, 2, 5, 10, 17])
def test_lower_bound_matches_binomial_cdf(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        k = int(rng.integers(1, n + 1))
        lam = float(rng.uniform(0.0, 0.95))
        tau = float(rng.uniform(0.0, 8.0))
        p_late = math.exp(-(1.0 - lam) * tau)
        # at most k-1 blocks on time
        want = binom.cdf(k - 1, n, 1.0 - p_late)
        assert lower_bound_tail(unit_cfg(n, k), lam, tau) == pytest.approx(want, rel=1e-10, abs=1e-300)


def test_tau_zero_is_certain_delay():
    assert lower_bound_tail(unit_cfg(4, 2), 0.3, 0.0) == 1.0
    # the truncated mixture may sit up to eps_trunc (relative) below the full sum
    assert upper_bound_tail(unit_cfg(4, 2), 0.3, 0.0) == pytest.approx(1.0, rel=1e-12)


def test_single_path_collapses_to_mm1():
    cfg = ForkJoinConfig(1, 1, 1.0, 1.0)
    assert upper_bound_tail(cfg, 0.0, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-12)
    for lam in (0.0, 0.4, 0.9, 0.999):
        for tau in (0.0, 0.3, 5.0, 300.0):
            want = math.exp(-(1 - lam) * tau)
            assert lower_bound_tail(cfg, lam, tau) == pytest.approx(want, rel=1e-12)
            assert upper_bound_tail(cfg, lam, tau) == pytest.approx(want, rel=1e-9)


def test_idle_queue_bounds_coincide():
    # with lambda = 0 every block is a bare exponential in both models
    for n, k in [(3, 2), (10, 5), (10, 10)]:
        for tau in (0.1, 1.0, 4.0):
            lb = lower_bound_tail(unit_cfg(n, k), 0.0, tau)
            assert upper_bound_tail(unit_cfg(n, k), 0.0, tau) == pytest.approx(lb, rel=1e-12)


def test_deep_tail_precision():
    # six significant digits far down the tail, against the frozen mpmath value
    got = upper_bound_tail(unit_cfg(3, 3), 0.5, 60.0)
    assert f"{got:.5e}" == f"{2.8035420017260665065e-13:.5e}"


def test_truncation_error_is_bounded():
    cfg = unit_cfg(10, 5)
    coarse = upper_bound_tail(cfg, 0.8, 30.0, eps_trunc=1e-3)
    fine = upper_bound_tail(cfg, 0.8, 30.0, eps_trunc=1e-14)
    assert coarse <= fine
    assert fine - coarse <= 1e-3 * fine


@settings(max_examples=150, deadline=None)
@given(
    n=st.integers(1, 12),
    data=st.data(),
    rho=st.floats(0.0, 0.95),
    tau=st.floats(0.0, 30.0),
    dt=st.floats(1e-3, 5.0),
)
def test_bounds_non_increasing_in_tau(n, data, rho, tau, dt):
    k = data.draw(st.integers(1, n))
    cfg = unit_cfg(n, k)
    for fn in (lower_bound_tail, upper_bound_tail):
        p = fn(cfg, rho, tau)
        assert 0.0 <= p <= 1.0
        assert fn(cfg, rho, tau + dt) <= p * (1 + 1e-12)


@settings(max_examples=150, deadline=None)
@given(n=st.integers(1, 12), rho=st.floats(0.0, 0.95), tau=st.floats(1e-4, 30.0))
def test_single_block_code_upper_dominates_lower(n, rho, tau):
    # for k = 1 the mixture is convex in the on-time probability, so
    # the mixed tail can never fall below the tail of the mean
    cfg = unit_cfg(n, 1)
    assert lower_bound_tail(cfg, rho, tau) <= upper_bound_tail(cfg, rho, tau) * (1 + 1e-9)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 12), data=st.data(), rho=st.floats(0.05, 0.9), tau=st.floats(0.05, 20.0))
def test_more_blocks_needed_means_later(n, data, rho, tau):
    k = data.draw(st.integers(1, n - 1))
    # same per-block service rate, stricter code
    a, b = unit_cfg(n, k), unit_cfg(n, k + 1)
    assert lower_bound_tail(a, rho, tau) <= lower_bound_tail(b, rho, tau) * (1 + 1e-12)
    assert upper_bound_tail(a, rho, tau) <= upper_bound_tail(b, rho, tau) * (1 + 1e-12)


def test_bound_curve_metadata_and_kind():
    taus = np.geomspace(1e-3, 10.0, 30)
    cfg = unit_cfg(5, 3)
    up = bound_curve(cfg, 0.5, taus, "upper", metadata={"class": "x"})
    lo = bound_curve(cfg, 0.5, taus, "lower")
    assert up.kind == "analytic-upper" and lo.kind == "analytic-lower"
    assert up.half_widths is None
    assert up.metadata["class"] == "x" and up.metadata["eps_trunc"] == 1e-12
    assert up.probs[5] == upper_bound_tail(cfg, 0.5, taus[5])
    with pytest.raises(InvalidParameters):
        bound_curve(cfg, 0.5, taus, "middle")
    with pytest.raises(InvalidParameters):
        bound_curve(cfg, 0.5, taus[::-1], "lower")

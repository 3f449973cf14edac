"""Output analysis for correlated simulation samples."""

from __future__ import annotations

import math

import numpy as np

from fhbounds.errors import EmptySampleError


def batch_means(samples, batches: int = 50) -> tuple[float, float]:
    """Grand mean and its standard error from ``batches`` contiguous batch means.

    Consecutive delays in a queue are positively correlated, so the naive
    iid standard error is too small; batching absorbs the correlation as long
    as each batch is much longer than the queue's relaxation time.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise EmptySampleError("batch_means needs at least one sample")
    batches = max(1, min(int(batches), x.size))
    size = x.size // batches
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    if batches == 1:
        return float(x.mean()), math.nan
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def mm1_mean_sojourn(arrival_rate: float, service_rate: float) -> float:
    return 1.0 / (service_rate - arrival_rate)


def mm1_mean_in_system(arrival_rate: float, service_rate: float) -> float:
    rho = arrival_rate / service_rate
    return rho / (1.0 - rho)

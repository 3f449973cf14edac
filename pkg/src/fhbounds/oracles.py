"""Monte Carlo oracles for the two fork-join bounds.

These sample the probabilistic models behind the bounds directly and share no
code with the closed forms: exponentials and geometrics come from inverse-CDF
transforms of uniforms, Erlang variables are sums of exponentials, and the
k-th order statistic is taken explicitly.
"""

from __future__ import annotations

import math

import numpy as np

from fhbounds.analytics import _check_tau
from fhbounds.bounds import ForkJoinConfig
from fhbounds.errors import InvalidParameters

_CHUNK_ELEMENTS = 1 << 22


def _exponentials(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    # 1 - U lies in (0, 1], so the log is finite
    return -np.log(1.0 - rng.random(shape)) / rate


def _kth_smallest(delays: np.ndarray, k: int) -> np.ndarray:
    return np.partition(delays, k - 1, axis=1)[:, k - 1]


def _check_samples(samples: int) -> int:
    if isinstance(samples, bool) or int(samples) != samples or samples < 1:
        raise InvalidParameters(f"samples must be a positive integer, got {samples!r}")
    return int(samples)


def _taus(tau):
    arr = np.atleast_1d(np.asarray(tau, dtype=float))
    for t in arr:
        _check_tau(t)
    return arr, np.ndim(tau) == 0


def _finish(exceed: np.ndarray, samples: int, scalar: bool):
    est = exceed / samples
    stderr = np.sqrt(est * (1.0 - est) / samples)
    if scalar:
        return float(est[0]), float(stderr[0])
    return est, stderr


def oracle_lower_bound_mc(cfg: ForkJoinConfig, arrival_rate: float, tau, samples: int, seed: int):
    """Estimate P{D > tau} with n independent Exponential(mu - lambda) link delays.

    ``tau`` may be a scalar or an array; every grid point reuses the same
    trials. Returns ``(estimate, standard_error)``.
    """
    queue = cfg.queue(arrival_rate)
    samples = _check_samples(samples)
    taus, scalar = _taus(tau)
    rng = np.random.default_rng(seed)
    chunk = max(1, _CHUNK_ELEMENTS // cfg.n)
    exceed = np.zeros(taus.size, dtype=np.int64)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        d = _kth_smallest(_exponentials(rng, (m, cfg.n), queue.decay_rate), cfg.k)
        exceed += (d[:, None] > taus[None, :]).sum(axis=0)
        done += m
    return _finish(exceed, samples, scalar)


def _shared_queue_lengths(rng: np.random.Generator, m: int, rho: float) -> np.ndarray:
    if rho == 0.0:
        return np.zeros(m, dtype=np.int64)
    # P{L >= l} = rho**l  =>  L = floor(log U / log rho), U in (0, 1]
    u = 1.0 - rng.random(m)
    return np.floor(np.log(u) / math.log(rho)).astype(np.int64)


def oracle_upper_bound_mc(cfg: ForkJoinConfig, arrival_rate: float, tau, samples: int, seed: int):
    """Estimate P{D > tau} when every link sees one shared queue length.

    Per trial: draw L with P{L = l} = (1 - rho) rho**l, then n conditionally
    independent Erlang(L + 1, mu) delays, then their k-th smallest.
    """
    queue = cfg.queue(arrival_rate)
    samples = _check_samples(samples)
    taus, scalar = _taus(tau)
    mu, rho = queue.service_rate, queue.utilization
    rng = np.random.default_rng(seed)
    chunk = max(1, _CHUNK_ELEMENTS // (cfg.n * 4))
    exceed = np.zeros(taus.size, dtype=np.int64)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        lengths = np.sort(_shared_queue_lengths(rng, m, rho))[::-1]
        delays = np.zeros((m, cfg.n))
        # trials sorted by L descending, so those needing stage s form a prefix
        active = m
        stage = 0
        while active > 0:
            delays[:active] += _exponentials(rng, (active, cfg.n), mu)
            stage += 1
            active = int(np.searchsorted(-lengths, -stage, side="right"))
        d = _kth_smallest(delays, cfg.k)
        exceed += (d[:, None] > taus[None, :]).sum(axis=0)
        done += m
    return _finish(exceed, samples, scalar)

"""Stationary M/M/1 primitives: sojourn tail, queue-length PMF, Erlang delay tail.

Everything here is a pure function of its arguments. Tail probabilities are
carried in log space wherever a value can fall below ~1e-300 or where a
complement ``1 - p`` would cancel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from fhbounds.errors import InstabilityError, InvalidParameters

DEFAULT_EPS_TRUNC = 1e-12


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not math.isfinite(tau) or tau < 0.0:
        raise InvalidParameters(f"tau must be finite and >= 0, got {tau!r}")
    return tau


def _check_eps(eps_trunc: float) -> float:
    eps_trunc = float(eps_trunc)
    if not 0.0 < eps_trunc < 1.0:
        raise InvalidParameters(f"eps_trunc must lie in (0, 1), got {eps_trunc!r}")
    return eps_trunc


@dataclass(frozen=True)
class Mm1Params:
    """Arrival and service rate (per second) of a stable M/M/1 queue."""

    arrival_rate: float
    service_rate: float

    def __post_init__(self) -> None:
        lam, mu = float(self.arrival_rate), float(self.service_rate)
        if not (math.isfinite(lam) and math.isfinite(mu)):
            raise InvalidParameters(f"rates must be finite, got lambda={lam!r}, mu={mu!r}")
        if mu <= 0.0:
            raise InvalidParameters(f"service_rate must be > 0, got {mu!r}")
        if lam < 0.0:
            raise InvalidParameters(f"arrival_rate must be >= 0, got {lam!r}")
        if lam >= mu:
            raise InstabilityError(
                f"unstable queue: arrival_rate {lam!r} >= service_rate {mu!r}"
            )
        object.__setattr__(self, "arrival_rate", lam)
        object.__setattr__(self, "service_rate", mu)

    @property
    def utilization(self) -> float:
        return self.arrival_rate / self.service_rate

    @property
    def decay_rate(self) -> float:
        """Exponential rate of the sojourn time, ``mu - lambda``."""
        return self.service_rate - self.arrival_rate


def log_sojourn_tail(params: Mm1Params, tau):
    """Natural log of P{sojourn > tau}; exact, never underflows."""
    return -params.decay_rate * np.asarray(tau, dtype=float)


def mm1_sojourn_tail(params: Mm1Params, tau: float) -> float:
    """P{d > tau} = exp(-(mu - lambda) tau) for the M/M/1 sojourn time d."""
    tau = _check_tau(tau)
    return math.exp(-params.decay_rate * tau)


@dataclass(frozen=True)
class QueueLengthPmf:
    """Geometric number-in-system law ``(1 - rho) rho**l`` truncated at ``truncation_index``.

    The mass discarded beyond the truncation index is exactly
    ``rho**(truncation_index + 1)`` and never exceeds ``eps_trunc``.
    """

    utilization: float
    truncation_index: int
    eps_trunc: float

    def term(self, l: int) -> float:
        if l < 0:
            raise InvalidParameters(f"queue length must be >= 0, got {l!r}")
        rho = self.utilization
        if rho == 0.0:
            return 1.0 if l == 0 else 0.0
        return (1.0 - rho) * rho**l

    def log_terms(self) -> np.ndarray:
        """log P{L = l} for l = 0 .. truncation_index."""
        rho = self.utilization
        l = np.arange(self.truncation_index + 1, dtype=float)
        if rho == 0.0:
            out = np.full(l.shape, -np.inf)
            out[0] = 0.0
            return out
        return math.log1p(-rho) + l * math.log(rho)

    def terms(self) -> np.ndarray:
        return np.exp(self.log_terms())

    @property
    def tail_mass(self) -> float:
        """Probability mass beyond the truncation index."""
        return self.utilization ** (self.truncation_index + 1)


def truncation_index(rho: float, eps_trunc: float) -> int:
    """Smallest L >= 0 with ``rho**(L + 1) <= eps_trunc``."""
    if rho == 0.0:
        return 0
    guess = max(0, math.ceil(math.log(eps_trunc) / math.log(rho)) - 1)
    # the logarithmic guess can be off by one from rounding; settle it by direct powers
    while rho ** (guess + 1) > eps_trunc:
        guess += 1
    while guess > 0 and rho**guess <= eps_trunc:
        guess -= 1
    return guess


def queue_length_pmf(params: Mm1Params, eps_trunc: float = DEFAULT_EPS_TRUNC) -> QueueLengthPmf:
    eps_trunc = _check_eps(eps_trunc)
    rho = params.utilization
    return QueueLengthPmf(rho, truncation_index(rho, eps_trunc), eps_trunc)


def _check_erlang_args(service_rate: float, tau: float) -> tuple[float, float]:
    mu = float(service_rate)
    if not math.isfinite(mu) or mu <= 0.0:
        raise InvalidParameters(f"service_rate must be finite and > 0, got {mu!r}")
    return mu, _check_tau(tau)


def _poisson_log_terms(x: float, m_max: int) -> np.ndarray:
    m = np.arange(m_max + 1, dtype=float)
    return m * math.log(x) - x - gammaln(m + 1.0)


def erlang_log_tail_table(service_rate: float, l_max: int, tau: float):
    """Log conditional delay tails for every queue length 0 .. l_max at once.

    Returns ``(log_p, log_q)`` where ``log_p[l] = log P{Erlang(l+1, mu) > tau}``
    and ``log_q[l] = log(1 - P{...})``. Both are accumulated directly from
    positive Poisson terms so neither side suffers cancellation.
    """
    mu, tau = _check_erlang_args(service_rate, tau)
    if l_max < 0:
        raise InvalidParameters(f"l_max must be >= 0, got {l_max!r}")
    x = mu * tau
    if x == 0.0:
        return np.zeros(l_max + 1), np.full(l_max + 1, -np.inf)
    # Poisson(x) terms decay super-geometrically past max(l_max, x); this many
    # extra terms leaves a remainder far below double rounding
    m_max = int(max(l_max, math.ceil(x)) + math.ceil(20.0 * math.sqrt(max(x, 1.0))) + 60)
    log_terms = _poisson_log_terms(x, m_max)
    log_p = np.minimum(np.logaddexp.accumulate(log_terms)[: l_max + 1], 0.0)
    upper = np.logaddexp.accumulate(log_terms[::-1])[::-1]
    log_q = np.minimum(upper[1 : l_max + 2], 0.0)
    # the larger of the two is best taken as the complement of the small one
    half = -math.log(2.0)
    big_p, big_q = log_q < half, log_p < half
    log_p = np.where(big_p, np.log(-np.expm1(np.minimum(log_q, half))), log_p)
    log_q = np.where(big_q, np.log(-np.expm1(np.minimum(log_p, half))), log_q)
    return log_p, log_q


def erlang_delay_tail(service_rate: float, l: int, tau: float) -> float:
    """Delay tail of a block that finds ``l`` others in an M/M/1 system.

    Equals ``sum_{m=0}^{l} (mu tau)^m exp(-mu tau) / m!``, i.e. the upper
    regularized incomplete gamma ``Q(l + 1, mu tau)``, accumulated in log
    space.
    """
    mu, tau = _check_erlang_args(service_rate, tau)
    if isinstance(l, bool) or int(l) != l or l < 0:
        raise InvalidParameters(f"l must be a non-negative integer, got {l!r}")
    l = int(l)
    log_p, _ = erlang_log_tail_table(mu, l, tau)
    return float(math.exp(log_p[l]))

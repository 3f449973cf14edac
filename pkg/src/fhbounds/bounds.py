"""Lower and upper tail bounds on (n, k) fork-join delay over homogeneous M/M/1 links.

The lower bound treats the n link delays as independent M/M/1 sojourn times.
The upper bound forces every link to see the same queue length L (geometric)
and treats the n delays as conditionally independent Erlang(L + 1) variables.
In both cases the packet is late when fewer than k links finish by tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from fhbounds.analytics import (
    DEFAULT_EPS_TRUNC,
    Mm1Params,
    QueueLengthPmf,
    _check_eps,
    _check_tau,
    erlang_log_tail_table,
    queue_length_pmf,
)
from fhbounds.curves import DelayCurve
from fhbounds.errors import InvalidParameters


@dataclass(frozen=True)
class ForkJoinConfig:
    """(n, k) erasure-coded fan-out over homogeneous paths.

    ``packet_size`` is in bits and ``path_capacity`` in bits per second; each
    of the n blocks carries ``packet_size / k`` bits.
    """

    n: int
    k: int
    packet_size: float
    path_capacity: float

    def __post_init__(self) -> None:
        for name in ("n", "k"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise InvalidParameters(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not 1 <= self.k <= self.n:
            raise InvalidParameters(f"need 1 <= k <= n, got n={self.n}, k={self.k}")
        for name in ("packet_size", "path_capacity"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise InvalidParameters(f"{name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def service_rate(self) -> float:
        """Per-block service rate ``k * psi / B`` of one path."""
        return self.k * self.path_capacity / self.packet_size

    def queue(self, arrival_rate: float) -> Mm1Params:
        return Mm1Params(arrival_rate, self.service_rate)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "packet_size_bits": self.packet_size,
            "path_capacity_bps": self.path_capacity,
        }


def _log_binom(n: int, j: np.ndarray) -> np.ndarray:
    return gammaln(n + 1.0) - gammaln(j + 1.0) - gammaln(n - j + 1.0)


def _weighted(count, log_x):
    # count * log_x with the convention 0 * log(0) = 0
    count = np.asarray(count, dtype=float)
    with np.errstate(invalid="ignore"):
        out = count * log_x
    return np.where(count == 0.0, 0.0, out)


def log_binomial_lower_tail(n: int, k: int, log_late, log_on_time):
    """log sum_{j<k} C(n, j) on_time^j late^(n-j), broadcast over the inputs.

    ``j`` indexes the number of links that finished by tau; the last axis of
    the internal term array runs over j.
    """
    log_late = np.asarray(log_late, dtype=float)[..., None]
    log_on_time = np.asarray(log_on_time, dtype=float)[..., None]
    j = np.arange(k, dtype=float)
    terms = _log_binom(n, j) + _weighted(j, log_on_time) + _weighted(n - j, log_late)
    return logsumexp(terms, axis=-1)


def _log1mexp(log_p):
    """log(1 - exp(log_p)) for log_p <= 0, accurate at both ends."""
    log_p = np.asarray(log_p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(
            log_p > -math.log(2.0),
            np.log(-np.expm1(log_p)),
            np.log1p(-np.exp(log_p)),
        )


def log_lower_bound_tail(cfg: ForkJoinConfig, arrival_rate: float, tau: float) -> float:
    queue = cfg.queue(arrival_rate)
    tau = _check_tau(tau)
    log_p0 = -queue.decay_rate * tau
    return float(log_binomial_lower_tail(cfg.n, cfg.k, log_p0, _log1mexp(log_p0)))


def lower_bound_tail(cfg: ForkJoinConfig, arrival_rate: float, tau: float) -> float:
    """P{D > tau} when the n link sojourn times are independent."""
    return min(math.exp(log_lower_bound_tail(cfg, arrival_rate, tau)), 1.0)


def log_upper_bound_tail(
    cfg: ForkJoinConfig,
    arrival_rate: float,
    tau: float,
    eps_trunc: float = DEFAULT_EPS_TRUNC,
) -> float:
    queue = cfg.queue(arrival_rate)
    tau = _check_tau(tau)
    eps_trunc = _check_eps(eps_trunc)
    pmf = queue_length_pmf(queue, eps_trunc)
    value = _log_mixture(cfg, queue.service_rate, tau, pmf)
    rho = pmf.utilization
    if rho > 0.0 and math.isfinite(value):
        # the dropped mass rho**(L+1) must also be small relative to the value
        needed = math.ceil((math.log(eps_trunc) + value) / math.log(rho)) - 1
        if needed > pmf.truncation_index:
            pmf = QueueLengthPmf(rho, needed, eps_trunc)
            value = _log_mixture(cfg, queue.service_rate, tau, pmf)
    return float(value)


def _log_mixture(cfg: ForkJoinConfig, service_rate: float, tau: float, pmf: QueueLengthPmf) -> float:
    log_p1, log_q1 = erlang_log_tail_table(service_rate, pmf.truncation_index, tau)
    # one binomial tail per queue length l, then mix over the geometric weights
    per_l = log_binomial_lower_tail(cfg.n, cfg.k, log_p1, log_q1)
    return float(logsumexp(per_l + pmf.log_terms()))


def upper_bound_tail(
    cfg: ForkJoinConfig,
    arrival_rate: float,
    tau: float,
    eps_trunc: float = DEFAULT_EPS_TRUNC,
) -> float:
    """P{D > tau} when all n links share one queue length.

    The geometric mixture is truncated once the discarded mass is below
    ``eps_trunc`` both absolutely and relative to the partial sum, so the value
    sits at most ``eps_trunc * value`` below the untruncated sum.
    """
    return min(math.exp(log_upper_bound_tail(cfg, arrival_rate, tau, eps_trunc)), 1.0)


def bound_curve(
    cfg: ForkJoinConfig,
    arrival_rate: float,
    tau_grid,
    which: str,
    eps_trunc: float = DEFAULT_EPS_TRUNC,
    metadata: dict | None = None,
) -> DelayCurve:
    """Tabulate the lower or upper bound on a strictly increasing tau grid."""
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise InvalidParameters("tau_grid must be a non-empty 1-d sequence")
    if np.any(np.diff(taus) <= 0.0):
        raise InvalidParameters("tau_grid must be strictly increasing")
    if which == "lower":
        probs = [lower_bound_tail(cfg, arrival_rate, t) for t in taus]
    elif which == "upper":
        probs = [upper_bound_tail(cfg, arrival_rate, t, eps_trunc) for t in taus]
    else:
        raise InvalidParameters(f"which must be 'lower' or 'upper', got {which!r}")
    meta = {
        "fork_join": cfg.as_dict(),
        "arrival_rate_per_s": float(arrival_rate),
        "service_rate_per_s": cfg.service_rate,
    }
    if which == "upper":
        meta["eps_trunc"] = float(eps_trunc)
    meta.update(metadata or {})
    return DelayCurve(f"analytic-{which}", taus, np.asarray(probs), None, meta)

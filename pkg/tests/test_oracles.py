import math

import numpy as np
import pytest

from fhbounds.bounds import ForkJoinConfig, lower_bound_tail, upper_bound_tail
from fhbounds.errors import InvalidParameters
from fhbounds.oracles import oracle_lower_bound_mc, oracle_upper_bound_mc


def test_lower_oracle_single_path_at_zero():
    est, se = oracle_lower_bound_mc(ForkJoinConfig(1, 1, 1.0, 1.0), 0.0, 0.0, 1000, seed=1)
    assert est == 1.0 and se == 0.0


def test_lower_oracle_two_paths_first_of_two():
    # P{min of two Exp(1) > ln 2 / 2} = 1/2
    est, se = oracle_lower_bound_mc(ForkJoinConfig(2, 1, 1.0, 1.0), 0.0, math.log(2) / 2, 400_000, seed=3)
    assert abs(est - 0.5) <= 4 * se


def test_oracles_are_seeded():
    cfg = ForkJoinConfig(5, 3, 3.0, 1.0)
    a = oracle_upper_bound_mc(cfg, 0.5, [0.5, 2.0], 20_000, seed=9)
    b = oracle_upper_bound_mc(cfg, 0.5, [0.5, 2.0], 20_000, seed=9)
    np.testing.assert_array_equal(a[0], b[0])
    c = oracle_upper_bound_mc(cfg, 0.5, [0.5, 2.0], 20_000, seed=10)
    assert not np.array_equal(a[0], c[0])


def test_vector_tau_matches_scalar():
    cfg = ForkJoinConfig(3, 2, 2.0, 1.0)
    est, se = oracle_lower_bound_mc(cfg, 0.2, np.array([0.5, 1.0]), 50_000, seed=4)
    one, _ = oracle_lower_bound_mc(cfg, 0.2, 1.0, 50_000, seed=4)
    assert est.shape == (2,) and est[1] == one


@pytest.mark.parametrize("rho", [0.2, 0.7])
def test_oracles_agree_with_closed_forms(rho):
    cfg = ForkJoinConfig(4, 2, 2.0, 1.0)
    taus = np.array([0.2, 1.0, 3.0])
    lo, lo_se = oracle_lower_bound_mc(cfg, rho * cfg.service_rate, taus, 200_000, seed=5)
    up, up_se = oracle_upper_bound_mc(cfg, rho * cfg.service_rate, taus, 200_000, seed=6)
    for i, t in enumerate(taus):
        assert abs(lo[i] - lower_bound_tail(cfg, rho * cfg.service_rate, t)) <= 4 * lo_se[i] + 1e-12
        assert abs(up[i] - upper_bound_tail(cfg, rho * cfg.service_rate, t)) <= 4 * up_se[i] + 1e-12


def test_bad_sample_count():
    with pytest.raises(InvalidParameters):
        oracle_lower_bound_mc(ForkJoinConfig(1, 1, 1.0, 1.0), 0.0, 1.0, 0, seed=0)

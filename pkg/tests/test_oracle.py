import math

import numpy as np
import pytest

from bw_planner.analytic import CumulativeModel, loss_exact
from bw_planner.distributions import Deterministic, Erlang, Exponential, Hyperexponential2, with_rate
from bw_planner.errors import DomainError
from bw_planner.oracle import ctmc_chain, ctmc_loss, embedded_chain, embedded_loss


def test_ctmc_examples():
    assert ctmc_loss(0.5, 1.0, 1, 2) == pytest.approx(1 / 7, rel=1e-12)
    assert ctmc_loss(0.5, 1.0, 1, 1) == pytest.approx(1 / 3, rel=1e-12)


def test_ctmc_full_clearing():
    # C >= N + 1: every departure empties the buffer
    lam, mu, N = 1.0, 2.0, 2
    # balance: pi_0 lam = mu (pi_1 + pi_2), pi_1 (lam + mu) = lam pi_0, pi_2 mu = lam pi_1
    pi0 = 1.0
    pi1 = lam * pi0 / (lam + mu)
    pi2 = lam * pi1 / mu
    expected = pi2 / (pi0 + pi1 + pi2)
    assert ctmc_loss(lam, mu, 3, N) == pytest.approx(expected, rel=1e-12)
    assert ctmc_loss(lam, mu, 5, N) == pytest.approx(expected, rel=1e-12)


def test_min_rule_batch_example():
    # M/M^2/1/2 at lam = mu = 1: pi = (2, 1, 1) / 4
    assert ctmc_loss(1.0, 1.0, 2, 2) == pytest.approx(0.25, rel=1e-12)
    model = CumulativeModel(Exponential(1.0), 1.0, 1.0, 2)
    assert loss_exact(model, 2) == pytest.approx(0.25, rel=1e-12)


@pytest.mark.parametrize("C", [1, 2, 3])
@pytest.mark.parametrize("N", [1, 2, 5, 9, 15])
def test_embedded_chain_matches_ctmc_for_poisson(C, N):
    lam, mu = 0.7 * C, 1.0
    assert embedded_loss(Exponential(lam), mu, C, N) == pytest.approx(ctmc_loss(lam, mu, C, N), rel=1e-9)


def test_deterministic_two_state_chain():
    # from either state the next arrival sees 1 only if no departure epoch occurred
    mu, d = 1.0, 0.8
    assert embedded_loss(Deterministic(d), mu, 1, 1) == pytest.approx(math.exp(-mu * d), rel=1e-12)


def _grid_dists(C):
    lam = 0.65 * C
    return [
        with_rate(Exponential(1.0), lam),
        with_rate(Deterministic(1.0), lam),
        with_rate(Erlang(2, 1.0), lam),
        with_rate(Hyperexponential2(0.3, 0.4, 3.0), lam),
    ]


@pytest.mark.parametrize("C", [1, 2, 3])
def test_exact_loss_matches_embedded_chain(C):
    for dist in _grid_dists(C):
        model = CumulativeModel(dist, dist.intensity, 1.0, C)
        for N in range(1, 16):
            assert loss_exact(model, N) == pytest.approx(embedded_loss(dist, 1.0, C, N), rel=1e-9), (dist, N)


@pytest.mark.parametrize("C", [1, 2, 3])
def test_exact_loss_matches_ctmc(C):
    lam = 0.8 * C
    model = CumulativeModel(Exponential(lam), lam, 1.0, C)
    for N in range(1, 16):
        assert loss_exact(model, N) == pytest.approx(ctmc_loss(lam, 1.0, C, N), rel=1e-9)


def test_large_quota_agreement():
    dist = Exponential(0.5)
    model = CumulativeModel(dist, 0.5, 1.0, 1)
    assert embedded_loss(dist, 1.0, 1, 80) == pytest.approx(loss_exact(model, 80), rel=1e-9)


def test_chains_are_stochastic():
    for chain in (ctmc_chain(1.3, 1.0, 2, 12), embedded_chain(Erlang(2, 2.6), 1.0, 2, 12)):
        pi = chain.stationary()
        assert chain.size == 13
        assert np.all(pi >= 0.0)
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(ctmc_chain(1.3, 1.0, 2, 12).matrix.sum(axis=1)).max() <= 1e-12
    assert np.abs(embedded_chain(Erlang(2, 2.6), 1.0, 2, 12).matrix.sum(axis=1) - 1).max() <= 1e-12


def test_oracle_size_guard():
    with pytest.raises(DomainError):
        ctmc_loss(0.5, 1.0, 1, 201)


def test_stationary_vector_balances_the_chain():
    assert ctmc_chain(1.3, 1.0, 2, 30).balance_residual() <= 1e-12
    assert embedded_chain(Deterministic(0.9), 1.0, 3, 30).balance_residual() <= 1e-12

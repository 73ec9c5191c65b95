import math

import numpy as np
import pytest

from bw_planner.distributions import (
    Deterministic,
    Erlang,
    Exponential,
    Hyperexponential2,
    Thinned,
    UnitLength,
    from_record,
    lst,
    lst_derivative,
    make_stream,
    moments,
    sample,
    thinned,
    unit_length_from_record,
    with_rate,
)
from bw_planner.errors import DomainError

FAMILIES = [
    Exponential(2.0),
    Deterministic(0.7),
    Erlang(3, 4.0),
    Hyperexponential2(0.3, 0.5, 3.0),
    Thinned(Erlang(2, 3.0), 0.4),
]


def test_lst_closed_forms():
    assert lst(Exponential(2.0), 0.0) == 1.0
    assert lst(Exponential(2.0), 2.0) == pytest.approx(0.5)
    assert lst(Deterministic(1.0), math.log(2.0)) == pytest.approx(0.5)
    assert lst(Erlang(2, 1.0), 1.0) == pytest.approx(0.25)
    assert lst(Hyperexponential2(0.5, 1.0, 3.0), 1.0) == pytest.approx(0.5 * 0.5 + 0.5 * 0.75)


def test_lst_derivative_closed_forms():
    assert lst_derivative(Exponential(1.0), 0.0) == pytest.approx(-1.0)
    assert lst_derivative(Deterministic(2.5), 0.0) == pytest.approx(-2.5)
    assert lst_derivative(Exponential(1.0), 1.0) == pytest.approx(-0.25)


@pytest.mark.parametrize("dist", FAMILIES, ids=str)
def test_negative_argument_is_rejected(dist):
    with pytest.raises(DomainError):
        lst(dist, -0.1)
    with pytest.raises(DomainError):
        lst_derivative(dist, -1e-9)


@pytest.mark.parametrize("dist", FAMILIES, ids=str)
def test_lst_is_bounded_and_nonincreasing(dist):
    grid = np.linspace(0.0, 20.0, 100)
    values = [lst(dist, s) for s in grid]
    assert values[0] == pytest.approx(1.0, abs=1e-15)
    assert all(0.0 < v <= 1.0 for v in values)
    assert all(b <= a for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("dist", FAMILIES, ids=str)
def test_lst_derivative_matches_central_difference(dist):
    h = 1e-5
    for s in np.linspace(0.01, 10.0, 25):
        numeric = (lst(dist, s + h) - lst(dist, s - h)) / (2 * h)
        exact = lst_derivative(dist, s)
        assert exact <= 0.0
        assert abs(exact - numeric) <= 1e-6


@pytest.mark.parametrize("dist", FAMILIES, ids=str)
@pytest.mark.parametrize("mu", [0.5, 1.0, 3.0])
def test_first_moment_matches_transform_slope(dist, mu):
    m = moments(dist, mu)
    assert m.rho_1 == pytest.approx(-mu * lst_derivative(dist, 0.0), rel=1e-12)
    assert m.rho_2 >= m.rho_1 ** 2


def test_moments_examples():
    m = moments(Exponential(1.5), 1.5)
    assert (m.rho_1, m.rho_2, m.rho_3) == pytest.approx((1.0, 2.0, 6.0))
    m = moments(Deterministic(1 / 4.0), 4.0)
    assert (m.rho_1, m.rho_2, m.rho_3) == pytest.approx((1.0, 1.0, 1.0))
    m = moments(Erlang(2, 2.0), 1.0)
    assert (m.rho_1, m.rho_2) == pytest.approx((1.0, 1.5))


def test_thinned_exponential_is_exponential():
    base = Exponential(2.0)
    direct = Thinned(base, 0.25)
    closed = Exponential(0.5)
    assert thinned(base, 0.25) == closed
    for j in (1, 2, 3):
        assert direct.raw_moment(j) == pytest.approx(closed.raw_moment(j), rel=1e-12)
    for s in (0.0, 0.3, 2.0):
        assert direct.lst(s) == pytest.approx(closed.lst(s), rel=1e-12)
    assert direct.batch_weights(1.0, 30) == pytest.approx(closed.batch_weights(1.0, 30), rel=1e-10)


def test_thinning_with_full_keep_returns_base():
    base = Erlang(2, 1.0)
    assert thinned(base, 1.0) is base


@pytest.mark.parametrize("dist", FAMILIES, ids=str)
def test_batch_weights_are_a_probability_law(dist):
    mu = 1.3
    w = dist.batch_weights(mu, 400)
    assert np.all(w >= 0.0)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    # mean number of epochs in T equals mu E[T]
    assert np.dot(np.arange(400), w) == pytest.approx(mu * dist.mean, rel=1e-9)


def test_exponential_batch_weights_are_geometric():
    w = Exponential(0.5).batch_weights(1.0, 6)
    expected = [(1 / 3) * (2 / 3) ** j for j in range(6)]
    assert w == pytest.approx(expected, rel=1e-12)


def test_deterministic_sample_is_point_mass():
    stream = make_stream(7, "arrivals")
    assert sample(Deterministic(3.0), stream) == 3.0
    assert np.all(sample(Deterministic(3.0), stream, 10) == 3.0)


def test_exponential_sample_mean():
    stream = make_stream(11, "arrivals")
    draws = sample(Exponential(2.0), stream, 1_000_000)
    sigma = 0.5
    assert abs(draws.mean() - 0.5) <= 3 * sigma / 1000.0


@pytest.mark.parametrize("dist", FAMILIES, ids=str)
def test_same_seed_gives_same_sequence(dist):
    a = sample(dist, make_stream(42, "arrivals", 3), 50)
    b = sample(dist, make_stream(42, "arrivals", 3), 50)
    np.testing.assert_array_equal(a, b)


def test_streams_differ_by_name_and_replication():
    base = make_stream(42, "arrivals", 0).random(5)
    assert not np.array_equal(base, make_stream(42, "departures", 0).random(5))
    assert not np.array_equal(base, make_stream(42, "arrivals", 1).random(5))


def test_thinned_sample_mean():
    dist = Thinned(Deterministic(1.0), 0.5)
    draws = sample(dist, make_stream(5, "arrivals"), 200_000)
    assert np.all(draws >= 1.0)
    assert draws.mean() == pytest.approx(2.0, rel=0.02)


@pytest.mark.parametrize(
    "record",
    [
        {"family": "exponential", "rate": 0.5},
        {"family": "deterministic", "d": 2.0},
        {"family": "erlang", "shape": 2, "rate": 4.0},
        {"family": "hyperexponential2", "p": 0.2, "rate1": 1.0, "rate2": 5.0},
        {"family": "thinned", "q": 0.5, "base": {"family": "deterministic", "d": 1.0}},
    ],
)
def test_records(record):
    assert from_record(record).to_record() == record


def test_unknown_family_is_rejected():
    with pytest.raises(DomainError):
        from_record({"family": "pareto", "alpha": 1.5})


@pytest.mark.parametrize("bad", [lambda: Exponential(0.0), lambda: Erlang(0, 1.0),
                                 lambda: Hyperexponential2(1.0, 1.0, 1.0), lambda: Deterministic(-1.0)])
def test_invalid_parameters_are_rejected(bad):
    with pytest.raises(DomainError):
        bad()


@pytest.mark.parametrize("dist", FAMILIES[:4], ids=str)
def test_with_rate_rescales_intensity(dist):
    assert with_rate(dist, 0.8).intensity == pytest.approx(0.8, rel=1e-12)


def test_unit_lengths():
    stream = make_stream(1, "lengths")
    assert UnitLength().is_unit
    assert np.all(UnitLength().draw(stream, 5) == 1)
    uniform = unit_length_from_record({"family": "uniform", "low": 2, "high": 4})
    draws = uniform.draw(stream, 1000)
    assert draws.min() >= 2 and draws.max() <= 4
    assert uniform.mean == 3.0
    geometric = unit_length_from_record({"family": "geometric", "mean": 2.0})
    assert geometric.draw(stream, 1000).min() >= 1
    assert unit_length_from_record(None) == UnitLength()

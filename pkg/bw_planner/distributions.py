"""Interarrival-time distribution families.

Every family exposes its Laplace-Stieltjes transform, the exact derivative
of the transform, raw moments, seeded block sampling and the mixed-Poisson
batch weights ``w_i = int e^{-mu x} (mu x)^i / i! dB(x)`` that the analytic
and oracle modules build their chains from. Values are immutable and safe
to share between threads; samplers mutate only the stream they are given.
"""

import math
import zlib
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy import stats

from .errors import DomainError
from .log import get_logger

log = get_logger(__name__)

Stream = np.random.Generator


# ============================================================================
# Seeded streams
# ============================================================================

def make_stream(seed: int, name: str, replication: int = 0) -> Stream:
    """Return a named counter-based stream for one replication.

    Streams with different names or replication indices are independent;
    the same (seed, name, replication) always yields the same sequence.
    """
    key = (int(replication), zlib.crc32(name.encode("utf-8")))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


# ============================================================================
# Interarrival families
# ============================================================================

@dataclass(frozen=True)
class Moments:
    """Normalized raw moments rho_j = mu^j E[T^j]."""
    rho_1: float
    rho_2: float
    rho_3: float


class InterarrivalDistribution:
    """Base class for the closed-form interarrival families."""

    family = ""

    @property
    def mean(self) -> float:
        return self.raw_moment(1)

    @property
    def intensity(self) -> float:
        """Arrival intensity of the renewal process, 1 / E[T]."""
        return 1.0 / self.mean

    def lst(self, s: float) -> float:
        """Laplace-Stieltjes transform B(s) for s >= 0."""
        return self._lst(_check_s(s))

    def lst_derivative(self, s: float) -> float:
        """Derivative dB/ds for s >= 0; never positive."""
        return self._lst_derivative(_check_s(s))

    def raw_moment(self, j: int) -> float:
        if j < 1:
            raise DomainError(f"moment order must be positive, got {j}")
        return self._raw_moment(j)

    def draw(self, stream: Stream, size: int) -> np.ndarray:
        return self._draw(stream, int(size))

    def batch_weights(self, mu: float, n: int) -> np.ndarray:
        """First ``n`` probabilities of the number of mu-Poisson epochs in T."""
        if mu <= 0:
            raise DomainError(f"mu must be positive, got {mu}")
        return np.asarray(self._batch_weights(float(mu), int(n)), dtype=float)

    def to_record(self) -> Dict[str, Any]:
        raise NotImplementedError

    def _lst(self, s: float) -> float:
        raise NotImplementedError

    def _lst_derivative(self, s: float) -> float:
        raise NotImplementedError

    def _raw_moment(self, j: int) -> float:
        raise NotImplementedError

    def _draw(self, stream: Stream, size: int) -> np.ndarray:
        raise NotImplementedError

    def _batch_weights(self, mu: float, n: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(InterarrivalDistribution):
    rate: float

    family = "exponential"

    def __post_init__(self):
        _check_positive("rate", self.rate)

    def _lst(self, s: float) -> float:
        return self.rate / (self.rate + s)

    def _lst_derivative(self, s: float) -> float:
        return -self.rate / (self.rate + s) ** 2

    def _raw_moment(self, j: int) -> float:
        return math.factorial(j) / self.rate ** j

    def _draw(self, stream: Stream, size: int) -> np.ndarray:
        return stream.exponential(1.0 / self.rate, size)

    def _batch_weights(self, mu: float, n: int) -> np.ndarray:
        # geometric: P(i) = p (1-p)^i with p = lambda / (lambda + mu)
        p = self.rate / (self.rate + mu)
        return stats.geom.pmf(np.arange(n) + 1, p)

    def to_record(self) -> Dict[str, Any]:
        return {"family": self.family, "rate": self.rate}

    def __str__(self) -> str:
        return f"Exp(rate={self.rate:g})"


@dataclass(frozen=True)
class Deterministic(InterarrivalDistribution):
    d: float

    family = "deterministic"

    def __post_init__(self):
        _check_positive("d", self.d)

    def _lst(self, s: float) -> float:
        return math.exp(-s * self.d)

    def _lst_derivative(self, s: float) -> float:
        return -self.d * math.exp(-s * self.d)

    def _raw_moment(self, j: int) -> float:
        return self.d ** j

    def _draw(self, stream: Stream, size: int) -> np.ndarray:
        return np.full(size, self.d)

    def _batch_weights(self, mu: float, n: int) -> np.ndarray:
        return stats.poisson.pmf(np.arange(n), mu * self.d)

    def to_record(self) -> Dict[str, Any]:
        return {"family": self.family, "d": self.d}

    def __str__(self) -> str:
        return f"Det(d={self.d:g})"


@dataclass(frozen=True)
class Erlang(InterarrivalDistribution):
    shape: int
    rate: float

    family = "erlang"

    def __post_init__(self):
        if int(self.shape) != self.shape or self.shape < 1:
            raise DomainError(f"Erlang shape must be a positive integer, got {self.shape}")
        _check_positive("rate", self.rate)

    def _lst(self, s: float) -> float:
        return (self.rate / (self.rate + s)) ** self.shape

    def _lst_derivative(self, s: float) -> float:
        k, r = self.shape, self.rate
        return -k * r ** k / (r + s) ** (k + 1)

    def _raw_moment(self, j: int) -> float:
        # k (k+1) ... (k+j-1) / rate^j
        return math.prod(range(self.shape, self.shape + j)) / self.rate ** j

    def _draw(self, stream: Stream, size: int) -> np.ndarray:
        return stream.gamma(self.shape, 1.0 / self.rate, size)

    def _batch_weights(self, mu: float, n: int) -> np.ndarray:
        return stats.nbinom.pmf(np.arange(n), self.shape, self.rate / (self.rate + mu))

    def to_record(self) -> Dict[str, Any]:
        return {"family": self.family, "shape": self.shape, "rate": self.rate}

    def __str__(self) -> str:
        return f"Erlang(k={self.shape}, rate={self.rate:g})"


@dataclass(frozen=True)
class Hyperexponential2(InterarrivalDistribution):
    p: float
    rate1: float
    rate2: float

    family = "hyperexponential2"

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"branch probability must lie in (0, 1), got {self.p}")
        _check_positive("rate1", self.rate1)
        _check_positive("rate2", self.rate2)

    @property
    def _branches(self):
        return ((self.p, Exponential(self.rate1)), (1.0 - self.p, Exponential(self.rate2)))

    def _lst(self, s: float) -> float:
        return sum(w * b._lst(s) for w, b in self._branches)

    def _lst_derivative(self, s: float) -> float:
        return sum(w * b._lst_derivative(s) for w, b in self._branches)

    def _raw_moment(self, j: int) -> float:
        return sum(w * b._raw_moment(j) for w, b in self._branches)

    def _draw(self, stream: Stream, size: int) -> np.ndarray:
        first = stream.random(size) < self.p
        rates = np.where(first, self.rate1, self.rate2)
        return stream.exponential(1.0, size) / rates

    def _batch_weights(self, mu: float, n: int) -> np.ndarray:
        return sum(w * b._batch_weights(mu, n) for w, b in self._branches)

    def to_record(self) -> Dict[str, Any]:
        return {"family": self.family, "p": self.p, "rate1": self.rate1, "rate2": self.rate2}

    def __str__(self) -> str:
        return f"H2(p={self.p:g}, rate1={self.rate1:g}, rate2={self.rate2:g})"


@dataclass(frozen=True)
class Thinned(InterarrivalDistribution):
    """Interarrival time of a renewal stream thinned with keep-probability q.

    T is a geometric(q) sum of base interarrival times, so the transform is
    ``q B(s) / (1 - (1 - q) B(s))``.
    """
    base: InterarrivalDistribution
    q: float

    family = "thinned"

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise DomainError(f"keep probability must lie in (0, 1], got {self.q}")

    def _lst(self, s: float) -> float:
        b = self.base._lst(s)
        return self.q * b / (1.0 - (1.0 - self.q) * b)

    def _lst_derivative(self, s: float) -> float:
        b = self.base._lst(s)
        return self.q * self.base._lst_derivative(s) / (1.0 - (1.0 - self.q) * b) ** 2

    def _raw_moment(self, j: int) -> float:
        if j > 3:
            raise DomainError("thinned moments are available up to order 3")
        q = self.q
        m = [self.base._raw_moment(i) for i in (1, 2, 3)]
        # factorial moments of the geometric count: r! (1-q)^(r-1) / q^r
        g1, g2, g3 = 1.0 / q, 2.0 * (1.0 - q) / q ** 2, 6.0 * (1.0 - q) ** 2 / q ** 3
        if j == 1:
            return g1 * m[0]
        if j == 2:
            return g1 * m[1] + g2 * m[0] ** 2
        return g1 * m[2] + 3.0 * g2 * m[0] * m[1] + g3 * m[0] ** 3

    def _draw(self, stream: Stream, size: int) -> np.ndarray:
        counts = stream.geometric(self.q, size)
        pieces = self.base._draw(stream, int(counts.sum()))
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        return np.add.reduceat(pieces, starts)

    def _batch_weights(self, mu: float, n: int) -> np.ndarray:
        # coefficients of q P(u) / (1 - (1-q) P(u)) by series division
        w = self.base._batch_weights(mu, n)
        q = self.q
        c = np.zeros(n)
        denom = 1.0 - (1.0 - q) * w[0]
        for k in range(n):
            tail = math.fsum(w[1:k + 1] * c[k - 1::-1][:k]) if k else 0.0
            c[k] = (q * w[k] + (1.0 - q) * tail) / denom
        return c

    def to_record(self) -> Dict[str, Any]:
        return {"family": self.family, "q": self.q, "base": self.base.to_record()}

    def __str__(self) -> str:
        return f"Thinned({self.base}, q={self.q:g})"


def thinned(dist: InterarrivalDistribution, q: float) -> InterarrivalDistribution:
    """Interarrival law of a thinning of ``dist`` with keep-probability ``q``.

    Exponential stays exponential; q = 1 returns ``dist`` itself.
    """
    if q >= 1.0:
        return dist
    if isinstance(dist, Exponential):
        return Exponential(dist.rate * q)
    return Thinned(dist, q)


# ============================================================================
# Operations
# ============================================================================

def lst(dist: InterarrivalDistribution, s: float) -> float:
    return dist.lst(s)


def lst_derivative(dist: InterarrivalDistribution, s: float) -> float:
    return dist.lst_derivative(s)


def moments(dist: InterarrivalDistribution, mu: float) -> Moments:
    """Normalized moments rho_j = mu^j E[T^j], j = 1, 2, 3.

    Args:
        dist: Interarrival distribution
        mu: Depletion epoch rate used as the time unit

    Returns:
        Moments record
    """
    _check_positive("mu", mu)
    return Moments(*(mu ** j * dist.raw_moment(j) for j in (1, 2, 3)))


def sample(
    dist: InterarrivalDistribution,
    stream: Stream,
    size: Optional[int] = None,
) -> Union[float, np.ndarray]:
    """Draw one value (size=None) or a block of i.i.d. values."""
    if size is None:
        return float(dist.draw(stream, 1)[0])
    return dist.draw(stream, size)


# ============================================================================
# Unit lengths
# ============================================================================

@dataclass(frozen=True)
class UnitLength:
    """Law of the positive integer length of an arriving unit."""
    family: str = "constant"
    value: int = 1
    mean_: float = 1.0
    low: int = 1
    high: int = 1

    def __post_init__(self):
        if self.family not in ("constant", "geometric", "uniform"):
            raise DomainError(f"unknown unit length family: {self.family}")
        if self.family == "constant" and self.value < 1:
            raise DomainError("constant unit length must be >= 1")
        if self.family == "geometric" and self.mean_ < 1.0:
            raise DomainError("geometric unit length mean must be >= 1")
        if self.family == "uniform" and not 1 <= self.low <= self.high:
            raise DomainError("uniform unit length needs 1 <= low <= high")

    @property
    def mean(self) -> float:
        if self.family == "constant":
            return float(self.value)
        if self.family == "geometric":
            return self.mean_
        return (self.low + self.high) / 2.0

    @property
    def is_unit(self) -> bool:
        return self.family == "constant" and self.value == 1

    def draw(self, stream: Stream, size: int) -> np.ndarray:
        if self.family == "constant":
            return np.full(size, self.value, dtype=np.int64)
        if self.family == "geometric":
            return stream.geometric(1.0 / self.mean_, size).astype(np.int64)
        return stream.integers(self.low, self.high, size, endpoint=True)

    def to_record(self) -> Dict[str, Any]:
        if self.family == "constant":
            return {"family": "constant", "value": self.value}
        if self.family == "geometric":
            return {"family": "geometric", "mean": self.mean_}
        return {"family": "uniform", "low": self.low, "high": self.high}


# ============================================================================
# Tagged records
# ============================================================================

def from_record(record: Dict[str, Any]) -> InterarrivalDistribution:
    """Build a distribution from its scenario record.

    Example: ``{"family": "erlang", "shape": 2, "rate": 4.0}``.
    """
    family = record.get("family")
    if family == "exponential":
        return Exponential(float(record["rate"]))
    if family == "deterministic":
        return Deterministic(float(record["d"]))
    if family == "erlang":
        return Erlang(int(record["shape"]), float(record["rate"]))
    if family == "hyperexponential2":
        return Hyperexponential2(float(record["p"]), float(record["rate1"]), float(record["rate2"]))
    if family == "thinned":
        return Thinned(from_record(record["base"]), float(record["q"]))
    raise DomainError(f"unknown distribution family: {family!r}")


def unit_length_from_record(record: Optional[Dict[str, Any]]) -> UnitLength:
    if not record:
        return UnitLength()
    family = record.get("family", "constant")
    if family == "constant":
        return UnitLength("constant", value=int(record.get("value", 1)))
    if family == "geometric":
        return UnitLength("geometric", mean_=float(record["mean"]))
    if family == "uniform":
        return UnitLength("uniform", low=int(record["low"]), high=int(record["high"]))
    raise DomainError(f"unknown unit length family: {family!r}")


def with_rate(dist: InterarrivalDistribution, rate: float) -> InterarrivalDistribution:
    """Rescale ``dist`` in time so that its arrival intensity is ``rate``."""
    _check_positive("rate", rate)
    factor = rate / dist.intensity
    if isinstance(dist, Exponential):
        return Exponential(rate)
    if isinstance(dist, Deterministic):
        return Deterministic(dist.d / factor)
    if isinstance(dist, Erlang):
        return Erlang(dist.shape, dist.rate * factor)
    if isinstance(dist, Hyperexponential2):
        return Hyperexponential2(dist.p, dist.rate1 * factor, dist.rate2 * factor)
    raise DomainError(f"cannot rescale {dist}")


def _check_s(s: float) -> float:
    if s < 0:
        raise DomainError(f"transform argument must be nonnegative, got {s}")
    return float(s)


def _check_positive(name: str, value: float) -> None:
    if not value > 0 or not math.isfinite(value):
        raise DomainError(f"{name} must be a positive finite number, got {value}")

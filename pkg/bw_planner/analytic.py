"""Stationary laws and loss probabilities of GI/M^C/1 and GI/M^C/1/N buffers.

Each cumulative level k of the priority system is reduced to a single
buffer fed by the superposed first-k classes (interarrival law B_k, rate
lambda_k) and depleted by C units at every mu-Poisson epoch.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial
from scipy import optimize

from .distributions import Exponential, InterarrivalDistribution, Moments, thinned
from .errors import (
    DomainError,
    NotApplicable,
    NumericalDegeneracy,
    PrecisionError,
    UnstableSystem,
)
from .log import get_logger

if TYPE_CHECKING:
    from .simulator import SystemConfig

log = get_logger(__name__)

ROOT_TOLERANCE = 1e-12
MAX_SERIES_LENGTH = 10_000
TAIL_MASS = 1e-14


# ============================================================================
# Types
# ============================================================================

@dataclass(frozen=True)
class CumulativeModel:
    """Single-buffer model of cumulative level ``level``."""
    dist: InterarrivalDistribution
    lambda_k: float
    mu: float
    C: int
    level: int = 1

    def __post_init__(self):
        if not self.lambda_k > 0 or not self.mu > 0:
            raise DomainError("rates must be positive")
        if int(self.C) != self.C or self.C < 1:
            raise DomainError(f"depletion rate C must be a positive integer, got {self.C}")
        if abs(self.lambda_k * self.dist.mean - 1.0) > 1e-9:
            raise DomainError(
                f"lambda_k = {self.lambda_k:g} is inconsistent with {self.dist} "
                f"(intensity {self.dist.intensity:g})"
            )

    @property
    def rho(self) -> float:
        return self.lambda_k / (self.C * self.mu)


@dataclass(frozen=True)
class AnalyticSolution:
    """Root of the functional equation and the geometric law it implies."""
    varsigma: float
    rho: float
    iterations: int = 0
    residual: float = 0.0
    level: int = 1

    def __post_init__(self):
        if not 0.0 < self.varsigma < 1.0:
            raise DomainError(f"root must lie in (0, 1), got {self.varsigma}")


@dataclass(frozen=True)
class SeriesCoefficients:
    """Coefficients of R(z) = B(mu - mu z^C) and of the derived series.

    ``pi`` holds the coefficients of (1 - z) R(z) / (R(z) - z) and
    ``pi_tilde`` their partial sums, which coincide with ``f``.
    ``batch_tilde`` holds sum_{c < C} f_{i-c}.
    """
    r: np.ndarray
    f: np.ndarray
    pi: np.ndarray
    pi_tilde: np.ndarray
    batch_tilde: np.ndarray
    tail_mass: float = 0.0


@dataclass(frozen=True)
class StationarySummary:
    mean: float
    variance: float
    median: int
    p99: int


# ============================================================================
# Root of the functional equation
# ============================================================================

def solve_root(model: CumulativeModel) -> AnalyticSolution:
    """Solve varsigma = B_k(mu - mu varsigma^C) on (0, 1).

    Args:
        model: Cumulative-level model

    Returns:
        AnalyticSolution with the unique root in (0, 1)

    Raises:
        UnstableSystem: If rho >= 1
    """
    rho = model.rho
    if rho >= 1.0:
        raise UnstableSystem(rho, model.level)
    varsigma, iterations, residual = _root(model.dist, model.mu, model.C)
    return AnalyticSolution(varsigma, rho, iterations, residual, model.level)


@lru_cache(maxsize=4096)
def _root(dist: InterarrivalDistribution, mu: float, C: int) -> Tuple[float, int, float]:
    def g(z: float) -> float:
        return dist.lst(mu - mu * z ** C) - z

    def dg(z: float) -> float:
        return -C * mu * z ** (C - 1) * dist.lst_derivative(mu - mu * z ** C) - 1.0

    lo, hi = 0.0, 1.0 - ROOT_TOLERANCE
    g_lo, g_hi = g(lo), g(hi)
    # near rho = 1 the function rounds to 0 just below 1; back off toward 0.5
    gap = ROOT_TOLERANCE
    while g_hi >= 0.0 and gap < 0.5:
        gap = min(10.0 * gap, 0.5)
        hi = 1.0 - gap
        g_hi = g(hi)
    top = hi
    if g_lo <= 0.0 or g_hi >= 0.0:
        raise NumericalDegeneracy(
            f"no sign change of the root function on (0, 1) for {dist}, mu={mu:g}, C={C} "
            f"(g(0)={g_lo:.3e}, g(1-)={g_hi:.3e})"
        )

    z, result = optimize.bisect(g, lo, hi, xtol=1e-6, full_output=True)
    iterations = result.iterations
    lo, hi = max(lo, z - 1e-6), min(hi, z + 1e-6)
    if g(lo) <= 0.0:
        lo = 0.0
    if g(hi) >= 0.0:
        hi = top

    # safeguarded Newton: fall back to bisection whenever a step leaves the bracket
    value = g(z)
    for _ in range(100):
        if abs(value) <= ROOT_TOLERANCE * 0.01:
            break
        if value > 0.0:
            lo = z
        else:
            hi = z
        slope = dg(z)
        step = z - value / slope if slope != 0.0 else lo - 1.0
        z_next = step if lo < step < hi else 0.5 * (lo + hi)
        iterations += 1
        if z_next == z:
            break
        z = z_next
        value = g(z)

    residual = abs(value)
    if residual > ROOT_TOLERANCE:
        raise NumericalDegeneracy(f"root residual {residual:.3e} exceeds {ROOT_TOLERANCE:g} for {dist}")
    log.debug(f"root for {dist}, mu={mu:g}, C={C}: {z:.15g} ({iterations} iterations, residual {residual:.2e})")
    return z, iterations, residual


def solve_root_mmc(lambda_k: float, mu: float, C: int) -> float:
    """Root of lambda_k / mu = z + z^2 + ... + z^C for Poisson arrivals."""
    if not lambda_k > 0 or not mu > 0 or C < 1:
        raise DomainError("lambda_k, mu and C must be positive")
    rho = lambda_k / (C * mu)
    if rho >= 1.0:
        raise UnstableSystem(rho)

    a = lambda_k / mu
    coeffs = np.ones(C + 1)
    coeffs[0] = -a
    roots = polynomial.polyroots(coeffs)
    real = [x.real for x in roots if abs(x.imag) < 1e-9 and 0.0 < x.real < 1.0 + 1e-9]
    if not real:
        raise NumericalDegeneracy(f"no real root in (0, 1) for lambda/mu = {a:g}, C = {C}")
    z = min(max(real[0], 1e-300), 1.0 - 1e-16)

    # polish on the polynomial itself
    powers = np.arange(1, C + 1)
    for _ in range(20):
        value = float(np.sum(z ** powers)) - a
        slope = float(np.sum(powers * z ** (powers - 1)))
        step = value / slope
        z -= step
        if abs(step) <= 1e-16:
            break
    return float(z)


# ============================================================================
# Geometric stationary law
# ============================================================================

def stationary_pmf(solution: AnalyticSolution, m: int) -> float:
    if m < 0:
        raise DomainError(f"content level must be nonnegative, got {m}")
    return solution.varsigma ** m * (1.0 - solution.varsigma)


def tail_overflow_prob(solution: AnalyticSolution, N: int) -> float:
    """Probability that an arrival finds more than N units: varsigma^(N+1)."""
    if N < 0:
        raise DomainError(f"quota must be nonnegative, got {N}")
    return solution.varsigma ** (N + 1)


def expected_content(solution: AnalyticSolution) -> float:
    return solution.varsigma / (1.0 - solution.varsigma)


def stationary_summary(solution: AnalyticSolution) -> StationarySummary:
    """Mean, variance, median and 99th percentile of the geometric law."""
    s = solution.varsigma
    return StationarySummary(
        mean=s / (1.0 - s),
        variance=s / (1.0 - s) ** 2,
        median=_geometric_quantile(s, 0.5),
        p99=_geometric_quantile(s, 0.99),
    )


def _geometric_quantile(s: float, q: float) -> int:
    # smallest m with 1 - s^(m+1) >= q
    m = max(0, math.ceil(math.log(1.0 - q) / math.log(s) - 1.0 - 1e-12))
    while 1.0 - s ** (m + 1) < q:
        m += 1
    return m


# ============================================================================
# Exact loss by power-series division
# ============================================================================

def series_coefficients(model: CumulativeModel, n_max: Optional[int] = None) -> SeriesCoefficients:
    """Coefficients r, f, pi and pi_tilde up to index ``n_max``.

    When ``n_max`` is None the series is extended until the truncated mass
    of R(z) falls below 1e-14 (and at least to C).

    Raises:
        UnstableSystem: If rho >= 1
        NumericalDegeneracy: If r_0 vanishes
        PrecisionError: If f overflows double precision
    """
    if model.rho >= 1.0:
        raise UnstableSystem(model.rho, model.level)
    C = model.C
    if n_max is None:
        n_max = _covering_length(model)
    if n_max < C:
        raise DomainError(f"n_max must be at least C = {C}, got {n_max}")

    weights = model.dist.batch_weights(model.mu, n_max // C + 1)
    r = np.zeros(n_max + 1)
    r[::C] = weights[: len(r[::C])]
    r0 = r[0]
    if not r0 > 0.0:
        raise NumericalDegeneracy(f"r_0 = {r0} for {model.dist}; series division is undefined")

    f = np.zeros(n_max + 1)
    f[0] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, n_max + 1):
            # F(z) (R(z) - z) = R(z), only multiples of C contribute
            lags = np.arange(C, n + 1, C)
            terms = f[n - lags] * r[lags]
            f[n] = (math.fsum((r[n], f[n - 1], *(-terms))) if len(terms) else r[n] + f[n - 1]) / r0
            if not math.isfinite(f[n]):
                raise PrecisionError(
                    f"series coefficient f_{n} overflows double precision",
                    advisory="use loss_asymptotic for this quota",
                )

    pi = np.diff(f, prepend=0.0)
    batch_tilde = np.convolve(f, np.ones(C))[: n_max + 1]
    tail = max(0.0, 1.0 - math.fsum(r))
    return SeriesCoefficients(r=r, f=f, pi=pi, pi_tilde=f.copy(), batch_tilde=batch_tilde, tail_mass=tail)


def _covering_length(model: CumulativeModel) -> int:
    n = max(model.C, 16)
    while n < 64 * MAX_SERIES_LENGTH:
        mass = math.fsum(model.dist.batch_weights(model.mu, n // model.C + 1))
        if 1.0 - mass <= TAIL_MASS:
            return n
        n *= 2
    return n


def loss_exact(model: CumulativeModel, N: int) -> float:
    """Loss probability of the buffer with quota N: 1 / pi_tilde_N.

    Args:
        model: Cumulative-level model
        N: Buffer quota, 1 <= N <= 10_000

    Returns:
        Loss probability in (0, 1)
    """
    if N < 1:
        raise DomainError(f"quota must be positive, got {N}")
    if N > MAX_SERIES_LENGTH:
        raise PrecisionError(
            f"quota {N} exceeds the series length limit {MAX_SERIES_LENGTH}",
            advisory="use loss_asymptotic for this quota",
        )
    coeffs = series_coefficients(model, max(N, model.C))
    p = 1.0 / coeffs.pi_tilde[N]
    if not 0.0 < p < 1.0:
        raise PrecisionError(f"exact loss {p!r} out of range at N = {N}", advisory="use loss_asymptotic")
    return p


# ============================================================================
# Asymptotic and heavy-load forms
# ============================================================================

def loss_asymptotic(model: CumulativeModel, N: int) -> float:
    """Large-N loss probability from the root of the functional equation.

    p ~ (1 - rho) D s^N / ((1 - rho) - rho D s^N), with
    D = 1 + C mu s^(C-1) B'(mu - mu s^C).
    """
    if N < 1:
        raise DomainError(f"quota must be positive, got {N}")
    solution = solve_root(model)
    s, rho, C, mu = solution.varsigma, solution.rho, model.C, model.mu
    D = 1.0 + C * mu * s ** (C - 1) * model.dist.lst_derivative(mu - mu * s ** C)
    head = D * s ** N
    return (1.0 - rho) * head / ((1.0 - rho) - rho * head)


def heavy_load_coefficient(moments: Moments, C: int) -> float:
    """Quadratic coefficient of R(z) - z near z = 1 in the heavy-load limit."""
    return (C - 1) / 2.0 + C ** 2 * moments.rho_2 / 2.0


def heavy_load_root(moments: Moments, delta: float, C: int) -> float:
    """Root expansion 1 - delta / kappa for load 1 - delta."""
    _check_heavy_load(delta, C)
    return 1.0 - delta / heavy_load_coefficient(moments, C)


def loss_heavy_load(moments: Moments, delta: float, Delta: float, C: int) -> float:
    """Loss probability as delta -> 0 with delta N -> Delta."""
    _check_heavy_load(delta, C)
    if not Delta > 0:
        raise DomainError(f"Delta must be positive, got {Delta}")
    decay = math.exp(-Delta / heavy_load_coefficient(moments, C))
    return delta * decay / (1.0 - decay)


def _check_heavy_load(delta: float, C: int) -> None:
    if C < 2:
        raise NotApplicable("heavy-load forms require a depletion rate C >= 2")
    if not 0.0 < delta < 0.2:
        raise DomainError(f"delta must lie in (0, 0.2), got {delta}")


# ============================================================================
# Cumulative levels of a priority system
# ============================================================================

def cumulative_models(config: "SystemConfig") -> List[CumulativeModel]:
    """Build the single-buffer model of every cumulative level.

    Level k is fed by the first k classes; with thinned arrivals its
    interarrival law is the geometric thinning of the superposed process.
    Independent per-class streams admit a renewal reduction only when all
    classes are Poisson.
    """
    models = []
    keep = 0.0
    for k in range(config.ell):
        keep = 1.0 if k == config.ell - 1 else min(1.0, keep + config.thinning[k])
        if config.arrival_mode == "thinned":
            dist = thinned(config.arrival, keep)
        elif all(isinstance(d, Exponential) for d in config.class_arrivals[: k + 1]):
            lam = sum(d.rate for d in config.class_arrivals[: k + 1])
            dist = Exponential(lam)
        else:
            raise NotApplicable("independent non-Poisson class streams have no renewal reduction")
        models.append(CumulativeModel(dist, dist.intensity, config.mu, config.C, level=k + 1))
    return models


def solve_levels(config: "SystemConfig") -> List[AnalyticSolution]:
    solutions = [solve_root(model) for model in cumulative_models(config)]
    log.info(
        "Roots: " + ", ".join(f"level {s.level}: {s.varsigma:.6g} (rho {s.rho:.4g})" for s in solutions)
    )
    return solutions

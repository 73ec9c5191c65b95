"""Mapping of per-class costs and quotas onto cumulative levels.

The per-class objective J = sum alpha^(k) J^(k) has no closed form; the
cumulative objective J-bar = sum alpha_k J_k does, because every cumulative
level is a single GI/M^C/1 buffer. The mapping below picks alpha_k and N_k
so that J-bar can stand in for J. It is an approximation: the gap is only
measured empirically (see estimators).
"""

import math
import numbers
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

from .analytic import AnalyticSolution, CumulativeModel, loss_exact, tail_overflow_prob
from .errors import DomainError, InfeasibleQuota, UnstableSystem
from .log import get_logger

log = get_logger(__name__)

MODES = ("infinite", "finite")
ROOT_TIE = 1e-12


@dataclass(frozen=True)
class CostMapping:
    """Per-class costs and the cumulative costs derived from them.

    ``p_weights[k - 2]`` holds (p_{k,1}, p_{k,2}) for levels k = 2..ell.
    """
    alpha_class: Tuple[float, ...]
    alpha_cum: Tuple[float, ...]
    p_weights: Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class QuotaMapping:
    """Quota ratios and the class and cumulative quotas they fix.

    ``beta_class`` and ``beta_cum`` cover classes 2..ell; both quota
    vectors cover 1..ell and share the first entry.
    """
    beta_class: Tuple[float, ...]
    beta_cum: Tuple[float, ...]
    N_class: Tuple[int, ...]
    N_cum: Tuple[int, ...]

    @property
    def N_1(self) -> int:
        return self.N_cum[0]


# ============================================================================
# Costs
# ============================================================================

def map_costs(alpha_class: Sequence[float], roots: Sequence[float]) -> CostMapping:
    """Derive cumulative costs alpha_k from per-class costs.

    alpha_1 = alpha^(1) and alpha_{k+1} = alpha_k p_{k+1,1} + alpha^(k+1) p_{k+1,2}
    with p_{k+1,1} = s_k (1 - s_{k+1}) / (s_{k+1} (1 - s_k)).

    Args:
        alpha_class: Per-class costs alpha^(1..ell), nonnegative
        roots: Roots s_1..s_ell of the cumulative levels, nondecreasing

    Returns:
        CostMapping

    Raises:
        DomainError: If the roots decrease somewhere or lengths differ
    """
    alpha_class = tuple(float(a) for a in alpha_class)
    roots = tuple(float(s) for s in roots)
    if len(alpha_class) != len(roots) or not roots:
        raise DomainError(f"need one cost per root, got {len(alpha_class)} costs and {len(roots)} roots")
    if any(a < 0 for a in alpha_class):
        raise DomainError(f"costs must be nonnegative, got {alpha_class}")
    if any(not 0.0 < s < 1.0 for s in roots):
        raise DomainError(f"roots must lie in (0, 1), got {roots}")

    alpha = [alpha_class[0]]
    weights = []
    for k in range(1, len(roots)):
        lo, hi = roots[k - 1], roots[k]
        if hi - lo <= ROOT_TIE * hi:
            if lo - hi > ROOT_TIE * hi:
                raise DomainError(f"roots must be nondecreasing, got s_{k} = {lo} > s_{k + 1} = {hi}")
            p1 = 1.0
        else:
            p1 = lo * (1.0 - hi) / (hi * (1.0 - lo))
        p2 = 1.0 - p1
        weights.append((p1, p2))
        alpha.append(alpha[-1] * p1 + alpha_class[k] * p2)

    return CostMapping(alpha_class, tuple(alpha), tuple(weights))


# ============================================================================
# Quotas
# ============================================================================

def cumulative_ratio(beta: float) -> float:
    """beta_k = beta^(k) / (1 + beta^(k))."""
    if not beta > 0:
        raise DomainError(f"quota ratio must be positive, got {beta}")
    return beta / (1.0 + beta)


def largest_quota(beta: float, N_1: int) -> int:
    """Largest integer N with floor(beta N) = N_1.

    Raises:
        InfeasibleQuota: If no integer satisfies the floor identity
    """
    if not beta > 0:
        raise DomainError(f"quota ratio must be positive, got {beta}")
    N = math.floor((N_1 + 1) / beta)
    while N > 0 and math.floor(beta * N) > N_1:
        N -= 1
    while math.floor(beta * (N + 1)) == N_1:
        N += 1
    if math.floor(beta * N) != N_1:
        raise InfeasibleQuota(f"no integer N satisfies floor({beta:g} N) = {N_1}")
    return N


def _class_quota(beta: float, N_1: int) -> int:
    # largest N with floor(beta N) <= N_1; ratios above 1 need not hit N_1 exactly
    N = math.floor((N_1 + 1) / beta)
    while N > 0 and math.floor(beta * N) > N_1:
        N -= 1
    return N


def map_quotas(beta_class: Sequence[float], N: Union[int, Sequence[int]]) -> QuotaMapping:
    """Fix cumulative quotas from N_1 and the per-class quota ratios.

    Each N_k (k >= 2) is the largest integer with floor(beta_k N_k) = N_1.
    When ``N`` is a single integer the class quotas N^(k) are derived the
    same way from beta^(k); a full class quota vector is kept as given.

    Args:
        beta_class: Ratios beta^(2..ell), positive
        N: N_1, or the class quotas N^(1..ell)
    """
    beta_class = tuple(float(b) for b in beta_class)
    beta_cum = tuple(cumulative_ratio(b) for b in beta_class)

    if isinstance(N, numbers.Integral):
        N_1 = int(N)
        if N_1 < 0:
            raise DomainError(f"quota must be nonnegative, got {N_1}")
        N_class = (N_1,) + tuple(_class_quota(b, N_1) for b in beta_class)
    else:
        N_class = tuple(int(n) for n in N)
        if len(N_class) != len(beta_class) + 1:
            raise DomainError(f"expected {len(beta_class) + 1} class quotas, got {len(N_class)}")
        if any(n < 0 for n in N_class):
            raise DomainError(f"quotas must be nonnegative, got {N_class}")
        N_1 = N_class[0]

    N_cum = (N_1,) + tuple(largest_quota(b, N_1) for b in beta_cum)
    return QuotaMapping(beta_class, beta_cum, N_class, N_cum)


# ============================================================================
# Cumulative objective
# ============================================================================

def J_terms(
    quotas: QuotaMapping,
    solutions: Sequence[AnalyticSolution],
    rates: Sequence[float],
    mode: str = "infinite",
    models: Optional[Sequence[CumulativeModel]] = None,
) -> Tuple[float, ...]:
    """Per-level overflow fractions J_1..J_ell, normalised by total arrivals.

    Infinite mode uses the geometric tail (lambda_k / lambda_ell) s_k^(N_k + 1);
    finite mode bounds J_k by the summed exact losses p_1 + ... + p_k of the
    finite cumulative buffers, which needs ``models``.
    """
    if mode not in MODES:
        raise DomainError(f"unknown mode {mode!r}")
    ell = len(solutions)
    if len(rates) != ell or len(quotas.N_cum) != ell:
        raise DomainError(f"need {ell} rates and quotas, got {len(rates)} and {len(quotas.N_cum)}")
    for solution in solutions:
        if solution.rho >= 1.0:
            raise UnstableSystem(solution.rho, solution.level)

    if mode == "infinite":
        total = rates[-1]
        return tuple(
            rates[k] / total * tail_overflow_prob(solutions[k], quotas.N_cum[k]) for k in range(ell)
        )

    if models is None or len(models) != ell:
        raise DomainError("finite mode needs the cumulative models of every level")
    terms, running = [], 0.0
    for model, N in zip(models, quotas.N_cum):
        # an empty buffer rejects every arrival
        running += 1.0 if N == 0 else loss_exact(model, N)
        terms.append(running)
    return tuple(terms)


def J_bar(
    costs: CostMapping,
    quotas: QuotaMapping,
    solutions: Sequence[AnalyticSolution],
    rates: Sequence[float],
    mode: str = "infinite",
    models: Optional[Sequence[CumulativeModel]] = None,
) -> float:
    """Cumulative objective sum alpha_k J_k.

    Args:
        costs: Cost mapping
        quotas: Quota mapping
        solutions: Root of every cumulative level
        rates: Cumulative intensities lambda_1..lambda_ell
        mode: ``infinite`` or ``finite``
        models: Cumulative models, required in finite mode

    Raises:
        UnstableSystem: If any level has rho >= 1
    """
    terms = J_terms(quotas, solutions, rates, mode, models)
    if len(costs.alpha_cum) != len(terms):
        raise DomainError(f"need {len(terms)} cumulative costs, got {len(costs.alpha_cum)}")
    value = math.fsum(a * j for a, j in zip(costs.alpha_cum, terms))
    log.debug(f"J-bar({quotas.N_cum}) = {value:.6g}")
    return value

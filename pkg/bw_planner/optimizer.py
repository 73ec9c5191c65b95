"""Integer searches over the quota N_1 and the depletion rate C.

Both searches rely on J-bar decreasing in the decision variable. That is
not assumed: every probe is kept and the probe sequence is audited before
a result is returned.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .analytic import CumulativeModel, cumulative_models, solve_root
from .approximation import (
    MODES,
    CostMapping,
    QuotaMapping,
    J_terms,
    largest_quota,
    map_costs,
    map_quotas,
)
from .errors import DomainError, Infeasible, MonotonicityViolation, NonConvergence
from .log import get_logger
from .simulator import SystemConfig

log = get_logger(__name__)

DECISIONS = ("quota_N1", "depletion_C")
MAX_DOUBLINGS = 64
AUDIT_TOLERANCE = 1e-12
LIMIT_TOLERANCE = 1e-9


# ============================================================================
# Types
# ============================================================================

@dataclass(frozen=True)
class OptimizationProblem:
    """Minimise one integer decision variable subject to J-bar <= epsilon.

    ``quota_N1`` searches N_1 at the system's C; ``depletion_C`` searches C
    at the fixed quota ``N_1``. Costs default to the system's class costs
    (else all ones) and quota ratios to 1.
    """
    system: SystemConfig
    epsilon: float
    decision: str = "quota_N1"
    alpha_class: Optional[Tuple[float, ...]] = None
    beta_class: Optional[Tuple[float, ...]] = None
    N_1: Optional[int] = None
    mode: str = "infinite"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.decision not in DECISIONS:
            raise DomainError(f"unknown decision {self.decision!r}, expected one of {DECISIONS}")
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}")
        ell = self.system.ell

        alpha = self.alpha_class
        if alpha is None:
            alpha = self.system.class_costs or (1.0,) * ell
        alpha = tuple(float(a) for a in alpha)
        if len(alpha) != ell or any(a < 0 for a in alpha):
            raise DomainError(f"need {ell} nonnegative class costs, got {alpha}")
        object.__setattr__(self, "alpha_class", alpha)

        beta = tuple(float(b) for b in (self.beta_class if self.beta_class is not None else (1.0,) * (ell - 1)))
        if len(beta) != ell - 1 or any(b <= 0 for b in beta):
            raise DomainError(f"need {ell - 1} positive quota ratios, got {beta}")
        object.__setattr__(self, "beta_class", beta)

        if self.decision == "depletion_C":
            if self.N_1 is None or self.N_1 < 0:
                raise DomainError("depletion_C needs a fixed nonnegative quota N_1")


@dataclass(frozen=True)
class Probe:
    """One evaluation of J-bar; ``terms`` holds alpha_k J_k per level."""
    value: int
    J_bar: float
    terms: Tuple[float, ...]
    costs: CostMapping
    quotas: QuotaMapping


@dataclass(frozen=True)
class Certificate:
    """J-bar at the optimum and one step below it.

    ``previous`` is None when the optimum is the smallest admissible value
    (N_1 = 0, or C at the stability bound).
    """
    epsilon: float
    J_bar: float
    previous: Optional[float]
    kind: str

    @property
    def valid(self) -> bool:
        return self.J_bar <= self.epsilon and (self.previous is None or self.previous > self.epsilon)


@dataclass(frozen=True)
class OptimizationResult:
    decision: str
    optimum: int
    J_bar: float
    certificate: Certificate
    trace: Tuple[Probe, ...]
    bounds: Tuple[int, Optional[int]]
    at_optimum: Probe
    widenings: int = 0

    def probe_table(self) -> List[Dict]:
        return _probe_table(self.trace)


def _probe_table(probes: Sequence[Probe]) -> List[Dict]:
    return [{"value": p.value, "J_bar": p.J_bar} for p in probes]


# ============================================================================
# Probes
# ============================================================================

def _models(problem: OptimizationProblem, C: int) -> List[CumulativeModel]:
    models = cumulative_models(problem.system)
    if C == problem.system.C:
        return models
    return [CumulativeModel(m.dist, m.lambda_k, m.mu, C, m.level) for m in models]


def _probe(problem: OptimizationProblem, value: int, N_1: int, C: int) -> Probe:
    models = _models(problem, C)
    solutions = [solve_root(model) for model in models]
    costs = map_costs(problem.alpha_class, [s.varsigma for s in solutions])
    quotas = map_quotas(problem.beta_class, N_1)
    J = J_terms(quotas, solutions, [m.lambda_k for m in models], problem.mode, models)
    terms = tuple(a * j for a, j in zip(costs.alpha_cum, J))
    probe = Probe(value, math.fsum(terms), terms, costs, quotas)
    log.debug(f"Probe N_1={N_1} C={C}: J-bar = {probe.J_bar:.6g}")
    return probe


def evaluate(problem: OptimizationProblem, value: int) -> Probe:
    """J-bar at ``value`` of the decision variable."""
    if problem.decision == "quota_N1":
        return _probe(problem, value, value, problem.system.C)
    return _probe(problem, value, problem.N_1, value)


def C_lower(problem: OptimizationProblem) -> int:
    """Smallest C with lambda_ell / (C mu) < 1."""
    return math.floor(problem.system.lam / problem.system.mu) + 1


def _audit(probes: Sequence[Probe], name: str) -> None:
    ordered = sorted(probes, key=lambda p: p.value)
    for a, b in zip(ordered, ordered[1:]):
        if b.J_bar > a.J_bar * (1.0 + AUDIT_TOLERANCE) + 1e-300:
            raise MonotonicityViolation(
                f"J-bar increases from {a.J_bar:.6g} at {name}={a.value} to {b.J_bar:.6g} at {name}={b.value}",
                _probe_table(ordered),
            )


class _Search:
    """Memoised probes of one problem, in evaluation order."""

    def __init__(self, problem: OptimizationProblem):
        self.problem = problem
        self.probes: Dict[int, Probe] = {}

    def __call__(self, value: int) -> float:
        if value not in self.probes:
            self.probes[value] = evaluate(self.problem, value)
        return self.probes[value].J_bar

    def finish(self, optimum: int, smallest: int, bounds: Tuple[int, Optional[int]], widenings: int, name: str):
        eps = self.problem.epsilon
        J = self(optimum)
        previous = self(optimum - 1) if optimum > smallest else None
        _audit(list(self.probes.values()), name)
        kind = "lower-bound binding" if previous is None else "threshold"
        certificate = Certificate(eps, J, previous, kind)
        if not certificate.valid:
            raise MonotonicityViolation(
                f"certificate fails at {name}={optimum}: J-bar {J:.6g}, previous {previous!r}, epsilon {eps:g}",
                _probe_table(sorted(self.probes.values(), key=lambda p: p.value)),
            )
        log.info(f"Optimum {name} = {optimum} (J-bar {J:.6g} <= {eps:g}, {len(self.probes)} probes)")
        return OptimizationResult(
            decision=self.problem.decision,
            optimum=optimum,
            J_bar=J,
            certificate=certificate,
            trace=tuple(self.probes.values()),
            bounds=bounds,
            at_optimum=self.probes[optimum],
            widenings=widenings,
        )


# ============================================================================
# Quota search
# ============================================================================

def _smallest_N1(weight: float, s: float, beta: Optional[float], target: float) -> int:
    """Smallest N_1 with weight * s^(N_k + 1) < target, N_k the level quota."""
    if weight <= 0.0 or weight < target:
        return 0

    def level_quota(n: int) -> int:
        return n if beta is None else largest_quota(beta, n)

    def term(n: int) -> float:
        return weight * s ** (level_quota(n) + 1)

    # smallest level quota n with weight s^(n + 1) < target
    n = max(0, math.floor(math.log(target / weight) / math.log(s)))
    N_1 = n if beta is None else math.floor(beta * n)
    while N_1 > 0 and term(N_1 - 1) < target:
        N_1 -= 1
    while term(N_1) >= target:
        N_1 += 1
    return N_1


def bounds_N1(problem: OptimizationProblem) -> Tuple[int, int]:
    """Advisory bracket for N_1 from the geometric tails.

    The lower bound is the largest over k of the smallest N_1 with
    alpha_k J_k < epsilon; the upper bound uses epsilon / ell instead.

    Raises:
        UnstableSystem: If some level is unstable at the system's C
    """
    models = _models(problem, problem.system.C)
    solutions = [solve_root(model) for model in models]
    roots = [s.varsigma for s in solutions]
    costs = map_costs(problem.alpha_class, roots)
    total = models[-1].lambda_k
    betas = (None,) + tuple(b / (1.0 + b) for b in problem.beta_class)
    ell = problem.system.ell

    def bound(target: float) -> int:
        return max(
            _smallest_N1(costs.alpha_cum[k] * models[k].lambda_k / total, roots[k], betas[k], target)
            for k in range(ell)
        )

    lower, upper = bound(problem.epsilon), bound(problem.epsilon / ell)
    log.debug(f"N_1 bounds: [{lower}, {upper}]")
    return lower, upper


def minimize_N1(problem: OptimizationProblem) -> OptimizationResult:
    """Smallest N_1 with J-bar(N_1) <= epsilon.

    Binary search between the advisory bounds; the upper bound is doubled
    while infeasible and the lower bound dropped to 0 if it turns out not
    to be binding.

    Raises:
        Infeasible: If doubling the upper bound never reaches the budget
        MonotonicityViolation: If the probes are not nonincreasing
    """
    if problem.decision != "quota_N1":
        raise DomainError(f"minimize_N1 needs decision quota_N1, got {problem.decision}")
    eps = problem.epsilon
    lower, upper = bounds_N1(problem)
    J = _Search(problem)

    hi, widenings = upper, 0
    while J(hi) > eps:
        widenings += 1
        if widenings > MAX_DOUBLINGS:
            raise Infeasible(f"J-bar stays above {eps:g} up to N_1 = {hi}")
        wider = max(1, 2 * hi)
        log.warning(f"J-bar({hi}) = {J(hi):.6g} > {eps:g}: widening N_1 upper bound to {wider}")
        hi = wider

    lo = min(lower, hi)
    if lo > 0 and J(lo - 1) <= eps:
        log.warning(f"N_1 lower bound {lo} is not binding; searching from 0")
        lo = 0
    while lo < hi:
        mid = (lo + hi) // 2
        if J(mid) <= eps:
            hi = mid
        else:
            lo = mid + 1
    return J.finish(hi, 0, (lower, upper), widenings, "N_1")


# ============================================================================
# Depletion-rate search
# ============================================================================

def limit_J_bar(problem: OptimizationProblem) -> float:
    """J-bar as C grows without bound at the fixed quotas.

    Every departure then empties the buffer, so the root of level k tends
    to B_k(mu), the chance that an interarrival gap holds no departure. In
    finite mode the loss of level k tends to B_k(mu)^N_k.
    """
    models = cumulative_models(problem.system)
    roots = [model.dist.lst(model.mu) for model in models]
    costs = map_costs(problem.alpha_class, roots)
    quotas = map_quotas(problem.beta_class, problem.N_1)
    if problem.mode == "infinite":
        total = models[-1].lambda_k
        terms = [m.lambda_k / total * s ** (N + 1) for m, s, N in zip(models, roots, quotas.N_cum)]
    else:
        losses = [s ** N for s, N in zip(roots, quotas.N_cum)]
        terms = [math.fsum(losses[: k + 1]) for k in range(len(losses))]
    return math.fsum(a * j for a, j in zip(costs.alpha_cum, terms))


def _confirm_out_of_reach(J: "_Search", start: int, floor: float) -> None:
    """Probe C upward from the stability bound when the large-C limit misses the budget.

    Raises:
        MonotonicityViolation: If some probe meets the budget anyway, or the
            probes are not nonincreasing
        NonConvergence: If the probes settle on the limit above the budget
    """
    eps = J.problem.epsilon
    C = start
    for _ in range(MAX_DOUBLINGS):
        value = J(C)
        _audit(list(J.probes.values()), "C")
        if value <= eps:
            raise MonotonicityViolation(
                f"J-bar({C}) = {value:.6g} meets {eps:g} although it tends to {floor:.6g} as C grows",
                _probe_table(sorted(J.probes.values(), key=lambda p: p.value)),
            )
        if abs(value - floor) <= LIMIT_TOLERANCE * floor:
            break
        C *= 2
    raise NonConvergence(f"J-bar tends to {floor:.6g} >= {eps:g} as C grows; no depletion rate meets the budget")


def minimize_C(problem: OptimizationProblem) -> OptimizationResult:
    """Smallest integer C with J-bar(C) <= epsilon at fixed quotas.

    Starts at the stability bound, doubles C to bracket the threshold and
    binary-searches inside the bracket.

    Raises:
        NonConvergence: If 64 doublings do not reach the budget, or J-bar settles
            on its large-C limit above the budget
        MonotonicityViolation: If the probes are not nonincreasing
    """
    if problem.decision != "depletion_C":
        raise DomainError(f"minimize_C needs decision depletion_C, got {problem.decision}")
    eps = problem.epsilon
    start = C_lower(problem)
    J = _Search(problem)

    floor = limit_J_bar(problem)
    if floor >= eps:
        _confirm_out_of_reach(J, start, floor)
    if J(start) <= eps:
        return J.finish(start, start, (start, None), 0, "C")

    lo, hi, doublings = start, 2 * start, 1
    while J(hi) > eps:
        doublings += 1
        if doublings > MAX_DOUBLINGS:
            raise NonConvergence(f"J-bar stays above {eps:g} up to C = {hi}")
        lo, hi = hi, 2 * hi
    log.info(f"C bracket [{lo}, {hi}] after {doublings} doublings")

    while hi - lo > 1:
        mid = (lo + hi) // 2
        if J(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return J.finish(hi, start, (start, None), doublings, "C")


def optimize(problem: OptimizationProblem) -> OptimizationResult:
    if problem.decision == "quota_N1":
        return minimize_N1(problem)
    return minimize_C(problem)

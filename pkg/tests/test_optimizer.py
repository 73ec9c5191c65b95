import numpy as np
import pytest

from bw_planner.distributions import Erlang, Exponential, Hyperexponential2
from bw_planner.errors import DomainError, MonotonicityViolation, NonConvergence, UnstableSystem
from bw_planner.optimizer import (
    C_lower,
    OptimizationProblem,
    Probe,
    _audit,
    bounds_N1,
    evaluate,
    limit_J_bar,
    minimize_C,
    minimize_N1,
    optimize,
)
from bw_planner.simulator import SystemConfig

THINNINGS = {1: (1.0,), 2: (0.4, 0.6), 3: (0.2, 0.3, 0.5)}


def mm1(lam=0.5, C=1, **overrides):
    fields = dict(ell=1, arrival=Exponential(lam), thinning=(1.0,), mu=1.0, C=C)
    fields.update(overrides)
    return SystemConfig(**fields)


def scan(problem, values):
    for value in values:
        if evaluate(problem, value).J_bar <= problem.epsilon:
            return value
    raise AssertionError("scan range too short")


# ============================================================================
# Quota search
# ============================================================================

def test_single_class_bounds():
    problem = OptimizationProblem(mm1(), 0.01)
    assert bounds_N1(problem) == (6, 6)


def test_single_class_optimum():
    result = minimize_N1(OptimizationProblem(mm1(), 0.01))
    assert result.optimum == 6
    assert result.J_bar == pytest.approx(0.5 ** 7)
    assert result.certificate.previous == pytest.approx(0.5 ** 6)
    assert result.certificate.kind == "threshold"
    assert result.certificate.valid
    assert result.at_optimum.quotas.N_cum == (6,)


def test_trivial_budget_gives_zero_quota():
    result = minimize_N1(OptimizationProblem(mm1(), 1.0))
    assert bounds_N1(OptimizationProblem(mm1(), 1.0))[0] == 0
    assert result.optimum == 0
    assert result.certificate.kind == "lower-bound binding"
    assert result.certificate.previous is None


def test_budget_just_below_zero_quota_value():
    problem = OptimizationProblem(mm1(), 0.5 * (1 - 1e-9))
    result = minimize_N1(problem)
    assert result.optimum == 1
    assert result.optimum == scan(problem, range(51))


def test_bounds_are_ordered():
    system = SystemConfig(ell=3, arrival=Exponential(1.4), thinning=THINNINGS[3], mu=1.0, C=2)
    for eps in (0.3, 1e-2, 1e-5):
        lower, upper = bounds_N1(OptimizationProblem(system, eps, alpha_class=(3.0, 1.0, 0.5), beta_class=(1.0, 2.0)))
        assert 0 <= lower <= upper


def test_unstable_system_is_reported():
    with pytest.raises(UnstableSystem):
        minimize_N1(OptimizationProblem(mm1(lam=1.5), 0.01))


def test_finite_mode_search():
    problem = OptimizationProblem(mm1(), 1e-3, mode="finite")
    result = minimize_N1(problem)
    assert result.optimum == scan(problem, range(1, 40))
    # the birth-death loss (1 - rho) rho^N / (1 - rho^(N + 1)) crosses 1e-3 at N = 9
    assert result.optimum == 9


def randomized_problem(rng, decision):
    ell = int(rng.integers(1, 4))
    C = int(rng.integers(1, 7))
    family = rng.integers(0, 3)
    lam = float(rng.uniform(0.2, 0.9)) * C
    if family == 0:
        arrival = Exponential(lam)
    elif family == 1:
        arrival = Erlang(2, 2 * lam)
    else:
        arrival = Hyperexponential2(0.3, 0.6 * lam, 1.4 * lam)
    weights = rng.dirichlet(np.ones(ell))
    thinning = tuple(float(w) for w in weights / weights.sum())
    system = SystemConfig(ell=ell, arrival=arrival, thinning=thinning, mu=1.0, C=C)
    beta = tuple(float(b) for b in rng.uniform(0.3, 3.0, ell - 1))
    if decision == "quota_N1":
        alpha = tuple(float(a) for a in rng.uniform(0.1, 5.0, ell))
        target = int(rng.integers(1, 60))
        probe = OptimizationProblem(system, 1.0, alpha_class=alpha, beta_class=beta)
        eps = float(np.sqrt(evaluate(probe, target).J_bar * evaluate(probe, target - 1).J_bar))
        return OptimizationProblem(system, eps, alpha_class=alpha, beta_class=beta)
    # equal costs keep J-bar monotone in C
    N_1 = int(rng.integers(1, 30))
    probe = OptimizationProblem(system, 1.0, decision="depletion_C", beta_class=beta, N_1=N_1)
    start = C_lower(probe)
    target = start + int(rng.integers(0, 6))
    if target == start:
        eps = evaluate(probe, start).J_bar * 1.5
    else:
        eps = float(np.sqrt(evaluate(probe, target).J_bar * evaluate(probe, target - 1).J_bar))
    return OptimizationProblem(system, eps, decision="depletion_C", beta_class=beta, N_1=N_1)


@pytest.mark.parametrize("seed", range(50))
def test_quota_search_matches_exhaustive_scan(seed):
    problem = randomized_problem(np.random.default_rng(seed), "quota_N1")
    result = minimize_N1(problem)
    assert result.optimum == scan(problem, range(0, 61))
    assert result.certificate.valid
    assert evaluate(problem, result.optimum).J_bar == result.J_bar


@pytest.mark.parametrize("seed", range(50))
def test_depletion_search_matches_exhaustive_scan(seed):
    problem = randomized_problem(np.random.default_rng(1000 + seed), "depletion_C")
    result = minimize_C(problem)
    start = C_lower(problem)
    assert result.optimum == scan(problem, range(start, start + 40))
    assert result.certificate.valid


# ============================================================================
# Depletion-rate search
# ============================================================================

def test_stability_bound():
    problem = OptimizationProblem(mm1(lam=2.5, C=3), 1e-4, decision="depletion_C", N_1=10)
    assert C_lower(problem) == 3
    assert C_lower(OptimizationProblem(mm1(lam=2.0, C=3), 1e-4, decision="depletion_C", N_1=10)) == 3


def test_depletion_search_example():
    problem = OptimizationProblem(mm1(lam=2.5, C=3), 0.05, decision="depletion_C", N_1=10)
    result = minimize_C(problem)
    assert result.trace[0].value == 3
    assert result.optimum == scan(problem, range(3, 21))
    assert result.optimum == 6
    assert result.certificate.kind == "threshold"
    assert result.J_bar <= 0.05 < result.certificate.previous


def test_budget_below_the_large_C_limit_does_not_converge():
    # every departure clears the buffer, so J-bar stays above (2.5 / 3.5)^11
    problem = OptimizationProblem(mm1(lam=2.5, C=3), 1e-4, decision="depletion_C", N_1=10)
    assert limit_J_bar(problem) == pytest.approx((2.5 / 3.5) ** 11)
    with pytest.raises(NonConvergence):
        minimize_C(problem)


def test_dip_below_the_large_C_limit_is_not_reported_infeasible():
    # finite mode: cumulative costs follow the roots, so J-bar dips near C = 10 and rises back
    system = SystemConfig(
        ell=3,
        arrival=Hyperexponential2(0.3, 1.0, 4.0),
        thinning=THINNINGS[3],
        mu=1.0,
        C=3,
    )
    problem = OptimizationProblem(
        system, 0.0656, decision="depletion_C", alpha_class=(3.0, 2.0, 1.0), beta_class=(1.0, 2.0),
        N_1=6, mode="finite",
    )
    assert limit_J_bar(problem) >= 0.0656
    assert evaluate(problem, 10).J_bar <= 0.0656
    with pytest.raises(MonotonicityViolation) as info:
        minimize_C(problem)
    probes = info.value.probes
    assert probes[0]["value"] == 3
    values = [p["J_bar"] for p in probes]
    assert min(values) <= 0.0656 or any(b > a for a, b in zip(values, values[1:]))


def test_trivial_budget_keeps_stability_bound():
    result = minimize_C(OptimizationProblem(mm1(lam=2.5, C=3), 1.0, decision="depletion_C", N_1=10))
    assert result.optimum == 3
    assert result.certificate.kind == "lower-bound binding"
    assert len(result.trace) == 1


def test_optimize_dispatches_on_decision():
    assert optimize(OptimizationProblem(mm1(), 0.01)).optimum == 6
    assert optimize(OptimizationProblem(mm1(lam=2.5, C=3), 1.0, decision="depletion_C", N_1=10)).optimum == 3
    with pytest.raises(DomainError):
        minimize_C(OptimizationProblem(mm1(), 0.01))


# ============================================================================
# Validation and audit
# ============================================================================

@pytest.mark.parametrize("bad", [
    dict(epsilon=0.0),
    dict(decision="both"),
    dict(mode="bounded"),
    dict(alpha_class=(1.0, 2.0)),
    dict(beta_class=(1.0,)),
    dict(decision="depletion_C"),
])
def test_invalid_problem_is_rejected(bad):
    fields = dict(system=mm1(), epsilon=0.01)
    fields.update(bad)
    with pytest.raises(DomainError):
        OptimizationProblem(**fields)


def test_monotonicity_audit():
    problem = OptimizationProblem(mm1(), 0.01)
    good = [evaluate(problem, n) for n in (0, 3, 7)]
    _audit(good, "N_1")
    bad = [good[0], Probe(4, good[0].J_bar * 2, good[0].terms, good[0].costs, good[0].quotas)]
    with pytest.raises(MonotonicityViolation) as info:
        _audit(bad, "N_1")
    assert [row["value"] for row in info.value.probes] == [0, 4]

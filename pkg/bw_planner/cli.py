"""Command-line interface for bw-planner.

Subcommands read a scenario file and emit a report:

    solve      roots, stationary laws and loss probabilities per level
    simulate   replicated simulation estimates (and an optional trajectory CSV)
    optimize   smallest quota N_1 or depletion rate C meeting a J-bar budget
    validate   pathwise identities and simulation-vs-analytic checks
"""

import argparse
import math
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional

from .analytic import (
    cumulative_models,
    heavy_load_coefficient,
    heavy_load_root,
    loss_asymptotic,
    loss_exact,
    loss_heavy_load,
    solve_root,
    stationary_summary,
    tail_overflow_prob,
)
from .approximation import J_terms, QuotaMapping
from .distributions import moments
from .errors import (
    AuditFailure,
    MonotonicityViolation,
    NotApplicable,
    PlannerError,
    PrecisionError,
)
from .estimators import pre_arrival_pmf, total_variation_to_geometric
from .log import get_logger, setup_logging
from .optimizer import optimize
from .pathwise import pathwise_reports
from .progress import ProgressBar
from .replication import ReplicationConfig, run_replications, simulate
from .report import emit, format_probes
from .scenario import FORMATS, Scenario, build_problem, load_scenario, with_overrides
from .simulator import SystemConfig, run

log = get_logger(__name__)

TRAJECTORY_FILE = "trajectory.csv"


# ============================================================================
# CLI Argument Parsing
# ============================================================================

class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with code 1 on usage errors."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    """Build the CLI argument parser."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, metavar="PATH", help="Scenario JSON file")
    common.add_argument("--seed", type=int, help="Base seed (unsigned 64-bit), overrides the scenario")
    common.add_argument("--reps", type=int, help="Number of replications, overrides the scenario")
    common.add_argument("--out", metavar="DIR", help="Write reports to DIR instead of stdout")
    common.add_argument(
        "--format",
        choices=FORMATS,
        help="Report format (default: scenario output.format, else table)",
    )

    # Logging options
    common.add_argument(
        "-v", "--verbose",
        action="count",
        default=0,
        help="Increase verbosity (-v for verbose, -vv for debug)",
    )
    common.add_argument(
        "-q", "--quiet",
        action="store_true",
        help="Suppress output except errors",
    )
    common.add_argument(
        "--log-file",
        dest="log_file",
        help="Write logs to file",
    )

    parser = _Parser(
        description="Plan quotas and depletion rates of a priority buffer with autonomous batch service."
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    commands.required = True
    commands.add_parser("solve", parents=[common], help="Analytic roots and loss probabilities")
    commands.add_parser("simulate", parents=[common], help="Replicated simulation estimates")
    commands.add_parser("optimize", parents=[common], help="Minimise N_1 or C under a J-bar budget")
    commands.add_parser("validate", parents=[common], help="Cross-check identities on simulated paths")
    return parser


# ============================================================================
# solve
# ============================================================================

def cmd_solve(scenario: Scenario) -> Dict[str, Any]:
    """Per-level roots, stationary summaries and losses at the quotas.

    Raises:
        NotApplicable: If the depletion epochs are not Poisson
        UnstableSystem: If some level has rho >= 1
    """
    system = scenario.system
    if not system.exponential_service:
        raise NotApplicable("solve needs Poisson depletion epochs (exponential service)")
    models = cumulative_models(system)
    solutions = [solve_root(model) for model in models]
    quotas = scenario.solve.quotas or system.cumulative_quotas or (None,) * system.ell

    levels = []
    for model, solution, N in zip(models, solutions, quotas):
        summary = stationary_summary(solution)
        row: Dict[str, Any] = {
            "level": model.level,
            "lambda": model.lambda_k,
            "rho": solution.rho,
            "varsigma": solution.varsigma,
            "iterations": solution.iterations,
            "residual": solution.residual,
            "mean": summary.mean,
            "variance": summary.variance,
            "median": summary.median,
            "p99": summary.p99,
            "quota": N,
            "overflow": None,
            "loss_exact": None,
            "loss_asymptotic": None,
            "note": None,
        }
        if N is not None:
            row["overflow"] = tail_overflow_prob(solution, N)
            if N == 0:
                row["loss_exact"] = 1.0
            else:
                row["loss_asymptotic"] = loss_asymptotic(model, N)
                try:
                    row["loss_exact"] = loss_exact(model, N)
                except PrecisionError as e:
                    log.warning(f"Level {model.level}: {e}")
                    row["note"] = e.advisory or str(e)
        levels.append(row)

    J_bar = None
    if system.cumulative_costs is not None and None not in quotas:
        N_cum = tuple(quotas)
        J = J_terms(QuotaMapping((), (), N_cum, N_cum), solutions, [m.lambda_k for m in models])
        J_bar = math.fsum(a * j for a, j in zip(system.cumulative_costs, J))

    heavy = None
    delta, Delta = scenario.solve.delta, scenario.solve.Delta
    if delta is not None and Delta is not None:
        if system.C < 2:
            log.warning("Heavy-load forms need C >= 2; skipped")
        else:
            top = models[-1]
            m = moments(top.dist, top.mu)
            heavy = {
                "delta": delta,
                "Delta": Delta,
                "kappa": heavy_load_coefficient(m, system.C),
                "root": heavy_load_root(m, delta, system.C),
                "root_exact": solutions[-1].varsigma,
                "loss": loss_heavy_load(m, delta, Delta, system.C),
            }

    return {
        "command": "solve",
        "scenario": scenario.name,
        "system": {"ell": system.ell, "C": system.C, "mu": system.mu, "lambda": system.lam},
        "levels": levels,
        "J_bar": J_bar,
        "heavy_load": heavy,
    }


# ============================================================================
# simulate
# ============================================================================

def _analytic_overflow(system: SystemConfig) -> Optional[Dict[str, Any]]:
    """Geometric-tail J_k next to the estimates, when the analytic model applies."""
    quotas = system.cumulative_quotas
    if (
        system.is_finite
        or quotas is None
        or None in quotas
        or not system.exponential_service
        or not all(law.is_unit for law in system.unit_lengths)
    ):
        return None
    try:
        models = cumulative_models(system)
        solutions = [solve_root(model) for model in models]
    except PlannerError as e:
        log.info(f"No analytic comparison: {e}")
        return None
    J = J_terms(QuotaMapping((), (), quotas, quotas), solutions, [m.lambda_k for m in models])
    J_bar = None
    if system.cumulative_costs is not None:
        J_bar = math.fsum(a * j for a, j in zip(system.cumulative_costs, J))
    return {"cum_J": list(J), "J_bar": J_bar}


def cmd_simulate(scenario: Scenario) -> Dict[str, Any]:
    """Run the replications, merge the estimates and write the trajectory.

    The first replication's trajectory is written as CSV when the scenario
    asks for it and an output directory is set.
    """
    system = scenario.system
    keep = scenario.trajectory and scenario.out_dir is not None
    if scenario.trajectory and not keep:
        log.warning("Trajectory output needs --out DIR; skipped")

    progress = ProgressBar(scenario.replications, "replications")
    result = simulate(system, ReplicationConfig(replications=scenario.replications), progress, keep_first=keep)
    progress.finish()

    merged = result.merged
    if merged.arrivals == 0:
        log.warning("No arrivals after warm-up: the estimate report is empty")

    trajectory = None
    if keep and result.trajectory is not None:
        scenario.out_dir.mkdir(parents=True, exist_ok=True)
        result.trajectory.to_csv(scenario.out_dir / TRAJECTORY_FILE)
        trajectory = TRAJECTORY_FILE

    return {
        "command": "simulate",
        "scenario": scenario.name,
        "seed": system.seed,
        "horizon": system.horizon,
        "buffer_mode": system.buffer_mode,
        "estimate": merged.as_dict(),
        "analytic": _analytic_overflow(system),
        "trajectory": trajectory,
    }


# ============================================================================
# optimize
# ============================================================================

def cmd_optimize(scenario: Scenario) -> Dict[str, Any]:
    """Solve the scenario's optimization problem.

    Raises:
        MonotonicityViolation: If the probe audit fails
    """
    problem = build_problem(scenario)
    result = optimize(problem)
    probe = result.at_optimum
    name = "N_1" if result.decision == "quota_N1" else "C"
    levels = [
        {
            "level": k + 1,
            "alpha_class": probe.costs.alpha_class[k],
            "alpha_cum": probe.costs.alpha_cum[k],
            "N_class": probe.quotas.N_class[k],
            "N_cum": probe.quotas.N_cum[k],
            "term": probe.terms[k],
        }
        for k in range(problem.system.ell)
    ]
    return {
        "command": "optimize",
        "scenario": scenario.name,
        "decision": result.decision,
        "name": name,
        "mode": problem.mode,
        "epsilon": problem.epsilon,
        "optimum": result.optimum,
        "J_bar": result.J_bar,
        "certificate": {
            "kind": result.certificate.kind,
            "J_bar": result.certificate.J_bar,
            "previous": result.certificate.previous,
            "valid": result.certificate.valid,
        },
        "bounds": list(result.bounds),
        "widenings": result.widenings,
        "levels": levels,
        "trace": result.probe_table(),
    }


# ============================================================================
# validate
# ============================================================================

def _statistical_checks(system: SystemConfig, trajectory, threshold: float) -> List[Dict[str, Any]]:
    if system.is_finite or not system.exponential_service or not all(law.is_unit for law in system.unit_lengths):
        log.info("Statistical checks need the infinite unit-length model with Poisson depletion; skipped")
        return []
    try:
        solutions = [solve_root(model) for model in cumulative_models(system)]
    except PlannerError as e:
        log.info(f"Statistical checks skipped: {e}")
        return []
    rows = []
    for solution in solutions:
        tv = total_variation_to_geometric(pre_arrival_pmf(trajectory, solution.level), solution.varsigma)
        rows.append({
            "check": f"tv_geometric_level_{solution.level}",
            "deviation": tv,
            "threshold": threshold,
            "passed": tv <= threshold,
            "kind": "statistical",
        })
    return rows


def cmd_validate(scenario: Scenario) -> Dict[str, Any]:
    """Audit the pathwise identities on every seed and compare replication 0
    with the analytic pre-arrival law.

    Statistical checks are reported but do not fail the run.
    """
    directives = scenario.validate
    system = replace(scenario.system, record=True, record_every=1)
    if directives.horizon is not None:
        system = replace(system, horizon=directives.horizon)

    first: List[Any] = []

    def task(r: int) -> List[Dict[str, Any]]:
        trajectory = run(system, r)
        if r == 0:
            first.append(trajectory)
        return pathwise_reports(trajectory, directives.levels)

    progress = ProgressBar(directives.seeds, "seeds")
    per_seed = run_replications(task, ReplicationConfig(replications=directives.seeds), progress)
    progress.finish()

    checks = []
    for rows in zip(*per_seed):
        worst = max(row["deviation"] for row in rows)
        checks.append({
            "check": rows[0]["check"],
            "deviation": worst,
            "threshold": 0,
            "passed": worst == 0,
            "kind": "pathwise",
        })
    checks += _statistical_checks(system, first[0], directives.tv_threshold)

    return {
        "command": "validate",
        "scenario": scenario.name,
        "seeds": directives.seeds,
        "levels": directives.levels,
        "checks": checks,
        "passed": all(c["passed"] for c in checks if c["kind"] == "pathwise"),
    }


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "validate": cmd_validate,
}


# ============================================================================
# Main Entry Point
# ============================================================================

def run_command(command: str, scenario: Scenario) -> Dict[str, Any]:
    """Run one subcommand and emit its report.

    Raises:
        AuditFailure: After emitting a validation report with a failed
            pathwise check
    """
    record = COMMANDS[command](scenario)
    emit(record, scenario.format, scenario.out_dir)
    if command == "validate" and not record["passed"]:
        failed = [c for c in record["checks"] if c["kind"] == "pathwise" and not c["passed"]]
        raise AuditFailure(
            "Pathwise check failed: " + ", ".join(f"{c['check']} (deviation {c['deviation']})" for c in failed),
            failed,
        )
    return record


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point for bw-planner."""
    args = build_parser().parse_args(argv)

    # Setup logging first
    setup_logging(
        verbosity=args.verbose,
        quiet=args.quiet,
        log_file=args.log_file,
    )

    try:
        scenario = with_overrides(
            load_scenario(args.scenario),
            seed=args.seed,
            replications=args.reps,
            out_dir=args.out,
            format=args.format,
        )
        log.debug(f"Running {args.command} on {args.scenario} (seed {scenario.seed})")
        run_command(args.command, scenario)
    except MonotonicityViolation as e:
        log.error(str(e))
        print("\n".join(format_probes(e.probes)), file=sys.stderr)
        raise SystemExit(e.exit_code)
    except PlannerError as e:
        log.error(str(e))
        raise SystemExit(e.exit_code)


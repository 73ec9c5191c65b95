"""Exception hierarchy for bw-planner.

Every error carries the process exit code the CLI maps it to:
0 success, 1 usage/schema error, 2 unstable model, 3 audit failure.
"""

from typing import Any, Dict, List, Optional


class PlannerError(Exception):
    """Base class for all bw-planner errors."""
    exit_code = 1


class ScenarioError(PlannerError):
    """Scenario file is missing, malformed or fails the schema."""


class DomainError(PlannerError, ValueError):
    """Argument outside the domain of an operation."""


class NumericalDegeneracy(PlannerError):
    """A quantity that must be positive collapsed to zero."""


class PrecisionError(PlannerError):
    """Result would leave the double-precision range."""

    def __init__(self, message: str, advisory: str = ""):
        super().__init__(f"{message} {advisory}".strip())
        self.advisory = advisory


class NotApplicable(PlannerError):
    """Check or estimator does not apply to this configuration."""


class InfeasibleQuota(PlannerError):
    """No integer quota satisfies the floor identity."""


class Infeasible(PlannerError):
    """Optimization budget cannot be met."""


class UnstableSystem(PlannerError):
    """Load at some cumulative level is not below one."""
    exit_code = 2

    def __init__(self, rho: float, level: Optional[int] = None):
        where = f" at level {level}" if level is not None else ""
        super().__init__(f"Unstable model{where}: rho = {rho:.6g} >= 1")
        self.rho = rho
        self.level = level


class NonConvergence(PlannerError):
    """Search failed to bracket a feasible point."""
    exit_code = 3


class MonotonicityViolation(PlannerError):
    """Probe sequence of an optimizer is not nonincreasing."""
    exit_code = 3

    def __init__(self, message: str, probes: List[Dict[str, Any]]):
        super().__init__(message)
        self.probes = probes


class AuditFailure(PlannerError):
    """A pathwise identity failed during validation."""
    exit_code = 3

    def __init__(self, message: str, checks: List[Dict[str, Any]]):
        super().__init__(message)
        self.checks = checks

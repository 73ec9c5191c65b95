"""Replication fan-out over worker threads.

Replications use disjoint counter-based streams, so they are independent
tasks; results are returned in replication order whatever the completion
order, which keeps merged reports bit-reproducible.
"""

import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, TypeVar

from .errors import DomainError, PlannerError
from .estimators import EstimateReport, estimate_J, merge_reports
from .log import get_logger, replication_context
from .simulator import BufferTrajectory, SystemConfig, run

log = get_logger(__name__)

THREADS_ENV = "BW_PLANNER_THREADS"
DEFAULT_WORKERS = 4

T = TypeVar("T")


def default_workers() -> int:
    """Worker count from BW_PLANNER_THREADS, else 4."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return DEFAULT_WORKERS
    try:
        workers = int(value)
    except ValueError:
        log.warning(f"Ignoring {THREADS_ENV}={value!r}: not an integer")
        return DEFAULT_WORKERS
    return max(1, workers)


@dataclass(frozen=True)
class ReplicationConfig:
    """Configuration for a batch of replications."""
    replications: int = 1
    workers: Optional[int] = None
    base_seed: Optional[int] = None

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError(f"replication count must be positive, got {self.replications}")

    @property
    def max_workers(self) -> int:
        workers = self.workers if self.workers is not None else default_workers()
        return max(1, min(workers, self.replications))


def run_replications(
    task: Callable[[int], T],
    config: ReplicationConfig,
    progress: Optional[object] = None,
) -> List[T]:
    """Run ``task(replication)`` for every replication index.

    Uses parallel workers when max_workers > 1.

    Args:
        task: Callable taking the replication index
        config: Replication configuration
        progress: Optional progress bar instance

    Returns:
        Results ordered by replication index
    """
    results: List[Optional[T]] = [None] * config.replications

    def tagged(r: int) -> T:
        with replication_context(r):
            return task(r)

    log.debug(f"Running {config.replications} replications with {config.max_workers} workers")

    if config.max_workers == 1:
        for r in range(config.replications):
            results[r] = tagged(r)
            if progress is not None:
                progress.update(1)
        return results

    with ThreadPoolExecutor(max_workers=config.max_workers) as executor:
        futures = {executor.submit(tagged, r): r for r in range(config.replications)}
        for future in as_completed(futures):
            r = futures[future]
            try:
                results[r] = future.result()
            except Exception as e:
                if not isinstance(e, PlannerError):
                    log.error(f"Replication {r} failed: {e}")
                raise
            if progress is not None:
                progress.update(1)
    return results


@dataclass
class SimulationResult:
    system: SystemConfig
    reports: List[EstimateReport]
    merged: EstimateReport
    trajectory: Optional[BufferTrajectory] = None


def simulate(
    system: SystemConfig,
    config: ReplicationConfig,
    progress: Optional[object] = None,
    keep_first: bool = False,
) -> SimulationResult:
    """Run replications of ``system`` and merge their estimates."""
    if config.base_seed is not None and config.base_seed != system.seed:
        system = replace(system, seed=config.base_seed)

    first: List[BufferTrajectory] = []
    # only a kept trajectory carries the event record
    unrecorded = replace(system, record=False)

    def task(r: int) -> EstimateReport:
        keep = keep_first and r == 0
        trajectory = run(system if keep else unrecorded, r)
        if keep:
            first.append(trajectory)
        return estimate_J(trajectory, system)

    reports = run_replications(task, config, progress)
    merged = merge_reports(reports, system)
    log.info(f"Merged {len(reports)} replications ({merged.arrivals} arrivals after warm-up)")
    return SimulationResult(system, reports, merged, first[0] if first else None)


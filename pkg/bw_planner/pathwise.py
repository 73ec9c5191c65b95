"""Pathwise identities of simulated trajectories.

All checks are exact integer identities that hold from time zero; a nonzero
deviation means the simulator is wrong.
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from .errors import DomainError, NotApplicable
from .log import get_logger
from .simulator import ARRIVAL, DEPARTURE, BufferTrajectory, SystemConfig, run

log = get_logger(__name__)


@dataclass(frozen=True)
class CrossingReport:
    kind: str
    k: int
    m: int
    ups: int
    downs: int
    window_downs: Optional[int]
    indicator: int
    violation: int


@dataclass(frozen=True)
class DeviationReport:
    check: str
    per_level: Tuple[int, ...]

    @property
    def max_deviation(self) -> int:
        return max(self.per_level, default=0)


@dataclass(frozen=True)
class StabilityReport:
    """Drift estimates (A(t) - D(t)) / t over growing windows."""
    windows: Tuple[Tuple[float, float], ...]
    expected_drift: float
    half_width: Optional[float]
    content_trend: Tuple[int, ...]

    @property
    def drift(self) -> float:
        return self.windows[-1][1] if self.windows else 0.0

    @property
    def verdict(self) -> str:
        if not self.windows:
            return "undetermined"
        hw = self.half_width or 0.0
        if self.drift + hw < 0.0:
            return "stable"
        if self.drift - hw > 0.0:
            return "unstable"
        return "critical"


def _require_complete(trajectory: BufferTrajectory, check: str) -> None:
    if not trajectory.is_complete:
        raise NotApplicable(f"{check} needs the full event record (record_every=1)")


def _series(trajectory: BufferTrajectory, kind: str, k: int) -> np.ndarray:
    if not 1 <= k <= trajectory.ell:
        raise DomainError(f"level {k} outside 1..{trajectory.ell}")
    source = trajectory.contents if kind == "class" else trajectory.cumulative
    return np.concatenate(([0], source[:, k - 1]))


# ============================================================================
# Level crossings
# ============================================================================

def crossing_audit(trajectory: BufferTrajectory, m: int, k: int = 1, kind: str = "class") -> CrossingReport:
    """Check up-crossings = down-crossings + 1{content(t) >= m} for level m.

    Down-crossings are departures taking the content from >= m to < m. For
    class 1 and cumulative contents they are also counted as departures
    starting in m .. m-1+C. With a full record, both counts are recomputed
    from the record and compared with the online counters.

    Args:
        trajectory: Finished trajectory
        m: Level, m >= 1
        k: Class or cumulative level, 1-based
        kind: ``class`` or ``cumulative``

    Returns:
        CrossingReport whose violation must be 0
    """
    if m < 1:
        raise DomainError(f"crossing level must be positive, got {m}")
    counters = trajectory.crossings
    ups = counters.ups(kind, k, m)
    downs = counters.downs(kind, k, m)
    final = trajectory.final_contents if kind == "class" else trajectory.final_cumulative
    indicator = int(final[k - 1] >= m)
    violation = abs(ups - downs - indicator)

    window = None
    if kind == "cumulative" or k == 1:
        window = counters.window_downs(kind, k, m, trajectory.C)
        violation = max(violation, abs(ups - window - indicator))

    if trajectory.is_complete:
        path = _series(trajectory, kind, k)
        before, after = path[:-1], path[1:]
        recount_ups = int(np.count_nonzero((before < m) & (after >= m)))
        recount_downs = int(np.count_nonzero((after < m) & (before >= m)))
        violation = max(violation, abs(recount_ups - ups), abs(recount_downs - downs))

    if violation:
        log.warning(f"Crossing identity violated for {kind} {k} at level {m}: ups={ups} downs={downs}")
    return CrossingReport(kind, k, m, ups, downs, window, indicator, violation)


# ============================================================================
# Cumulative contents as single queues
# ============================================================================

def cumulative_equivalence_check(trajectory: BufferTrajectory) -> DeviationReport:
    """Replay each cumulative level through the single-queue recursion.

    Q_k <- Q_k + (admitted length of classes <= k) at arrivals and
    Q_k <- max(0, Q_k - C) at departures must equal sum_{i<=k} Q^(i).
    """
    _require_complete(trajectory, "cumulative equivalence")
    cumulative = trajectory.cumulative
    kinds = trajectory.kinds.tolist()
    classes = trajectory.classes.tolist()
    lengths = trajectory.lengths.tolist()
    admitted = trajectory.admitted.tolist()
    C = trajectory.C

    deviations = []
    for level in range(1, trajectory.ell + 1):
        actual = cumulative[:, level - 1].tolist()
        q, worst = 0, 0
        for n, kind in enumerate(kinds):
            if kind == ARRIVAL:
                if admitted[n] and classes[n] <= level:
                    q += lengths[n]
            else:
                q = max(0, q - C)
            worst = max(worst, abs(q - actual[n]))
        deviations.append(worst)
    return DeviationReport("cumulative_equivalence", tuple(deviations))


def reflection_check(trajectory: BufferTrajectory, k: int) -> int:
    """Check Q_k(t) = S_k(t) - min(0, min_{u<=t} S_k(u)) with S_k = A_k - C D.

    Raises:
        NotApplicable: In finite modes or without a full record
    """
    if trajectory.buffer_mode != "infinite":
        raise NotApplicable("reflection identity holds only in infinite-buffer mode")
    _require_complete(trajectory, "reflection")
    if not 1 <= k <= trajectory.ell:
        raise DomainError(f"level {k} outside 1..{trajectory.ell}")
    if not len(trajectory.times):
        return 0

    arrivals = (trajectory.kinds == ARRIVAL) & (trajectory.classes <= k)
    increments = np.where(arrivals, trajectory.lengths, 0)
    increments = increments - np.where(trajectory.kinds == DEPARTURE, trajectory.C, 0)
    S = np.cumsum(increments)
    reflected = S - np.minimum(0, np.minimum.accumulate(S))
    return int(np.max(np.abs(reflected - trajectory.cumulative[:, k - 1])))


def pathwise_reports(trajectory: BufferTrajectory, levels: int = 20) -> List[dict]:
    """Run every applicable pathwise identity; one row per check."""
    rows = []
    equivalence = cumulative_equivalence_check(trajectory)
    rows.append({"check": "cumulative_equivalence", "deviation": equivalence.max_deviation})
    if trajectory.buffer_mode == "infinite":
        worst = max(reflection_check(trajectory, k) for k in range(1, trajectory.ell + 1))
        rows.append({"check": "reflection", "deviation": worst})
    worst = 0
    for k in range(1, trajectory.ell + 1):
        for kind in ("class", "cumulative"):
            for m in range(1, levels + 1):
                worst = max(worst, crossing_audit(trajectory, m, k, kind).violation)
    rows.append({"check": f"crossing_levels_1_{levels}", "deviation": worst})
    for row in rows:
        row["passed"] = row["deviation"] == 0
    return rows


# ============================================================================
# Stability
# ============================================================================

def stability_probe(config: SystemConfig, windows: int = 6, replication: int = 0) -> StabilityReport:
    """Estimate the drift r = lim (A_ell(t) - D(t)) / t on growing windows.

    A_ell counts offered length and D(t) is C times the number of departure
    epochs. Advisory only.
    """
    if windows < 1:
        raise DomainError("window count must be positive")
    trajectory = run(replace(config, record=True, record_every=1), replication)
    mean_length = sum(p * law.mean for p, law in zip(config.thinning, config.unit_lengths))
    expected = config.lam * mean_length - config.C / config.service_dist.mean
    if not len(trajectory.times):
        return StabilityReport((), expected, None, ())

    times = trajectory.times
    offered = np.cumsum(np.where(trajectory.kinds == ARRIVAL, trajectory.lengths, 0))
    depleted = config.C * np.cumsum(trajectory.kinds == DEPARTURE)
    net = offered - depleted
    total = trajectory.cumulative[:, -1]

    results = []
    trend = []
    for i in range(windows):
        t = times[-1] / 2 ** (windows - 1 - i)
        n = max(0, int(np.searchsorted(times, t, side="right")) - 1)
        results.append((float(t), float(net[n] / times[n]) if times[n] > 0 else 0.0))
        trend.append(int(total[n]))

    # batch means over the last window
    half_width = None
    edges = np.linspace(times[-1] / 2, times[-1], 11)
    idx = np.searchsorted(times, edges, side="right") - 1
    if np.all(np.diff(idx) > 0) and idx[0] >= 0:
        rates = np.diff(net[idx]) / np.diff(times[idx])
        half_width = float(stats.t.ppf(0.975, len(rates) - 1) * rates.std(ddof=1) / np.sqrt(len(rates)))

    report = StabilityReport(tuple(results), expected, half_width, tuple(trend))
    if report.verdict == "unstable":
        log.warning(f"Positive drift {report.drift:.4g}: the system is overloaded")
    log.info(f"Drift estimate {report.drift:.4g} (expected {expected:.4g}), verdict {report.verdict}")
    return report

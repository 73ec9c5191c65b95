"""Overflow-fraction estimators and replication merging."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import DomainError
from .log import get_logger
from .simulator import BufferTrajectory, SystemConfig

log = get_logger(__name__)

Vector = Tuple[Optional[float], ...]

CONFIDENCE = 0.95


@dataclass(frozen=True)
class EstimateReport:
    """Estimated overflow fractions, all normalised by the total arrivals A_ell.

    ``class_J[k]`` estimates J^(k) (class contents against class quotas) and
    ``cum_J[k]`` estimates J_k (cumulative contents against cumulative
    quotas). In finite modes both are rejected-arrival fractions and the
    departure-side estimates are None.
    """
    arrivals: int
    duration: float
    class_J: Vector
    cum_J: Vector
    J: Optional[float]
    J_bar: Optional[float]
    departure_class_J: Optional[Vector]
    departure_cum_J: Optional[Vector]
    loss_fraction: Tuple[float, ...]
    loss_length: Tuple[float, ...]
    replications: int = 1
    half_widths: Dict[str, Vector] = field(default_factory=dict)

    def as_dict(self) -> Dict:
        return {
            "arrivals": self.arrivals,
            "duration": self.duration,
            "class_J": list(self.class_J),
            "cum_J": list(self.cum_J),
            "J": self.J,
            "J_bar": self.J_bar,
            "departure_class_J": None if self.departure_class_J is None else list(self.departure_class_J),
            "departure_cum_J": None if self.departure_cum_J is None else list(self.departure_cum_J),
            "loss_fraction": list(self.loss_fraction),
            "loss_length": list(self.loss_length),
            "replications": self.replications,
            "half_widths": {key: list(value) for key, value in sorted(self.half_widths.items())},
        }


def _exceedances(hist, quota: Optional[int]) -> int:
    if quota is None:
        return 0
    return sum(n for level, n in hist.items() if level > quota)


def _crossed_above(pairs, quota: Optional[int]) -> int:
    # levels above quota + 1 passed by each departure
    if quota is None:
        return 0
    return sum(n * max(0, before - max(after, quota + 1)) for (before, after), n in pairs.items())


def _weighted(costs: Optional[Sequence[float]], values: Vector) -> Optional[float]:
    if costs is None or any(v is None for v in values):
        return None
    return float(sum(a * v for a, v in zip(costs, values)))


def estimate_J(trajectory: BufferTrajectory, config: SystemConfig) -> EstimateReport:
    """Estimate J^(k), J_k, J and J-bar from the post-warm-up tallies.

    Args:
        trajectory: Finished trajectory
        config: Configuration the trajectory was run with

    Returns:
        EstimateReport; zero arrivals give zero estimates
    """
    tally = trajectory.tally
    ell = trajectory.ell
    A = tally.arrivals
    loss_fraction = tuple(
        tally.rejected[k] / tally.class_arrivals[k] if tally.class_arrivals[k] else 0.0 for k in range(ell)
    )
    loss_length = tuple(float(x) for x in tally.loss_length)

    if config.is_finite:
        if A:
            class_J = tuple(r / A for r in tally.rejected)
            cum_J = tuple(float(x) / A for x in np.cumsum(tally.rejected))
        else:
            class_J = cum_J = (0.0,) * ell
        dep_class = dep_cum = None
    else:
        class_q, cum_q = config.class_quotas, config.cumulative_quotas

        def per_level(quotas, fn, data):
            if quotas is None:
                return (None,) * ell
            if not A:
                return (0.0,) * ell
            return tuple(fn(data[k], quotas[k]) / A for k in range(ell))

        class_J = per_level(class_q, _exceedances, tally.class_pre)
        cum_J = per_level(cum_q, _exceedances, tally.cum_pre)
        dep_class = per_level(class_q, _crossed_above, tally.class_dep)
        dep_cum = per_level(cum_q, _crossed_above, tally.cum_dep)

    report = EstimateReport(
        arrivals=A,
        duration=tally.duration,
        class_J=class_J,
        cum_J=cum_J,
        J=_weighted(config.class_costs, class_J),
        J_bar=_weighted(config.cumulative_costs, cum_J),
        departure_class_J=dep_class,
        departure_cum_J=dep_cum,
        loss_fraction=loss_fraction,
        loss_length=loss_length,
    )
    log.debug(f"Replication {trajectory.replication}: {A} arrivals, J_k = {cum_J}")
    return report


def pre_arrival_pmf(trajectory: BufferTrajectory, level: int) -> np.ndarray:
    """Empirical law of Q_level(t-) over arrivals of classes <= level."""
    if not 1 <= level <= trajectory.ell:
        raise DomainError(f"level {level} outside 1..{trajectory.ell}")
    hist = trajectory.tally.cum_pre[level - 1]
    total = sum(hist.values())
    if not total:
        return np.zeros(1)
    pmf = np.zeros(max(hist) + 1)
    for m, n in hist.items():
        pmf[m] = n
    return pmf / total


def total_variation_to_geometric(pmf: np.ndarray, varsigma: float) -> float:
    """Total-variation distance between ``pmf`` and (1 - s) s^m."""
    m = np.arange(len(pmf))
    geometric = (1.0 - varsigma) * varsigma ** m
    tail = varsigma ** len(pmf)
    return 0.5 * (float(np.abs(pmf - geometric).sum()) + tail)


# ============================================================================
# Replication merge
# ============================================================================

def half_width(values: Sequence[float], confidence: float = CONFIDENCE) -> Optional[float]:
    """Student-t confidence half-width of the mean; None below two values."""
    n = len(values)
    if n < 2:
        return None
    return float(stats.t.ppf(0.5 + confidence / 2, n - 1) * np.std(values, ddof=1) / np.sqrt(n))


def _merge_vectors(vectors: List[Optional[Vector]]) -> Tuple[Optional[Vector], Optional[Vector]]:
    if any(v is None for v in vectors):
        return None, None
    means, widths = [], []
    for column in zip(*vectors):
        if any(x is None for x in column):
            means.append(None)
            widths.append(None)
        else:
            means.append(float(np.mean(column)))
            widths.append(half_width(column))
    return tuple(means), tuple(widths)


def merge_reports(reports: Sequence[EstimateReport], config: SystemConfig) -> EstimateReport:
    """Average replications and attach Student-t half-widths.

    J and J-bar are recomputed from the merged per-class parts.
    """
    if not reports:
        raise DomainError("nothing to merge")
    if len(reports) == 1:
        return reports[0]

    merged, widths = {}, {}
    for name in ("class_J", "cum_J", "departure_class_J", "departure_cum_J", "loss_fraction", "loss_length"):
        mean, width = _merge_vectors([getattr(r, name) for r in reports])
        merged[name] = mean
        if width is not None:
            widths[name] = width
    for name in ("J", "J_bar"):
        values = [getattr(r, name) for r in reports]
        if all(v is not None for v in values):
            widths[name] = (half_width(values),)

    class_J, cum_J = merged["class_J"], merged["cum_J"]
    return EstimateReport(
        arrivals=sum(r.arrivals for r in reports),
        duration=float(sum(r.duration for r in reports)),
        class_J=class_J,
        cum_J=cum_J,
        J=_weighted(config.class_costs, class_J),
        J_bar=_weighted(config.cumulative_costs, cum_J),
        departure_class_J=merged["departure_class_J"],
        departure_cum_J=merged["departure_cum_J"],
        loss_fraction=merged["loss_fraction"],
        loss_length=merged["loss_length"],
        replications=len(reports),
        half_widths=widths,
    )

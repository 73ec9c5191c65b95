"""Event-driven simulation of the priority buffer with autonomous batch service.

Units of classes 1..ell arrive into separate buffers. At every epoch of an
exogenous departure process up to C units of total length leave, drained in
strict priority order (buffer 1 first). Quotas either only mark overflow
(infinite mode) or reject whole arriving groups (finite modes).
"""

import csv
import heapq
from collections import Counter
from dataclasses import dataclass, field, replace
from itertools import accumulate
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .distributions import (
    Exponential,
    InterarrivalDistribution,
    UnitLength,
    make_stream,
    with_rate,
)
from .errors import DomainError
from .log import get_logger

log = get_logger(__name__)

ARRIVAL = 1
DEPARTURE = 0

BUFFER_MODES = ("infinite", "finite_per_class", "finite_cumulative")
ARRIVAL_MODES = ("thinned", "independent")
WARMUP_FRACTION = 0.1
BLOCK_SIZE = 4096


# ============================================================================
# Configuration
# ============================================================================

@dataclass(frozen=True)
class SystemConfig:
    """Full description of one simulated system.

    Classes and cumulative levels are numbered from 1 in every public
    interface; sequences are indexed from 0. A quota of None is infinite.
    """
    ell: int
    arrival: InterarrivalDistribution
    thinning: Tuple[float, ...]
    mu: float
    C: int
    unit_lengths: Tuple[UnitLength, ...] = ()
    service: Optional[InterarrivalDistribution] = None
    class_quotas: Optional[Tuple[Optional[int], ...]] = None
    cumulative_quotas: Optional[Tuple[Optional[int], ...]] = None
    buffer_mode: str = "infinite"
    class_costs: Optional[Tuple[float, ...]] = None
    cumulative_costs: Optional[Tuple[float, ...]] = None
    horizon: int = 100_000
    seed: int = 0
    arrival_mode: str = "thinned"
    record: bool = True
    record_every: int = 1

    def __post_init__(self):
        set_ = object.__setattr__
        if int(self.ell) != self.ell or self.ell < 1:
            raise DomainError(f"number of classes must be a positive integer, got {self.ell}")
        set_(self, "thinning", tuple(float(p) for p in self.thinning))
        if len(self.thinning) != self.ell:
            raise DomainError(f"expected {self.ell} thinning probabilities, got {len(self.thinning)}")
        if any(p <= 0.0 for p in self.thinning) or abs(sum(self.thinning) - 1.0) > 1e-12:
            raise DomainError(f"thinning probabilities must be positive and sum to 1, got {self.thinning}")
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu}")
        if int(self.C) != self.C or self.C < 1:
            raise DomainError(f"depletion rate C must be a positive integer, got {self.C}")
        if self.buffer_mode not in BUFFER_MODES:
            raise DomainError(f"unknown buffer mode {self.buffer_mode!r}")
        if self.arrival_mode not in ARRIVAL_MODES:
            raise DomainError(f"unknown arrival mode {self.arrival_mode!r}")
        if self.horizon < 0:
            raise DomainError("horizon must be nonnegative")
        if self.record_every < 1:
            raise DomainError("record_every must be at least 1")

        lengths = tuple(self.unit_lengths) or tuple(UnitLength() for _ in range(self.ell))
        if len(lengths) != self.ell:
            raise DomainError(f"expected {self.ell} unit length laws, got {len(lengths)}")
        set_(self, "unit_lengths", lengths)

        for name in ("class_quotas", "cumulative_quotas"):
            quotas = getattr(self, name)
            if quotas is None:
                continue
            quotas = tuple(None if q is None else int(q) for q in quotas)
            if len(quotas) != self.ell or any(q is not None and q < 0 for q in quotas):
                raise DomainError(f"{name} must hold {self.ell} nonnegative integers or None")
            set_(self, name, quotas)
        if self.cumulative_quotas is not None:
            finite = [q for q in self.cumulative_quotas if q is not None]
            if self.cumulative_quotas[: len(finite)] != tuple(finite):
                raise DomainError("infinite cumulative quotas may only follow finite ones")
            if any(b <= a for a, b in zip(finite, finite[1:])):
                raise DomainError(f"cumulative quotas must be strictly increasing, got {finite}")

        if self.buffer_mode == "finite_per_class" and (
            self.class_quotas is None or None in self.class_quotas
        ):
            raise DomainError("finite_per_class mode needs a finite quota for every class")
        if self.buffer_mode == "finite_cumulative" and (
            self.cumulative_quotas is None or None in self.cumulative_quotas
        ):
            raise DomainError("finite_cumulative mode needs a finite quota for every level")

        for name in ("class_costs", "cumulative_costs"):
            costs = getattr(self, name)
            if costs is None:
                continue
            costs = tuple(float(a) for a in costs)
            if len(costs) != self.ell or any(a < 0 for a in costs):
                raise DomainError(f"{name} must hold {self.ell} nonnegative reals")
            set_(self, name, costs)

    @property
    def lam(self) -> float:
        """Intensity of the superposed arrival process."""
        return self.arrival.intensity

    @property
    def class_rates(self) -> Tuple[float, ...]:
        return tuple(self.lam * p for p in self.thinning)

    @property
    def cumulative_rates(self) -> Tuple[float, ...]:
        return tuple(accumulate(self.class_rates))

    @property
    def class_arrivals(self) -> Tuple[InterarrivalDistribution, ...]:
        """Per-class interarrival laws used by the independent arrival mode."""
        return tuple(with_rate(self.arrival, rate) for rate in self.class_rates)

    @property
    def service_dist(self) -> InterarrivalDistribution:
        return self.service if self.service is not None else Exponential(self.mu)

    @property
    def exponential_service(self) -> bool:
        return isinstance(self.service_dist, Exponential) and abs(self.service_dist.rate - self.mu) <= 1e-12 * self.mu

    @property
    def is_finite(self) -> bool:
        return self.buffer_mode != "infinite"


# ============================================================================
# Buffer state and event steps
# ============================================================================

@dataclass
class BufferState:
    """Per-class contents plus rejection counters."""
    contents: List[int]
    C: int
    buffer_mode: str = "infinite"
    class_quotas: Optional[Sequence[Optional[int]]] = None
    cumulative_quotas: Optional[Sequence[Optional[int]]] = None
    rejected: List[int] = field(default_factory=list)
    loss_length: List[int] = field(default_factory=list)
    last_admitted: bool = True
    last_removed: int = 0

    def __post_init__(self):
        ell = len(self.contents)
        self.rejected = self.rejected or [0] * ell
        self.loss_length = self.loss_length or [0] * ell

    @classmethod
    def empty(cls, config: SystemConfig) -> "BufferState":
        return cls(
            contents=[0] * config.ell,
            C=config.C,
            buffer_mode=config.buffer_mode,
            class_quotas=config.class_quotas,
            cumulative_quotas=config.cumulative_quotas,
        )

    @property
    def cumulative(self) -> List[int]:
        return list(accumulate(self.contents))


def step_arrival(state: BufferState, k: int, length: int = 1) -> BufferState:
    """Admit (or reject) a group of ``length`` units of class ``k``.

    In finite modes the whole group is rejected if admitting it would push a
    class content (finite_per_class) or any cumulative content of level >= k
    (finite_cumulative) above its quota.
    """
    i = k - 1
    admitted = True
    if state.buffer_mode == "finite_per_class":
        admitted = state.contents[i] + length <= state.class_quotas[i]
    elif state.buffer_mode == "finite_cumulative":
        total = sum(state.contents[:i])
        for j in range(i, len(state.contents)):
            total += state.contents[j]
            if total + length > state.cumulative_quotas[j]:
                admitted = False
                break

    if admitted:
        state.contents[i] += length
    else:
        state.rejected[i] += 1
        state.loss_length[i] += length
    state.last_admitted = admitted
    return state


def step_departure(state: BufferState) -> BufferState:
    """Remove min(total content, C) units, draining buffer 1 first."""
    budget = min(sum(state.contents), state.C)
    state.last_removed = budget
    for i, q in enumerate(state.contents):
        if budget == 0:
            break
        take = min(q, budget)
        state.contents[i] = q - take
        budget -= take
    return state


# ============================================================================
# Trajectory
# ============================================================================

@dataclass
class CrossingCounters:
    """Jump counts of every content series, keyed by (before, after).

    Series ``class`` k is Q^(k); series ``cumulative`` k is Q_k. Counted
    from time zero.
    """
    class_up: List[Counter]
    class_down: List[Counter]
    cum_up: List[Counter]
    cum_down: List[Counter]

    @classmethod
    def empty(cls, ell: int) -> "CrossingCounters":
        return cls(*([Counter() for _ in range(ell)] for _ in range(4)))

    def _series(self, kind: str, k: int) -> Tuple[Counter, Counter]:
        if kind == "class":
            return self.class_up[k - 1], self.class_down[k - 1]
        if kind == "cumulative":
            return self.cum_up[k - 1], self.cum_down[k - 1]
        raise DomainError(f"unknown content series {kind!r}")

    def ups(self, kind: str, k: int, m: int) -> int:
        up, _ = self._series(kind, k)
        return sum(n for (before, after), n in up.items() if before < m <= after)

    def downs(self, kind: str, k: int, m: int) -> int:
        _, down = self._series(kind, k)
        return sum(n for (before, after), n in down.items() if after < m <= before)

    def window_downs(self, kind: str, k: int, m: int, C: int) -> int:
        """Departures whose pre-departure content lies in m .. m - 1 + C."""
        _, down = self._series(kind, k)
        return sum(n for (before, _), n in down.items() if m <= before <= m - 1 + C)


@dataclass
class Tally:
    """Statistics collected after the warm-up period."""
    ell: int
    start_time: float = 0.0
    end_time: float = 0.0
    arrivals: int = 0
    departures: int = 0
    class_arrivals: List[int] = field(default_factory=list)
    class_pre: List[Counter] = field(default_factory=list)
    cum_pre: List[Counter] = field(default_factory=list)
    class_dep: List[Counter] = field(default_factory=list)
    cum_dep: List[Counter] = field(default_factory=list)
    rejected: List[int] = field(default_factory=list)
    loss_length: List[int] = field(default_factory=list)

    def __post_init__(self):
        ell = self.ell
        self.class_arrivals = self.class_arrivals or [0] * ell
        self.class_pre = self.class_pre or [Counter() for _ in range(ell)]
        self.cum_pre = self.cum_pre or [Counter() for _ in range(ell)]
        self.class_dep = self.class_dep or [Counter() for _ in range(ell)]
        self.cum_dep = self.cum_dep or [Counter() for _ in range(ell)]
        self.rejected = self.rejected or [0] * ell
        self.loss_length = self.loss_length or [0] * ell

    @property
    def duration(self) -> float:
        return max(0.0, self.end_time - self.start_time)


@dataclass
class BufferTrajectory:
    """Event-indexed record of one replication.

    ``contents`` holds the per-class contents right after each recorded
    event; the record keeps every ``record_every``-th event.
    """
    ell: int
    C: int
    buffer_mode: str
    record_every: int
    times: np.ndarray
    kinds: np.ndarray
    classes: np.ndarray
    lengths: np.ndarray
    admitted: np.ndarray
    contents: np.ndarray
    final_contents: Tuple[int, ...]
    final_time: float
    n_events: int
    crossings: CrossingCounters
    tally: Tally
    ties: int = 0
    replication: int = 0

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.contents, axis=1)

    @property
    def is_complete(self) -> bool:
        return self.record_every == 1 and len(self.times) == self.n_events

    @property
    def final_cumulative(self) -> Tuple[int, ...]:
        return tuple(accumulate(self.final_contents))

    def to_csv(self, path: Path) -> None:
        """Write the record as epoch_time, event_type, class, Q1..Qell, cumQ1..cumQell."""
        header = ["epoch_time", "event_type", "class"]
        header += [f"Q{k}" for k in range(1, self.ell + 1)]
        header += [f"cumQ{k}" for k in range(1, self.ell + 1)]
        cumulative = self.cumulative
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for n in range(len(self.times)):
                kind = "arrival" if self.kinds[n] == ARRIVAL else "departure"
                writer.writerow(
                    [repr(float(self.times[n])), kind, int(self.classes[n])]
                    + [int(q) for q in self.contents[n]]
                    + [int(q) for q in cumulative[n]]
                )
        log.debug(f"Wrote {len(self.times)} trajectory rows to {path}")


# ============================================================================
# Event loop
# ============================================================================

class _BlockSampler:
    """Serves single draws from blocks produced by a vectorised sampler."""

    def __init__(self, draw: Callable[[int], np.ndarray], block_size: int = BLOCK_SIZE):
        self._draw = draw
        self._block_size = block_size
        self._samples: List = []
        self._index = 0

    def __call__(self):
        if self._index >= len(self._samples):
            self._samples = self._draw(self._block_size).tolist()
            self._index = 0
        x = self._samples[self._index]
        self._index += 1
        return x


class Simulator:
    """Runs one replication of a SystemConfig."""

    def __init__(self, config: SystemConfig, replication: int = 0):
        self.config = config
        self.replication = replication
        seed = config.seed

        def stream(name: str):
            return make_stream(seed, name, replication)

        if config.arrival_mode == "thinned":
            arrivals = stream("arrivals")
            self._interarrival = [_BlockSampler(lambda n, s=arrivals: config.arrival.draw(s, n))]
            classes = stream("classes")
            p = np.asarray(config.thinning)
            self._next_class = _BlockSampler(lambda n: classes.choice(config.ell, size=n, p=p) + 1)
        else:
            self._interarrival = []
            for k, dist in enumerate(config.class_arrivals, start=1):
                s = stream(f"arrivals-{k}")
                self._interarrival.append(_BlockSampler(lambda n, s=s, d=dist: d.draw(s, n)))
            self._next_class = None

        self._lengths = []
        for k, law in enumerate(config.unit_lengths, start=1):
            if law.is_unit:
                self._lengths.append(None)
            else:
                s = stream(f"lengths-{k}")
                self._lengths.append(_BlockSampler(lambda n, s=s, law=law: law.draw(s, n)))

        departures = stream("departures")
        service = config.service_dist
        self._service = _BlockSampler(lambda n: service.draw(departures, n))

    def run(self) -> BufferTrajectory:
        cfg = self.config
        ell, C = cfg.ell, cfg.C
        state = BufferState.empty(cfg)
        crossings = CrossingCounters.empty(ell)
        tally = Tally(ell)
        warmup = int(cfg.horizon * WARMUP_FRACTION)
        every = cfg.record_every if cfg.record else 0

        times: List[float] = []
        kinds: List[int] = []
        classes: List[int] = []
        lengths: List[int] = []
        admitted: List[bool] = []
        contents: List[int] = []

        # (time, kind, source): departures sort before arrivals at equal times
        events: List[Tuple[float, int, int]] = []
        heapq.heappush(events, (self._service(), DEPARTURE, 0))
        for source, sampler in enumerate(self._interarrival):
            heapq.heappush(events, (sampler(), ARRIVAL, source))

        ties = 0
        now = 0.0
        for n in range(cfg.horizon):
            now, kind, source = heapq.heappop(events)
            if events and events[0][0] == now:
                ties += 1
            if n == warmup:
                tally.start_time = now
            counting = n >= warmup

            before = list(state.contents)
            cum_before = list(accumulate(before))
            if kind == ARRIVAL:
                heapq.heappush(events, (now + self._interarrival[source](), ARRIVAL, source))
                k = source + 1 if self._next_class is None else self._next_class()
                sampler = self._lengths[k - 1]
                length = 1 if sampler is None else sampler()
                step_arrival(state, k, length)
                after = state.contents
                cum_after = list(accumulate(after))
                if state.last_admitted:
                    crossings.class_up[k - 1][(before[k - 1], after[k - 1])] += 1
                    for j in range(k - 1, ell):
                        crossings.cum_up[j][(cum_before[j], cum_after[j])] += 1
                if counting:
                    tally.arrivals += 1
                    tally.class_arrivals[k - 1] += 1
                    tally.class_pre[k - 1][before[k - 1]] += 1
                    for j in range(k - 1, ell):
                        tally.cum_pre[j][cum_before[j]] += 1
                    if not state.last_admitted:
                        tally.rejected[k - 1] += 1
                        tally.loss_length[k - 1] += length
            else:
                heapq.heappush(events, (now + self._service(), DEPARTURE, 0))
                k, length = 0, 0
                step_departure(state)
                after = state.contents
                cum_after = list(accumulate(after))
                if state.last_removed:
                    for j in range(ell):
                        if after[j] != before[j]:
                            crossings.class_down[j][(before[j], after[j])] += 1
                            if counting:
                                tally.class_dep[j][(before[j], after[j])] += 1
                        if cum_after[j] != cum_before[j]:
                            crossings.cum_down[j][(cum_before[j], cum_after[j])] += 1
                            if counting:
                                tally.cum_dep[j][(cum_before[j], cum_after[j])] += 1
                if counting:
                    tally.departures += 1

            if every and n % every == 0:
                times.append(now)
                kinds.append(kind)
                classes.append(k)
                lengths.append(length)
                admitted.append(kind == DEPARTURE or state.last_admitted)
                contents.extend(state.contents)

        tally.end_time = now
        if ties:
            log.warning(f"{ties} arrival/departure ties resolved departure-first (replication {self.replication})")
        if cfg.horizon == 0:
            log.warning("Zero horizon: empty trajectory")

        return BufferTrajectory(
            ell=ell,
            C=C,
            buffer_mode=cfg.buffer_mode,
            record_every=cfg.record_every if cfg.record else 0,
            times=np.asarray(times, dtype=float),
            kinds=np.asarray(kinds, dtype=np.int8),
            classes=np.asarray(classes, dtype=np.int64),
            lengths=np.asarray(lengths, dtype=np.int64),
            admitted=np.asarray(admitted, dtype=bool),
            contents=np.asarray(contents, dtype=np.int64).reshape(-1, ell),
            final_contents=tuple(state.contents),
            final_time=now,
            n_events=cfg.horizon,
            crossings=crossings,
            tally=tally,
            ties=ties,
            replication=self.replication,
        )


def run(config: SystemConfig, replication: int = 0) -> BufferTrajectory:
    """Simulate ``config.horizon`` events of replication ``replication``.

    Deterministic for a fixed (seed, replication).
    """
    log.debug(f"Replication {replication}: {config.horizon} events, mode {config.buffer_mode}")
    return Simulator(config, replication).run()


def replay(config: SystemConfig, script: Sequence[Tuple[str, int, int]]) -> BufferTrajectory:
    """Run a scripted event list of ("A", class, length) and ("D", 0, 0) items.

    Events are spaced one time unit apart, in script order.
    """
    items = list(script)
    arrival_times = [float(t) for t, (kind, _, _) in enumerate(items, start=1) if kind == "A"]
    departure_times = [float(t) for t, (kind, _, _) in enumerate(items, start=1) if kind == "D"]
    classes = iter([k for kind, k, _ in items if kind == "A"])
    lengths = iter([length for kind, _, length in items if kind == "A"])

    sim = Simulator(replace(config, horizon=len(items), record=True, record_every=1, arrival_mode="thinned"))
    sim._interarrival = [_scripted_gaps(arrival_times)]
    sim._service = _scripted_gaps(departure_times)
    sim._next_class = lambda: next(classes)
    sim._lengths = [lambda: next(lengths)] * config.ell
    return sim.run()


def _scripted_gaps(times: List[float]) -> Callable[[], float]:
    gaps = iter(np.diff([0.0] + times + [float("inf")]).tolist())
    return lambda: next(gaps, float("inf"))

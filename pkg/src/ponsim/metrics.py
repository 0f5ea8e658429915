"""Per-task outcome ledger and the evaluation quantities derived from it."""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field

OUTCOME_SUCCESS = 0
OUTCOME_SLO_MISS = 1
OUTCOME_REJECTED = 2
OUTCOME_IN_FLIGHT = 3  # unfinished at the horizon; counted as a failure

OUTCOME_NAMES = ("success", "slo_miss", "rejected", "in_flight")


@dataclass
class AppAggregate:
    name: str
    slo_s: float
    submitted: int = 0
    succeeded: int = 0
    completed: int = 0
    rejected: int = 0
    in_flight: int = 0
    latency_sum_s: float = 0.0

    @property
    def failed(self) -> int:
        return self.submitted - self.succeeded

    @property
    def tsr(self) -> float | None:
        return self.succeeded / self.submitted if self.submitted else None

    @property
    def mean_latency_s(self) -> float | None:
        return self.latency_sum_s / self.completed if self.completed else None


@dataclass
class MetricsLedger:
    """Append-only task records.

    Columns are kept in compact arrays; full task objects (with their
    lifecycle traces) are kept too when ``keep_tasks`` is set.
    """

    app_names: list[str]
    app_slos: list[float]
    keep_tasks: bool = False
    app_index: array = field(default_factory=lambda: array("i"))
    outcome: array = field(default_factory=lambda: array("b"))
    created_at: array = field(default_factory=lambda: array("d"))
    latency_s: array = field(default_factory=lambda: array("d"))
    tasks: list = field(default_factory=list)
    node_energy_j: dict[int, float] = field(default_factory=dict)
    link_energy_j: dict[int, float] = field(default_factory=dict)
    wall_clock_s: float = 0.0
    peak_memory_mb: float = 0.0
    horizon_s: float = 0.0

    def record(self, app_index: int, outcome: int, created_at: float, latency: float = math.nan,
               task=None) -> None:
        self.app_index.append(app_index)
        self.outcome.append(outcome)
        self.created_at.append(created_at)
        self.latency_s.append(latency)
        if self.keep_tasks and task is not None:
            self.tasks.append(task)

    def __len__(self) -> int:
        return len(self.outcome)

    def aggregates(self) -> list[AppAggregate]:
        aggs = [AppAggregate(n, s) for n, s in zip(self.app_names, self.app_slos)]
        for a, o, lat in zip(self.app_index, self.outcome, self.latency_s):
            agg = aggs[a]
            agg.submitted += 1
            if o == OUTCOME_SUCCESS or o == OUTCOME_SLO_MISS:
                agg.completed += 1
                agg.latency_sum_s += lat
                if o == OUTCOME_SUCCESS:
                    agg.succeeded += 1
            elif o == OUTCOME_REJECTED:
                agg.rejected += 1
            else:
                agg.in_flight += 1
        return aggs

    def counts(self) -> dict[str, int]:
        out = dict.fromkeys(OUTCOME_NAMES, 0)
        for o in self.outcome:
            out[OUTCOME_NAMES[o]] += 1
        return out


def tsr(ledger: MetricsLedger, app: str | None = None) -> float | None:
    """Fraction of submitted tasks delivered within their SLO (None if none submitted)."""
    if app is None:
        n = len(ledger)
        if n == 0:
            return None
        return sum(1 for o in ledger.outcome if o == OUTCOME_SUCCESS) / n
    i = ledger.app_names.index(app)
    submitted = succeeded = 0
    for a, o in zip(ledger.app_index, ledger.outcome):
        if a == i:
            submitted += 1
            succeeded += o == OUTCOME_SUCCESS
    return succeeded / submitted if submitted else None


def mean_latency(ledger: MetricsLedger, app: str | None = None) -> float | None:
    total = 0.0
    n = 0
    target = None if app is None else ledger.app_names.index(app)
    for a, o, lat in zip(ledger.app_index, ledger.outcome, ledger.latency_s):
        if (target is None or a == target) and o <= OUTCOME_SLO_MISS:
            total += lat
            n += 1
    return total / n if n else None


def normalized_latency_from_means(means_and_slos) -> tuple[float | None, list[int]]:
    """Mean of ``mean / slo`` over apps; apps with no mean are skipped and reported."""
    ratios = []
    skipped = []
    for i, (mean, slo) in enumerate(means_and_slos):
        if mean is None:
            skipped.append(i)
        else:
            ratios.append(mean / slo)
    return (sum(ratios) / len(ratios) if ratios else None), skipped


def normalized_latency(ledger: MetricsLedger) -> float | None:
    """SLA-normalised latency: average over apps of (mean latency / SLO)."""
    aggs = [a for a in ledger.aggregates() if a.submitted]
    value, _ = normalized_latency_from_means((a.mean_latency_s, a.slo_s) for a in aggs)
    return value


def energy_total(ledger: MetricsLedger, scope: str = "all") -> float:
    """Joules spent on links, nodes, or both (``scope`` in {all, links, nodes})."""
    links = float(sum(ledger.link_energy_j.values()))
    nodes = float(sum(ledger.node_energy_j.values()))
    if scope == "links":
        return links
    if scope == "nodes":
        return nodes
    return links + nodes


def node_energy(busy_core_seconds: float, active_w: float, idle_w: float = 0.0,
                cores: int = 1, duration_s: float = 0.0) -> float:
    """Two-state node model: active power while a core is busy, idle power otherwise."""
    idle = max(cores * duration_s - busy_core_seconds, 0.0)
    return busy_core_seconds * active_w + idle * idle_w

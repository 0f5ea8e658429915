"""Applications, user profiles, task arrivals and the built-in scenario presets."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .virtualization import ContainerSpec


class PatternKind(str, Enum):
    RANDOM = "random"
    PERIODIC = "periodic"
    BURSTY = "bursty"


@dataclass(frozen=True)
class ArrivalPattern:
    kind: PatternKind = PatternKind.PERIODIC
    period_s: float | None = None  # periodic; None derives it from the app rate
    burst_size: int = 5
    burst_interval_s: float | None = None  # bursty; None preserves the app's mean rate

    def __post_init__(self):
        if self.period_s is not None and self.period_s <= 0:
            raise ValueError("period_s must be positive")
        if self.burst_interval_s is not None and self.burst_interval_s <= 0:
            raise ValueError("burst_interval_s must be positive")
        if self.burst_size < 1:
            raise ValueError("burst_size must be at least 1")


@dataclass(frozen=True)
class ApplicationSpec:
    name: str
    task_rate_per_min: float
    max_latency_s: float
    task_length_mi: float
    request_kb: float
    response_kb: float
    user_count: int
    container: ContainerSpec = None
    pattern: ArrivalPattern = field(default_factory=ArrivalPattern)

    def __post_init__(self):
        if self.container is None:
            object.__setattr__(self, "container", ContainerSpec(self.name))
        for attr in ("task_rate_per_min", "max_latency_s", "request_kb", "response_kb"):
            if getattr(self, attr) <= 0:
                raise ValueError(f"{self.name}: {attr} must be positive")
        if self.task_length_mi < 0 or self.user_count < 0:
            raise ValueError(f"{self.name}: task length and user count must be non-negative")

    @property
    def mean_interarrival_s(self) -> float:
        return 60.0 / self.task_rate_per_min

    def period_s(self) -> float:
        return self.pattern.period_s or self.mean_interarrival_s

    def burst_interval_s(self) -> float:
        p = self.pattern
        return p.burst_interval_s or p.burst_size * self.mean_interarrival_s


@dataclass(frozen=True)
class UserProfile:
    device: int  # device number (dev{k}), not a node id
    app: str
    start_time_s: float = 0.0
    active_duration_s: float = math.inf
    idle_duration_s: float = 0.0
    pattern: ArrivalPattern | None = None  # None: the application's pattern

    def __post_init__(self):
        if self.start_time_s < 0 or self.idle_duration_s < 0:
            raise ValueError("profile times must be non-negative")
        if self.active_duration_s <= 0:
            raise ValueError("active_duration_s must be positive")

    def window_start(self, t: float) -> tuple[float, float]:
        """Active window ``[start, end)`` containing ``t``, or the next one."""
        if t < self.start_time_s:
            return self.start_time_s, self.start_time_s + self.active_duration_s
        if self.idle_duration_s == 0 or math.isinf(self.active_duration_s):
            return self.start_time_s, self.start_time_s + self.active_duration_s
        cycle = self.active_duration_s + self.idle_duration_s
        m = math.floor((t - self.start_time_s) / cycle)
        w = self.start_time_s + m * cycle
        if t >= w + self.active_duration_s:
            w += cycle
        return w, w + self.active_duration_s

    def is_active(self, t: float) -> bool:
        w, end = self.window_start(t)
        return w <= t < end


class ArrivalProcess:
    """Stateful arrival generator for one profile.

    Periodic and bursty arrivals fall at ``w + k*step`` for ``k >= 1``
    inside each half-open active window ``[w, w + active)``; bursts emit
    ``burst_size`` arrivals at the same instant. Random arrivals are
    exponential; a draw landing in an idle window restarts at the next
    window start.
    """

    def __init__(self, profile: UserProfile, app: ApplicationSpec, rng: np.random.Generator,
                 horizon_s: float = math.inf):
        self.profile = profile
        self.app = app
        self.rng = rng
        self.horizon_s = horizon_s
        self.pattern = profile.pattern or app.pattern
        self._pending_burst = 0
        self._last: float | None = None

    def _next_grid(self, t: float, step: float) -> float:
        prof = self.profile
        if step >= prof.active_duration_s:
            return math.inf  # no grid point fits inside an active window
        while True:
            w, end = prof.window_start(t)
            if w > self.horizon_s:
                return math.inf
            k = 1 if t < w else math.floor((t - w) / step) + 1
            cand = w + k * step
            if cand <= t:
                cand = w + (k + 1) * step
            if cand < end:
                return cand
            t = end  # skip the idle gap; window_start() then yields the next window

    def next_arrival(self, now: float) -> float | None:
        """Next arrival at or after ``now`` and not before the previous one."""
        kind = self.pattern.kind
        ref = now if self._last is None else max(now, self._last)
        if kind is PatternKind.BURSTY and self._pending_burst > 0:
            self._pending_burst -= 1
            t = self._last
        elif kind is PatternKind.RANDOM:
            t = ref
            mean = self.app.mean_interarrival_s
            while True:
                t = t + float(self.rng.exponential(mean))
                w, end = self.profile.window_start(t)
                if w <= t < end:
                    break
                t = w
                if t > self.horizon_s:
                    break
        else:
            step = self.app.period_s() if kind is PatternKind.PERIODIC else self.app.burst_interval_s()
            t = self._next_grid(ref, step)
            if kind is PatternKind.BURSTY:
                self._pending_burst = self.pattern.burst_size - 1
        if t > self.horizon_s:
            return None
        self._last = t
        return t


def arrival_times(profile: UserProfile, app: ApplicationSpec, rng: np.random.Generator,
                  horizon_s: float) -> list[float]:
    proc = ArrivalProcess(profile, app, rng, horizon_s)
    out = []
    t = proc.next_arrival(0.0)
    while t is not None:
        out.append(t)
        t = proc.next_arrival(t)
    return out


class Outcome(str, Enum):
    SUCCESS = "success"
    SLO_MISS = "slo_miss"
    REJECTED = "rejected"


class Task:
    __slots__ = (
        "ident", "device", "app", "app_index", "length_mi", "request_mb", "response_mb",
        "created_at", "deadline", "broker_resolved", "request_arrived", "execution_started",
        "execution_finished", "response_delivered", "outcome", "instance", "host",
    )

    TRACE_FIELDS = ("created_at", "broker_resolved", "request_arrived", "execution_started",
                    "execution_finished", "response_delivered")

    def __init__(self, ident: int, device: int, app: ApplicationSpec, app_index: int, now: float):
        self.ident = ident
        self.device = device
        self.app = app
        self.app_index = app_index
        self.length_mi = app.task_length_mi
        self.request_mb = app.request_kb / 1000.0
        self.response_mb = app.response_kb / 1000.0
        self.created_at = now
        self.deadline = now + app.max_latency_s
        self.broker_resolved = None
        self.request_arrived = None
        self.execution_started = None
        self.execution_finished = None
        self.response_delivered = None
        self.outcome: Outcome | None = None
        self.instance = None
        self.host = None

    @property
    def submitted(self) -> float:
        return self.created_at

    @property
    def latency_s(self) -> float | None:
        if self.response_delivered is None:
            return None
        return self.response_delivered - self.created_at

    def trace(self) -> list[float | None]:
        return [getattr(self, f) for f in self.TRACE_FIELDS]

    def __repr__(self):
        return f"Task({self.ident}, dev={self.device}, app={self.app.name}, outcome={self.outcome})"


@dataclass(frozen=True)
class ContainerRequest:
    spec: ContainerSpec
    subscribers: tuple[int, ...]  # device numbers
    private_for: int | None = None


def emit_container_requests(apps: list[ApplicationSpec], subscribers: dict[str, list[int]]) -> list[ContainerRequest]:
    """Operator deployment requests in application order.

    Shared apps get ``replica_count`` instances serving every subscriber;
    private apps get one instance per subscriber.
    """
    out: list[ContainerRequest] = []
    for app in apps:
        subs = tuple(sorted(subscribers.get(app.name, ())))
        if app.container.shared:
            out.extend(ContainerRequest(app.container, subs) for _ in range(app.container.replica_count))
        else:
            out.extend(ContainerRequest(app.container, (d,), private_for=d) for d in subs)
    return out


# Single-application presets; arrival pattern choices are ours.
_PRESET_APPS = {
    "S1": dict(name="smart_city", user_count=128, task_rate_per_min=2, max_latency_s=0.5,
               task_length_mi=500, request_kb=1, response_kb=10, pattern={"kind": "periodic"}),
    "S2": dict(name="e_health", user_count=10, task_rate_per_min=60, max_latency_s=0.05,
               task_length_mi=1000, request_kb=10, response_kb=10, pattern={"kind": "periodic"}),
    "S3": dict(name="smart_building", user_count=20, task_rate_per_min=60, max_latency_s=0.2,
               task_length_mi=5000, request_kb=750, response_kb=500, pattern={"kind": "periodic"}),
    "S4": dict(name="sports_streaming", user_count=60, task_rate_per_min=20, max_latency_s=0.5,
               task_length_mi=5000, request_kb=750, response_kb=500,
               pattern={"kind": "bursty", "burst_size": 5, "burst_interval_s": 15.0}),
    "S5": dict(name="video_gaming", user_count=80, task_rate_per_min=180, max_latency_s=0.05,
               task_length_mi=100, request_kb=10, response_kb=10, pattern={"kind": "random"}),
}

# per-core MIPS of the five CPU classes swept by default in capacity runs
DEFAULT_CPU_CLASSES_MIPS = (15_000.0, 30_000.0, 50_000.0, 75_000.0, 95_000.0)

_CAPACITY_TOPOLOGY = {
    "olts": 1,
    "vms_per_olt": 4,
    "olt": {"cores": 8, "mips_per_core": DEFAULT_CPU_CLASSES_MIPS[0]},
    "vm": {"cores": 2, "mips_per_core": DEFAULT_CPU_CLASSES_MIPS[0]},
    "ont": {"cores": 4, "mips_per_core": 12_000.0},
}

# metro aggregation between OLTs and the cloud; with a 20 ms WAN every
# cross-OLT task of a 50 ms application misses its deadline
METRO_WAN_LATENCY_S = 0.002

_POLICY_TOPOLOGY = {
    "olts": 3,
    "vms_per_olt": 7,
    "olt": {"cores": 14, "mips_per_core": 95_000.0},
    "vm": {"cores": 2, "mips_per_core": 95_000.0},
    "ont": {"cores": 4, "mips_per_core": 12_000.0},
    "links": {"wan": {"latency_s": METRO_WAN_LATENCY_S}},
}

PRESET_NAMES = ("S1", "S2", "S3", "S4", "S5", "mixed")


def preset_application(key: str) -> dict:
    return copy.deepcopy(_PRESET_APPS[key])


def build_preset(name: str) -> dict:
    """Config fragment (plain mapping, ScenarioConfig schema) for a preset."""
    key = name.strip()
    if key.lower() == "mixed":
        apps = [preset_application(k) for k in ("S1", "S2", "S3", "S4", "S5")]
        for app in apps:
            app["container"] = {"replica_count": 3}
        return {
            "name": "mixed",
            "topology": copy.deepcopy(_POLICY_TOPOLOGY),
            "applications": apps,
            "policy": {"placement": "multi_objective:standard", "offloading": "best_delay:dynamic"},
        }
    key = key.upper()
    if key not in _PRESET_APPS:
        raise KeyError(f"unknown preset {name!r}; expected one of {', '.join(PRESET_NAMES)}")
    app = preset_application(key)
    app["container"] = {"replica_count": 4}
    return {
        "name": key,
        "topology": copy.deepcopy(_CAPACITY_TOPOLOGY),
        "applications": [app],
        "policy": {"placement": "trade_off:standard", "offloading": "round_robin:dynamic"},
    }

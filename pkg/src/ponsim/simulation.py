"""Wires topology, network, virtualization, orchestration and workload into one run."""

from __future__ import annotations

import math
import resource
import time
from dataclasses import dataclass

from .config import ScenarioConfig
from .engine import Engine, EventKind, RandomStreams
from .metrics import (
    OUTCOME_IN_FLIGHT, OUTCOME_REJECTED, OUTCOME_SLO_MISS, OUTCOME_SUCCESS, MetricsLedger,
    node_energy, normalized_latency, tsr,
)
from .network import Network, TransferKind
from .orchestration import Broker, Placer, offload
from .topology import NodeKind, build, device_ids
from .virtualization import ContainerInstance, PlacementRejected, Virtualization
from .workload import (
    ArrivalProcess, Outcome, PatternKind, Task, UserProfile, emit_container_requests,
)


@dataclass
class RunResult:
    scenario: str
    seed: int
    deployment: str
    placement: str
    offloading: str
    ledger: MetricsLedger
    submitted: int
    completed: int
    failed: int
    in_flight: int
    suppressed: int
    placement_failures: int
    events: int
    wall_clock_s: float
    peak_memory_mb: float

    @property
    def tsr(self) -> float | None:
        return tsr(self.ledger)

    @property
    def l_norm(self) -> float | None:
        return normalized_latency(self.ledger)


def auto_profiles(cfg: ScenarioConfig, streams: RandomStreams) -> list[UserProfile]:
    """One profile per user, devices numbered app by app.

    Periodic and bursty users get a start offset drawn uniformly within one
    period so that users are not phase-locked.
    """
    profiles = []
    k = 0
    for app in cfg.applications:
        for _ in range(app.user_count):
            kind = app.pattern.kind
            if kind is PatternKind.PERIODIC:
                start = float(streams.get(f"phase:{k}").uniform(0.0, app.period_s()))
            elif kind is PatternKind.BURSTY:
                start = float(streams.get(f"phase:{k}").uniform(0.0, app.burst_interval_s()))
            else:
                start = 0.0
            profiles.append(UserProfile(device=k, app=app.name, start_time_s=start))
            k += 1
    return profiles


class Simulation:
    """One seeded run of a scenario.

    Containers are placed at t=0 before any task exists; a user starts
    issuing tasks once a placement notification for its application has
    reached it through its OLT's broker.
    """

    def __init__(self, cfg: ScenarioConfig, seed: int | None = None, keep_tasks: bool = False,
                 record_trace: bool = False, check_invariants: bool = False):
        self._created = time.perf_counter()
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.streams = RandomStreams(self.seed)
        self.engine = Engine(record_trace=record_trace)
        self.profiles = cfg.profiles if cfg.profiles is not None else auto_profiles(cfg, self.streams)
        n_devices = 1 + max((p.device for p in self.profiles), default=-1)
        self.topology = build(cfg.topology, n_devices)
        self.device_node = device_ids(self.topology)
        self.network = Network(self.engine, self.topology, check_capacity=check_invariants)
        self.virt = Virtualization(self.engine, self.topology, self.network, cfg.queue_cap,
                                   on_running=self._on_instance_running,
                                   on_removed=self._on_instance_removed)
        self.states = self.virt.states
        self.brokers = {b: Broker(b) for b in self.topology.of_kind(NodeKind.BROKER)}
        self.apps = {a.name: a for a in cfg.applications}
        self.app_index = {a.name: i for i, a in enumerate(cfg.applications)}
        self.subscribers: dict[str, list[int]] = {a.name: [] for a in cfg.applications}
        for p in self.profiles:
            self.subscribers[p.app].append(self.device_node[p.device])
        self.placer = Placer(self.topology, self.states, cfg.policy, cfg.deployment_model, self.subscribers)
        self.ledger = MetricsLedger([a.name for a in cfg.applications],
                                    [a.max_latency_s for a in cfg.applications], keep_tasks=keep_tasks)
        self.check_invariants = check_invariants
        self.invariant_violations: list[str] = []
        self._control_mb = cfg.policy.control_message_kb / 1000.0
        self._lookup_s = cfg.policy.broker_lookup_latency_s
        self._enabled: set[tuple[int, str]] = set()
        self._private: dict[int, ContainerInstance] = {}  # device node -> bound instance
        self._processes: list[ArrivalProcess] = []
        self._in_flight: dict[int, Task] = {}
        self._next_task = 0
        self.suppressed = 0
        self.submitted = 0
        self.placement_failures = 0
        self._latency = self.topology.path_latency
        self._broker_of = {d: self.topology.broker_of(d) for d in self.device_node}
        eng = self.engine
        eng.on(EventKind.TASK_ARRIVAL, self._on_arrival)
        eng.on(EventKind.BROKER_LOOKUP, self._on_lookup)

    # --- setup --------------------------------------------------------------

    def deploy(self) -> None:
        requests = emit_container_requests(
            self.cfg.applications,
            {app: [self.device_node[p.device] for p in self.profiles if p.app == app] for app in self.apps})
        for req in requests:
            app = self.apps[req.spec.app_id]
            node = self.placer.place(req.spec, app.task_length_mi, self.engine.now)
            if node is None:
                self.placement_failures += 1
                continue
            inst = self.virt.new_instance(req.spec, req.subscribers)
            try:
                self.virt.admit_container(inst, node)
            except PlacementRejected:
                self.placement_failures += 1
                continue
            if req.private_for is not None:
                self._private[req.private_for] = inst

    def _start_arrivals(self) -> None:
        horizon = self.cfg.duration_s
        for i, prof in enumerate(self.profiles):
            rng = self.streams.get(f"user:{prof.device}:{prof.app}")
            proc = ArrivalProcess(prof, self.apps[prof.app], rng, horizon)
            self._processes.append(proc)
            t = proc.next_arrival(self.engine.now)
            if t is not None:
                self.engine.schedule(t, EventKind.TASK_ARRIVAL, i)

    # --- placement notifications -------------------------------------------

    def _on_instance_running(self, inst: ContainerInstance) -> None:
        cloud = self.topology.cloud
        for b in self.brokers:
            self.network.start_transfer(cloud, b, self._control_mb, TransferKind.CONTROL,
                                        self._notify_broker, (b, inst))

    def _notify_broker(self, tr) -> None:
        b, inst = tr.context
        if inst.pending_removal or inst.host is None:
            return
        self.brokers[b].register(inst)
        for d in sorted(inst.subscribers):
            if self._broker_of[d] == b:
                self.network.start_transfer(b, d, self._control_mb, TransferKind.CONTROL,
                                            self._notify_device, (d, inst))

    def _notify_device(self, tr) -> None:
        d, inst = tr.context
        if not inst.spec.shared and self._private.get(d) is not inst:
            return
        self._enabled.add((d, inst.app_id))

    def _on_instance_removed(self, inst: ContainerInstance) -> None:
        for broker in self.brokers.values():
            broker.unregister(inst)

    def remove_container(self, inst: ContainerInstance) -> bool:
        for broker in self.brokers.values():
            broker.unregister(inst)
        return self.virt.remove_container(inst)

    # --- task lifecycle -----------------------------------------------------

    def _on_arrival(self, index: int) -> None:
        proc = self._processes[index]
        prof = proc.profile
        now = self.engine.now
        device = self.device_node[prof.device]
        if (device, prof.app) in self._enabled:
            task = Task(self._next_task, device, self.apps[prof.app], self.app_index[prof.app], now)
            self._next_task += 1
            self.submitted += 1
            self._in_flight[task.ident] = task
            self.network.start_transfer(device, self._broker_of[device], self._control_mb,
                                        TransferKind.CONTROL, self._at_broker, task)
        else:
            self.suppressed += 1
        t = proc.next_arrival(now)
        if t is not None:
            self.engine.schedule(t, EventKind.TASK_ARRIVAL, index)

    def _at_broker(self, tr) -> None:
        self.engine.schedule(self.engine.now + self._lookup_s, EventKind.BROKER_LOOKUP, tr.context)

    def _on_lookup(self, task: Task) -> None:
        broker_node = self._broker_of[task.device]
        inst = offload(task.device, task.app.name, task.length_mi, self.brokers[broker_node],
                       self.cfg.policy, self.states, self._latency, self._private.get(task.device))
        if inst is None:
            self._finish(task, OUTCOME_REJECTED)
            return
        inst.assigned_task_count += 1
        task.instance = inst
        task.host = inst.host
        self.network.start_transfer(broker_node, task.device, self._control_mb, TransferKind.CONTROL,
                                    self._resolved, task)

    def _resolved(self, tr) -> None:
        task = tr.context
        task.broker_resolved = self.engine.now
        self.network.start_transfer(task.device, task.host, task.request_mb, TransferKind.TASK_REQUEST,
                                    self._request_arrived, task)

    def _request_arrived(self, tr) -> None:
        task = tr.context
        task.request_arrived = self.engine.now
        if not self.virt.execute(task, task.instance, self._executed):
            task.instance.assigned_task_count -= 1
            self._finish(task, OUTCOME_REJECTED)

    def _executed(self, task: Task, inst: ContainerInstance) -> None:
        task.execution_finished = self.engine.now
        self.network.start_transfer(task.host, task.device, task.response_mb, TransferKind.TASK_RESPONSE,
                                    self._delivered, task)

    def _delivered(self, tr) -> None:
        task = tr.context
        task.response_delivered = self.engine.now
        latency = task.response_delivered - task.created_at
        ok = latency <= task.app.max_latency_s
        self._finish(task, OUTCOME_SUCCESS if ok else OUTCOME_SLO_MISS, latency)

    def _finish(self, task: Task, outcome: int, latency: float = math.nan) -> None:
        task.outcome = (Outcome.SUCCESS, Outcome.SLO_MISS, Outcome.REJECTED, None)[outcome]
        del self._in_flight[task.ident]
        self.ledger.record(task.app_index, outcome, task.created_at, latency, task)

    # --- run ----------------------------------------------------------------

    def run(self) -> RunResult:
        """Place containers, generate tasks and process events up to the horizon.

        Wall-clock time covers topology build as well as the event loop.
        """
        self.deploy()
        self._start_arrivals()
        if self.check_invariants and not self.virt.check_conservation():
            self.invariant_violations.append("resource conservation after deployment")
        self.engine.run(self.cfg.duration_s)
        in_flight = len(self._in_flight)
        for task in sorted(self._in_flight.values(), key=lambda t: t.ident):
            self.ledger.record(task.app_index, OUTCOME_IN_FLIGHT, task.created_at, math.nan, task)
        self._in_flight.clear()
        self._account_energy()
        if self.check_invariants:
            self._check_final()
        wall = time.perf_counter() - self._created
        peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
        self.ledger.wall_clock_s = wall
        self.ledger.peak_memory_mb = peak
        self.ledger.horizon_s = self.cfg.duration_s
        counts = self.ledger.counts()
        return RunResult(
            scenario=self.cfg.name, seed=self.seed, deployment=self.cfg.deployment_model.value,
            placement=self.cfg.policy.placement, offloading=self.cfg.policy.offloading,
            ledger=self.ledger, submitted=self.submitted,
            completed=counts["success"] + counts["slo_miss"], failed=counts["rejected"],
            in_flight=in_flight, suppressed=self.suppressed,
            placement_failures=self.placement_failures, events=self.engine.processed,
            wall_clock_s=wall, peak_memory_mb=peak,
        )

    def _account_energy(self) -> None:
        power = self.cfg.power
        for node, state in self.states.items():
            p = power.get(state.kind.value)
            if p is None or (p.active_w == 0 and p.idle_w == 0):
                continue
            self.ledger.node_energy_j[node] = node_energy(
                state.busy_core_seconds, p.active_w, p.idle_w, state.cores, self.cfg.duration_s)
        for link, joules in enumerate(self.network.link_energy_j):
            if joules:
                self.ledger.link_energy_j[link] = joules

    def _check_final(self) -> None:
        v = self.invariant_violations
        if self.network.capacity_violations:
            v.append(f"{self.network.capacity_violations} link capacity violations")
        if not self.virt.check_conservation():
            v.append("resource conservation at horizon")
        if len(self.ledger) != self.submitted:
            v.append("ledger size differs from submitted count")


def run_scenario(cfg: ScenarioConfig, seed: int | None = None, **kwargs) -> RunResult:
    return Simulation(cfg, seed, **kwargs).run()

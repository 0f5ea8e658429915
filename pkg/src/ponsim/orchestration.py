"""Two-plane orchestration: cloud-level container placement and broker-level offloading.

Placement picks a node for each long-lived container; offloading picks a
running replica for each task. Every selection filters infeasible nodes
first, scores the rest and breaks ties down to the lowest identifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

from .topology import NodeKind, Topology
from .virtualization import ContainerInstance, ContainerSpec, ContainerState, NodeState

# relative tolerance used when comparing mean latencies for ties
LATENCY_TIE_RTOL = 1e-9
# scores this close are mathematically equal values that rounded differently
SCORE_TIE_RTOL = 1e-12


class PlacementAlgorithm(str, Enum):
    ROUND_ROBIN = "round_robin"
    CPU_GREEDY = "cpu_greedy"
    TRADE_OFF = "trade_off"
    MULTI_OBJECTIVE = "multi_objective"


class PlacementVariant(str, Enum):
    STANDARD = "standard"
    LATENCY = "latency"
    RATE = "rate"


class OffloadAlgorithm(str, Enum):
    ROUND_ROBIN = "round_robin"
    BEST_LATENCY = "best_latency"
    BEST_DELAY = "best_delay"


class OffloadMode(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


class Deployment(str, Enum):
    EDGE_ONLY = "edge_only"
    FAR_EDGE_PLUS_EDGE = "far_edge_plus_edge"


PLACEMENTS = tuple(f"{a.value}:{v.value}" for a in PlacementAlgorithm for v in PlacementVariant)
OFFLOADINGS = tuple(f"{a.value}:{m.value}" for a in OffloadAlgorithm for m in OffloadMode)


def parse_placement(text: str) -> tuple[PlacementAlgorithm, PlacementVariant]:
    algo, _, variant = text.partition(":")
    return PlacementAlgorithm(algo), PlacementVariant(variant or "standard")


def parse_offloading(text: str) -> tuple[OffloadAlgorithm, OffloadMode]:
    algo, _, mode = text.partition(":")
    return OffloadAlgorithm(algo), OffloadMode(mode or "dynamic")


def default_trade_off_weights() -> dict[str, float]:
    return {"cloud": 2.0, "olt": 1.0, "vm": 1.0, "ont": 0.8}


def default_mo_topology_weights() -> dict[str, float]:
    return {"cloud": 1.0, "olt": 0.25, "vm": 0.25, "ont": 0.0}


def default_mo_resource_weights() -> dict[str, float]:
    return {"ram": 1.0, "storage": 1.0, "cores": 1.0, "mips": 1.0}


@dataclass
class PolicyConfig:
    placement_algorithm: PlacementAlgorithm = PlacementAlgorithm.TRADE_OFF
    placement_variant: PlacementVariant = PlacementVariant.STANDARD
    offload_algorithm: OffloadAlgorithm = OffloadAlgorithm.ROUND_ROBIN
    offload_mode: OffloadMode = OffloadMode.DYNAMIC
    trade_off_weights: dict[str, float] = field(default_factory=default_trade_off_weights)
    mo_topology_weights: dict[str, float] = field(default_factory=default_mo_topology_weights)
    mo_weights: dict[str, float] = field(default_factory=default_mo_resource_weights)
    broker_lookup_latency_s: float = 0.001
    control_message_kb: float = 1.0

    def __post_init__(self):
        for table in (self.trade_off_weights, self.mo_topology_weights, self.mo_weights):
            if any(v < 0 for v in table.values()):
                raise ValueError("policy weights must be non-negative")
        for t in (self.trade_off_weights, self.mo_topology_weights):
            if not t["cloud"] >= max(t["olt"], t["vm"]) >= t["ont"]:
                raise ValueError("topology weights must satisfy cloud >= olt/vm >= ont")

    @property
    def placement(self) -> str:
        return f"{self.placement_algorithm.value}:{self.placement_variant.value}"

    @property
    def offloading(self) -> str:
        return f"{self.offload_algorithm.value}:{self.offload_mode.value}"


# --- scores -------------------------------------------------------------------

def score_cpu_greedy(state: NodeState) -> float:
    """Assigned containers per core; lower is better."""
    return state.container_count / state.cores


def score_trade_off(state: NodeState, task_length_mi: float, weight: float) -> float:
    """Topology-weighted queueing cost ``(2C + 1) * t * S / MIPS``; lower is better."""
    return (2 * state.container_count + 1) * weight * task_length_mi / state.mips_per_core


def _ratio(avail: float, total: float) -> float:
    return avail / total if total > 0 else 0.0


def score_multi_objective(state: NodeState, weights: dict[str, float], topo_weight: float,
                          mips_reference: float, now: float = 0.0) -> float:
    """Weighted availability of RAM, storage, idle cores and per-core MIPS,
    minus the container count and the topology penalty; higher is better.

    The MIPS term is ``MIPS_i / mips_reference`` (the fastest candidate).
    """
    cores_free = state.cores - state.busy_cores(now)
    return (weights["ram"] * _ratio(state.available_ram_mb, state.ram_total_mb)
            + weights["storage"] * _ratio(state.available_storage_mb, state.storage_total_mb)
            + weights["cores"] * _ratio(cores_free, state.cores)
            + weights["mips"] * _ratio(state.mips_per_core, mips_reference)
            - state.container_count - topo_weight)


def score_best_delay(task_length_mi: float, state: NodeState, latency_s: float) -> float:
    """Predicted delay: network latency plus queued and new work spread over the cores."""
    mips = state.mips_per_core
    return latency_s + (state.queued_work_mi / mips + task_length_mi / mips) / state.cores


# --- placement ----------------------------------------------------------------

def _within(score: float, best: float, magnitude: float = 0.0) -> bool:
    """True when ``score`` equals ``best`` up to floating-point rounding.

    ``magnitude`` is the size of the terms the score was summed from, for
    scores that can cancel to near zero.
    """
    return score <= best + SCORE_TIE_RTOL * max(abs(best), abs(score), magnitude)


def _select_min(nodes: Sequence[int], score: Callable[[int], float],
                tie: Callable[[int], tuple] = lambda n: (), magnitude: float = 0.0) -> int:
    """Lowest score; scores equal up to rounding are broken by ``tie`` and then by node id."""
    scores = {n: score(n) for n in nodes}
    best = min(scores.values())
    return min((n for n in nodes if _within(scores[n], best, magnitude)), key=lambda n: (*tie(n), n))


def select_node(algorithm: PlacementAlgorithm, candidates: Sequence[int], states: dict[int, NodeState],
                topology: Topology, policy: PolicyConfig, task_length_mi: float,
                now: float = 0.0, cursor: int | None = None) -> int:
    """Apply one placement algorithm to an already-feasible candidate list.

    ``cursor`` is only used by round robin and must index ``candidates``.
    """
    if not candidates:
        raise ValueError("no candidates")
    if algorithm is PlacementAlgorithm.ROUND_ROBIN:
        return candidates[(cursor or 0) % len(candidates)]
    if algorithm is PlacementAlgorithm.CPU_GREEDY:
        return _select_min(candidates, lambda n: score_cpu_greedy(states[n]), lambda n: (-states[n].cores,))
    if algorithm is PlacementAlgorithm.TRADE_OFF:
        tw = policy.trade_off_weights
        return _select_min(candidates, lambda n: score_trade_off(
            states[n], task_length_mi, tw[topology.kind(n).value]))
    mips_ref = max(states[n].mips_per_core for n in candidates)
    mw = policy.mo_topology_weights
    magnitude = sum(policy.mo_weights.values()) + max(mw.values())
    return _select_min(candidates, lambda n: -score_multi_objective(
        states[n], policy.mo_weights, mw[topology.kind(n).value], mips_ref, now), magnitude=magnitude)


class Placer:
    """Cloud-level container orchestrator.

    Standard placement searches every candidate node of the deployment
    model. The latency and rate variants first choose an OLT host and then
    run the base algorithm over that OLT's VMs (plus its ONTs when the far
    edge is enabled).
    """

    def __init__(self, topology: Topology, states: dict[int, NodeState], policy: PolicyConfig,
                 deployment: Deployment, subscribers: dict[str, Sequence[int]]):
        self.topology = topology
        self.states = states
        self.policy = policy
        self.deployment = Deployment(deployment)
        self.subscribers = subscribers  # app -> device node ids
        self._candidates = self._eligible(topology.of_kind(NodeKind.VM) + topology.of_kind(NodeKind.ONT))
        self._scopes = {olt: self._eligible(self._scope_nodes(olt)) for olt in topology.of_kind(NodeKind.OLT)}
        self._cursor = 0
        self._host_cursor: dict[int, int] = {}
        self._mean_latency: dict[tuple[int, str], float] = {}
        self._devices_under = {olt: len(topology.devices_under(olt)) for olt in self._scopes}
        self.failures = 0

    def _eligible(self, nodes: Iterable[int]) -> list[int]:
        kinds = {NodeKind.VM} if self.deployment is Deployment.EDGE_ONLY else {NodeKind.VM, NodeKind.ONT}
        return sorted(n for n in nodes if self.topology.kind(n) in kinds and n in self.states)

    def _scope_nodes(self, olt: int) -> list[int]:
        return [c for c in self.topology.children(olt)
                if self.topology.kind(c) in (NodeKind.VM, NodeKind.ONT)]

    @property
    def candidates(self) -> list[int]:
        return list(self._candidates)

    def hosts(self) -> list[int]:
        return sorted(self._scopes)

    def scope(self, host: int) -> list[int]:
        return list(self._scopes[host])

    def mean_latency_to_subscribers(self, node: int, app: str) -> float:
        key = (node, app)
        value = self._mean_latency.get(key)
        if value is None:
            subs = self.subscribers.get(app, ())
            if subs:
                lat = self.topology.path_latency
                value = sum(lat(node, d) for d in subs) / len(subs)
            else:
                value = 0.0
            self._mean_latency[key] = value
        return value

    def copies_in_scope(self, host: int, app: str) -> list[int]:
        """Nodes (with multiplicity) in the host's scope running a copy of ``app``."""
        out = []
        for n in self._scopes[host]:
            for inst in self.states[n].residents.values():
                if inst.spec.app_id == app and inst.state is not ContainerState.REMOVED:
                    out.append(n)
        return out

    def select_host_latency(self, hosts: Sequence[int], app: str) -> int:
        means = {}
        copies = {}
        for h in hosts:
            nodes = self.copies_in_scope(h, app)
            copies[h] = len(nodes)
            if nodes:
                means[h] = sum(self.mean_latency_to_subscribers(n, app) for n in nodes) / len(nodes)
            else:
                means[h] = self.mean_latency_to_subscribers(h, app)
        best = min(means.values())
        tied = [h for h in hosts if means[h] <= best + abs(best) * LATENCY_TIE_RTOL]
        return min(tied, key=lambda h: (copies[h], h))

    def select_host_rate(self, hosts: Sequence[int], app: str) -> int:
        def key(h):
            copies = len(self.copies_in_scope(h, app))
            devices = self._devices_under[h]
            if devices == 0:
                return (1, 0.0, copies, h)
            return (0, copies / devices, copies, h)
        return min(hosts, key=key)

    def place(self, spec: ContainerSpec, task_length_mi: float, now: float = 0.0) -> int | None:
        """Choose a node for ``spec``; None when no feasible node exists."""
        states = self.states
        variant = self.policy.placement_variant
        algo = self.policy.placement_algorithm
        if variant is PlacementVariant.STANDARD:
            nodes = self._candidates
            feasible = [n for n in nodes if states[n].fits(spec)]
            if not feasible:
                self.failures += 1
                return None
            if algo is PlacementAlgorithm.ROUND_ROBIN:
                return self._round_robin(nodes, spec, "global")
            return select_node(algo, feasible, states, self.topology, self.policy, task_length_mi, now)
        hosts = [h for h in self.hosts() if any(states[n].fits(spec) for n in self._scopes[h])]
        if not hosts:
            self.failures += 1
            return None
        if variant is PlacementVariant.LATENCY:
            host = self.select_host_latency(hosts, spec.app_id)
        else:
            host = self.select_host_rate(hosts, spec.app_id)
        if algo is PlacementAlgorithm.ROUND_ROBIN:
            return self._round_robin(self._scopes[host], spec, host)
        feasible = [n for n in self._scopes[host] if states[n].fits(spec)]
        return select_node(algo, feasible, states, self.topology, self.policy, task_length_mi, now)

    def _round_robin(self, nodes: Sequence[int], spec: ContainerSpec, key) -> int:
        # cyclic cursor over the stable node order, skipping infeasible nodes
        if key == "global":
            start = self._cursor
        else:
            start = self._host_cursor.get(key, 0)
        n = len(nodes)
        for step in range(n):
            idx = (start + step) % n
            if self.states[nodes[idx]].fits(spec):
                if key == "global":
                    self._cursor = idx + 1
                else:
                    self._host_cursor[key] = idx + 1
                return nodes[idx]
        raise AssertionError("caller guarantees a feasible node")


# --- offloading ---------------------------------------------------------------

class Broker:
    """DNS-style broker co-located with an OLT.

    Holds the replica directory (running instances only), per-device static
    bindings and per-application round-robin cursors.
    """

    def __init__(self, ident: int):
        self.ident = ident
        self.directory: dict[str, list[ContainerInstance]] = {}
        self.static_bindings: dict[tuple[int, str], ContainerInstance] = {}
        self.rr_cursors: dict[str, int] = {}
        self.decisions = 0

    def register(self, instance: ContainerInstance) -> None:
        entries = self.directory.setdefault(instance.app_id, [])
        if instance not in entries:
            entries.append(instance)
            entries.sort(key=lambda i: i.ident)

    def unregister(self, instance: ContainerInstance) -> None:
        entries = self.directory.get(instance.app_id)
        if entries and instance in entries:
            entries.remove(instance)
        stale = [k for k, v in self.static_bindings.items() if v is instance]
        for k in stale:
            del self.static_bindings[k]

    def knows(self, app: str) -> bool:
        return bool(self.directory.get(app))


def _best_latency(device: int, instances: Sequence[ContainerInstance], latency: Callable[[int, int], float]) -> ContainerInstance:
    lats = [latency(device, inst.host) for inst in instances]
    best = min(lats)
    tied = [inst for inst, l in zip(instances, lats) if l <= best + abs(best) * LATENCY_TIE_RTOL]
    return min(tied, key=lambda i: (i.assigned_task_count, i.ident))


def _best_delay(device: int, task_length_mi: float, instances: Sequence[ContainerInstance],
                states: dict[int, NodeState], latency: Callable[[int, int], float]) -> ContainerInstance:
    delays = [score_best_delay(task_length_mi, states[i.host], latency(device, i.host)) for i in instances]
    best = min(delays)
    return min((i for i, d in zip(instances, delays) if _within(d, best)), key=lambda i: i.ident)


def offload(device: int, app: str, task_length_mi: float, broker: Broker, policy: PolicyConfig,
            states: dict[int, NodeState], latency: Callable[[int, int], float],
            private_instance: ContainerInstance | None = None) -> ContainerInstance | None:
    """Pick the replica serving a task from ``device``; None means rejected."""
    instances = broker.directory.get(app)
    if not instances:
        return None
    if private_instance is not None:
        return private_instance if private_instance in instances else None
    static = policy.offload_mode is OffloadMode.STATIC
    if static:
        bound = broker.static_bindings.get((device, app))
        if bound is not None and bound.state is ContainerState.RUNNING and not bound.pending_removal:
            return bound
    broker.decisions += 1
    algo = policy.offload_algorithm
    if algo is OffloadAlgorithm.ROUND_ROBIN:
        cursor = broker.rr_cursors.get(app, 0)
        choice = instances[cursor % len(instances)]
        broker.rr_cursors[app] = cursor + 1
    elif algo is OffloadAlgorithm.BEST_LATENCY:
        choice = _best_latency(device, instances, latency)
    else:
        choice = _best_delay(device, task_length_mi, instances, states, latency)
    if static:
        broker.static_bindings[(device, app)] = choice
    return choice

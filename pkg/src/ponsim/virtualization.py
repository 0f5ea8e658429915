"""VM/container lifecycles, per-node resource accounting and per-core execution queues."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .engine import Engine, EventKind
from .network import Network, TransferKind
from .topology import NodeKind, Topology


class PlacementRejected(RuntimeError):
    """The node cannot hold the container's RAM/storage footprint."""


class ContainerState(str, Enum):
    TRANSFERRING = "transferring"
    RUNNING = "running"
    REMOVED = "removed"


@dataclass(frozen=True)
class ContainerSpec:
    app_id: str
    ram_mb: float = 512.0
    storage_mb: float = 1024.0
    image_size_mb: float = 200.0
    shared: bool = True
    replica_count: int = 1

    def __post_init__(self):
        if self.ram_mb <= 0 or self.storage_mb <= 0 or self.image_size_mb <= 0:
            raise ValueError("container footprints must be positive")
        if self.replica_count < 1:
            raise ValueError("replica_count must be positive")


@dataclass(eq=False)
class ContainerInstance:
    ident: int
    spec: ContainerSpec
    host: int | None = None
    state: ContainerState = ContainerState.TRANSFERRING
    assigned_task_count: int = 0
    subscribers: set[int] = field(default_factory=set)
    pending_removal: bool = False
    deployed_at: float | None = None

    @property
    def app_id(self) -> str:
        return self.spec.app_id


class NodeState:
    """Mutable resource view of one compute node."""

    __slots__ = (
        "node", "kind", "cores", "mips_per_core", "ram_total_mb", "storage_total_mb",
        "available_ram_mb", "available_storage_mb", "container_count", "core_busy_until",
        "queued_work_mi", "queued_tasks", "busy_core_seconds", "residents",
    )

    def __init__(self, node: int, kind: NodeKind, cores: int, mips_per_core: float,
                 ram_mb: float, storage_mb: float):
        self.node = node
        self.kind = kind
        self.cores = cores
        self.mips_per_core = mips_per_core
        self.ram_total_mb = ram_mb
        self.storage_total_mb = storage_mb
        self.available_ram_mb = ram_mb
        self.available_storage_mb = storage_mb
        self.container_count = 0
        self.core_busy_until = [0.0] * cores
        self.queued_work_mi = 0.0  # Σ task length of tasks queued or executing here
        self.queued_tasks = 0
        self.busy_core_seconds = 0.0
        self.residents: dict[int, ContainerInstance] = {}

    def fits(self, spec: ContainerSpec) -> bool:
        return self.available_ram_mb >= spec.ram_mb and self.available_storage_mb >= spec.storage_mb

    def busy_cores(self, now: float) -> int:
        return sum(1 for t in self.core_busy_until if t > now)

    def snapshot(self) -> tuple:
        return (self.available_ram_mb, self.available_storage_mb, self.container_count,
                tuple(sorted(self.residents)))

    def __repr__(self):
        return (f"NodeState({self.node}, {self.kind.value}, C={self.container_count}, "
                f"ram={self.available_ram_mb}/{self.ram_total_mb})")


class Virtualization:
    """Hosts containers on VMs/ONTs and runs tasks on their cores.

    ``on_running`` fires when a container image finishes its transfer and
    ``on_removed`` when a container has actually been torn down.
    """

    def __init__(self, engine: Engine, topology: Topology, network: Network,
                 queue_cap: int | None = None,
                 on_running: Callable[[ContainerInstance], None] | None = None,
                 on_removed: Callable[[ContainerInstance], None] | None = None):
        self.engine = engine
        self.topology = topology
        self.network = network
        self.queue_cap = queue_cap
        self.on_running = on_running
        self.on_removed = on_removed
        self.states: dict[int, NodeState] = {}
        for node in topology.nodes:
            if node.kind in (NodeKind.VM, NodeKind.ONT):
                c = node.compute
                self.states[node.ident] = NodeState(node.ident, node.kind, c.cores, c.mips_per_core,
                                                    c.ram_mb, c.storage_mb)
        self._hyp_overhead = {
            vm: 2.0 * topology.hypervisor_link(vm).latency_s for vm in topology.of_kind(NodeKind.VM)
        }
        self.instances: dict[int, ContainerInstance] = {}
        self._next_instance = 0
        engine.on(EventKind.EXECUTION_COMPLETE, self._on_execution_complete)
        engine.on(EventKind.CONTAINER_DEPLOYED, self._on_deployed)

    def new_instance(self, spec: ContainerSpec, subscribers=()) -> ContainerInstance:
        inst = ContainerInstance(self._next_instance, spec, subscribers=set(subscribers))
        self._next_instance += 1
        return inst

    def hypervisor_overhead(self, node: int) -> float:
        return self._hyp_overhead.get(node, 0.0)

    def admit_container(self, instance: ContainerInstance, node: int):
        """Debit resources now and ship the image from the cloud; the
        instance turns running when the image transfer completes."""
        state = self.states.get(node)
        if state is None:
            raise PlacementRejected(f"node {node} cannot host containers")
        spec = instance.spec
        if not state.fits(spec):
            raise PlacementRejected(f"node {node} lacks resources for {spec.app_id}")
        state.available_ram_mb -= spec.ram_mb
        state.available_storage_mb -= spec.storage_mb
        state.container_count += 1
        state.residents[instance.ident] = instance
        instance.host = node
        instance.state = ContainerState.TRANSFERRING
        self.instances[instance.ident] = instance
        return self.network.start_transfer(
            self.topology.cloud, node, spec.image_size_mb, TransferKind.CONTAINER_IMAGE,
            self._image_arrived, instance)

    def _image_arrived(self, transfer) -> None:
        self.engine.schedule(self.engine.now, EventKind.CONTAINER_DEPLOYED, transfer.context)

    def _on_deployed(self, instance: ContainerInstance) -> None:
        if instance.state is not ContainerState.TRANSFERRING:
            return
        instance.state = ContainerState.RUNNING
        instance.deployed_at = self.engine.now
        if instance.pending_removal:
            self._finish_removal(instance)
            return
        if self.on_running is not None:
            self.on_running(instance)

    def execute(self, task, instance: ContainerInstance, on_done: Callable) -> bool:
        """Queue ``task`` on the earliest-free core of the instance's host.

        Returns False when the optional per-node queue cap rejects it.
        """
        state = self.states[instance.host]
        if self.queue_cap is not None and state.queued_tasks >= self.queue_cap:
            return False
        now = self.engine.now
        busy = state.core_busy_until
        core = min(range(len(busy)), key=busy.__getitem__)
        start = busy[core] if busy[core] > now else now
        service = task.length_mi / state.mips_per_core + self._hyp_overhead.get(state.node, 0.0)
        finish = start + service
        busy[core] = finish
        state.queued_work_mi += task.length_mi
        state.queued_tasks += 1
        state.busy_core_seconds += service
        task.execution_started = start
        self.engine.schedule(finish, EventKind.EXECUTION_COMPLETE, (task, instance, on_done))
        return True

    def _on_execution_complete(self, payload) -> None:
        task, instance, on_done = payload
        state = self.states[instance.host]
        state.queued_work_mi -= task.length_mi
        if state.queued_tasks == 1:
            state.queued_work_mi = 0.0
        state.queued_tasks -= 1
        instance.assigned_task_count -= 1
        on_done(task, instance)
        if instance.pending_removal and instance.assigned_task_count == 0:
            self._finish_removal(instance)

    def remove_container(self, instance: ContainerInstance) -> bool:
        """Tear down ``instance``; deferred while tasks are still assigned.

        Returns True if the removal happened immediately.
        """
        if instance.state is ContainerState.REMOVED:
            return True
        instance.pending_removal = True
        if instance.state is ContainerState.RUNNING and instance.assigned_task_count == 0:
            self._finish_removal(instance)
            return True
        return False

    def _finish_removal(self, instance: ContainerInstance) -> None:
        state = self.states[instance.host]
        spec = instance.spec
        state.available_ram_mb += spec.ram_mb
        state.available_storage_mb += spec.storage_mb
        state.container_count -= 1
        del state.residents[instance.ident]
        instance.state = ContainerState.REMOVED
        instance.pending_removal = False
        if self.on_removed is not None:
            self.on_removed(instance)

    def check_conservation(self) -> bool:
        for state in self.states.values():
            ram = sum(i.spec.ram_mb for i in state.residents.values())
            sto = sum(i.spec.storage_mb for i in state.residents.values())
            if abs(ram + state.available_ram_mb - state.ram_total_mb) > 1e-6:
                return False
            if abs(sto + state.available_storage_mb - state.storage_total_mb) > 1e-6:
                return False
            if state.container_count != len(state.residents):
                return False
            if not (0 <= state.available_ram_mb <= state.ram_total_mb):
                return False
        return True

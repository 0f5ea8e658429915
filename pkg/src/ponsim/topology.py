"""Hierarchical PON infrastructure: cloud, OLTs, VMs, ONTs, edge devices, brokers.

The topology is a forest rooted at the cloud node. Node identifiers are
integers assigned in depth-first construction order, so "lowest id" is a
stable tie-break everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class TopologyError(ValueError):
    pass


class NodeKind(str, Enum):
    CLOUD = "cloud"
    OLT = "olt"
    VM = "vm"
    ONT = "ont"
    EDGE_DEVICE = "device"
    BROKER = "broker"


class LinkKind(str, Enum):
    FIBER = "fiber"
    LAN = "lan"
    WAN = "wan"
    HYPERVISOR = "hypervisor"
    # zero-latency attachment of a co-located broker to its OLT
    INTERNAL = "internal"


@dataclass(frozen=True)
class ComputeSpec:
    cores: int
    mips_per_core: float
    ram_mb: float
    storage_mb: float

    def __post_init__(self):
        if self.cores <= 0 or self.mips_per_core <= 0:
            raise TopologyError("compute nodes need positive cores and MIPS")
        if self.ram_mb < 0 or self.storage_mb < 0:
            raise TopologyError("RAM and storage must be non-negative")


@dataclass(frozen=True)
class LinkParams:
    latency_s: float
    bandwidth_mbps: float
    energy_per_mb: float = 0.0

    def __post_init__(self):
        if self.latency_s < 0:
            raise TopologyError("link latency must be non-negative")
        if self.bandwidth_mbps <= 0:
            raise TopologyError("link bandwidth must be positive")
        if self.energy_per_mb < 0:
            raise TopologyError("link energy must be non-negative")


def default_link_params() -> dict[str, LinkParams]:
    return {
        "lan": LinkParams(0.0005, 1000.0),
        "fiber": LinkParams(0.001, 1000.0),
        "wan": LinkParams(0.020, 10000.0),
        "hypervisor": LinkParams(0.0002, 10000.0),
        "internal": LinkParams(0.0, 10000.0),
    }


@dataclass
class TopologyConfig:
    olts: int = 1
    vms_per_olt: int = 4
    onts: int | None = None  # None: one ONT per device
    cloud: ComputeSpec = field(default_factory=lambda: ComputeSpec(64, 100_000.0, 262_144, 4_194_304))
    olt: ComputeSpec = field(default_factory=lambda: ComputeSpec(8, 95_000.0, 65_536, 1_048_576))
    vm: ComputeSpec = field(default_factory=lambda: ComputeSpec(2, 95_000.0, 8_192, 131_072))
    ont: ComputeSpec = field(default_factory=lambda: ComputeSpec(4, 12_000.0, 4_096, 32_768))
    links: dict[str, LinkParams] = field(default_factory=default_link_params)


@dataclass(frozen=True)
class Node:
    ident: int
    name: str
    kind: NodeKind
    compute: ComputeSpec | None
    parent: int | None
    olt: int | None  # owning OLT (None for the cloud)


@dataclass(frozen=True)
class Link:
    ident: int
    parent: int
    child: int
    kind: LinkKind
    latency_s: float
    bandwidth_mbps: float
    energy_per_mb: float = 0.0

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.parent, self.child)


class Topology:
    """Immutable PON forest with path and latency queries."""

    def __init__(self, nodes: list[Node], links: list[Link], parent_link: list[int | None]):
        self.nodes = nodes
        self.links = links
        self._parent_link = parent_link
        n = len(nodes)
        self._depth = [0] * n
        self._root_latency = [0.0] * n
        for node in nodes:  # parents precede children
            if node.parent is not None:
                link = links[parent_link[node.ident]]
                self._depth[node.ident] = self._depth[node.parent] + 1
                self._root_latency[node.ident] = self._root_latency[node.parent] + link.latency_s
        self._path_cache: dict[tuple[int, int], tuple[int, ...]] = {}
        self._latency_cache: dict[tuple[int, int], float] = {}
        self.cloud = next(nd.ident for nd in nodes if nd.kind is NodeKind.CLOUD)
        self._by_kind: dict[NodeKind, list[int]] = {k: [] for k in NodeKind}
        for node in nodes:
            self._by_kind[node.kind].append(node.ident)
        self._broker_of_olt = {nodes[b].parent: b for b in self._by_kind[NodeKind.BROKER]}
        self._children: list[list[int]] = [[] for _ in range(n)]
        for node in nodes:
            if node.parent is not None:
                self._children[node.parent].append(node.ident)

    def __len__(self) -> int:
        return len(self.nodes)

    def of_kind(self, kind: NodeKind) -> list[int]:
        return self._by_kind[kind]

    def children(self, node: int) -> list[int]:
        return self._children[node]

    def kind(self, node: int) -> NodeKind:
        return self.nodes[node].kind

    def ont_of(self, device: int) -> int:
        return self.nodes[device].parent

    def olt_of(self, node: int) -> int | None:
        return self.nodes[node].olt

    def broker_of(self, node: int) -> int:
        """Broker serving ``node`` (the broker co-located with its OLT)."""
        olt = self.nodes[node].olt
        if olt is None:
            raise TopologyError(f"node {node} has no OLT and hence no broker")
        return self._broker_of_olt[olt]

    def hypervisor_link(self, vm: int) -> Link:
        link = self.links[self._parent_link[vm]]
        if link.kind is not LinkKind.HYPERVISOR:
            raise TopologyError(f"node {vm} is not attached through a hypervisor link")
        return link

    def devices_under(self, host: int) -> list[int]:
        out: list[int] = []
        stack = [host]
        while stack:
            node = stack.pop()
            if self.nodes[node].kind is NodeKind.EDGE_DEVICE:
                out.append(node)
            stack.extend(self._children[node])
        out.sort()
        return out

    def _lca(self, a: int, b: int) -> int:
        nodes, depth = self.nodes, self._depth
        while depth[a] > depth[b]:
            a = nodes[a].parent
        while depth[b] > depth[a]:
            b = nodes[b].parent
        while a != b:
            a, b = nodes[a].parent, nodes[b].parent
            if a is None or b is None:
                raise TopologyError("nodes are disconnected")
        return a

    def path(self, a: int, b: int) -> tuple[int, ...]:
        """Link ids from ``a`` to ``b`` through their lowest common ancestor."""
        key = (a, b)
        cached = self._path_cache.get(key)
        if cached is not None:
            return cached
        if a == b:
            raise TopologyError("path endpoints must differ")
        if not (0 <= a < len(self.nodes) and 0 <= b < len(self.nodes)):
            raise TopologyError(f"unknown node in ({a}, {b})")
        lca = self._lca(a, b)
        up: list[int] = []
        node = a
        while node != lca:
            up.append(self._parent_link[node])
            node = self.nodes[node].parent
        down: list[int] = []
        node = b
        while node != lca:
            down.append(self._parent_link[node])
            node = self.nodes[node].parent
        route = tuple(up + down[::-1])
        self._path_cache[key] = route
        return route

    def path_latency(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        key = (a, b) if a < b else (b, a)
        cached = self._latency_cache.get(key)
        if cached is None:
            links = self.links
            cached = sum(links[i].latency_s for i in self.path(key[0], key[1]))
            self._latency_cache[key] = cached
        return cached

    def bottleneck_mbps(self, a: int, b: int) -> float:
        return min(self.links[i].bandwidth_mbps for i in self.path(a, b))


def build(cfg: TopologyConfig, n_devices: int, device_onts: list[int | None] | None = None) -> Topology:
    """Build the PON forest.

    ONT ``j`` attaches to OLT ``j mod olts``; device ``k`` attaches to
    ``device_onts[k]`` when given, else to ONT ``k mod onts``.
    """
    if cfg.olts < 0 or cfg.vms_per_olt < 0 or n_devices < 0:
        raise TopologyError("node counts must be non-negative")
    n_onts = n_devices if cfg.onts is None else cfg.onts
    if n_onts < 0:
        raise TopologyError("node counts must be non-negative")
    if n_devices and (n_onts == 0 or cfg.olts == 0):
        raise TopologyError("devices need at least one ONT and one OLT")
    if n_onts and cfg.olts == 0:
        raise TopologyError("ONTs need at least one OLT")
    if device_onts is not None:
        if len(device_onts) != n_devices:
            raise TopologyError("device_onts must list one entry per device")
        for k, j in enumerate(device_onts):
            if j is not None and not 0 <= j < n_onts:
                raise TopologyError(f"device {k} references missing ONT {j}")
    for kind in ("lan", "fiber", "wan", "hypervisor", "internal"):
        if kind not in cfg.links:
            raise TopologyError(f"missing link parameters for {kind!r}")

    nodes: list[Node] = []
    links: list[Link] = []
    parent_link: list[int | None] = []

    def add_node(name, kind, compute, parent, olt, link_kind=None):
        ident = len(nodes)
        nodes.append(Node(ident, name, kind, compute, parent, olt))
        if parent is None:
            parent_link.append(None)
        else:
            p = cfg.links[link_kind.value]
            links.append(Link(len(links), parent, ident, link_kind, p.latency_s, p.bandwidth_mbps, p.energy_per_mb))
            parent_link.append(len(links) - 1)
        return ident

    onts_of_olt: list[list[int]] = [[] for _ in range(cfg.olts)]
    for j in range(n_onts):
        onts_of_olt[j % cfg.olts].append(j)
    devices_of_ont: list[list[int]] = [[] for _ in range(n_onts)]
    for k in range(n_devices):
        j = device_onts[k] if device_onts is not None and device_onts[k] is not None else k % n_onts
        devices_of_ont[j].append(k)

    cloud = add_node("cloud", NodeKind.CLOUD, cfg.cloud, None, None)
    for o in range(cfg.olts):
        olt = add_node(f"olt{o}", NodeKind.OLT, cfg.olt, cloud, None, LinkKind.WAN)
        nodes[olt] = Node(olt, f"olt{o}", NodeKind.OLT, cfg.olt, cloud, olt)
        add_node(f"olt{o}.broker", NodeKind.BROKER, None, olt, olt, LinkKind.INTERNAL)
        for v in range(cfg.vms_per_olt):
            add_node(f"olt{o}.vm{v}", NodeKind.VM, cfg.vm, olt, olt, LinkKind.HYPERVISOR)
        for j in onts_of_olt[o]:
            ont = add_node(f"ont{j}", NodeKind.ONT, cfg.ont, olt, olt, LinkKind.FIBER)
            for k in devices_of_ont[j]:
                add_node(f"dev{k}", NodeKind.EDGE_DEVICE, None, ont, olt, LinkKind.LAN)
    return Topology(nodes, links, parent_link)


def device_ids(topo: Topology) -> list[int]:
    """Device node ids indexed by device number (``dev{k}``)."""
    devs = topo.of_kind(NodeKind.EDGE_DEVICE)
    out = [0] * len(devs)
    for d in devs:
        out[int(topo.nodes[d].name[3:])] = d
    return out

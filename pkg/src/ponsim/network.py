"""Flow-level transfers over topology paths with per-link equal-share bandwidth.

A transfer joins every link on its route, drains at
``min over links of bandwidth / active flows`` and is delivered one path
latency after the last byte leaves (pipeline model). Rates are recomputed
only for flows sharing a link with the flow that started or finished.

Drain events are pushed only when a drain time moves earlier. When it
moves later the pending event is kept; on firing it sees the transfer is
not yet empty and re-arms itself at the current drain time.
"""

from __future__ import annotations

from enum import Enum
from typing import Callable

from .engine import Engine, EventKind
from .topology import Topology

class TransferKind(str, Enum):
    TASK_REQUEST = "task-request"
    TASK_RESPONSE = "task-response"
    CONTAINER_IMAGE = "container-image"
    CONTROL = "control"


class Transfer:
    __slots__ = (
        "ident", "src", "dst", "size_mb", "kind", "links", "latency_s",
        "remaining_mb", "current_rate_mbps", "started_at", "updated_at",
        "drained_at", "eta", "on_done", "context", "_due", "_armed_at",
    )

    def __init__(self, ident, src, dst, size_mb, kind, links, latency_s, now, on_done, context=None):
        self.ident = ident
        self.src = src
        self.dst = dst
        self.size_mb = size_mb
        self.kind = kind
        self.links = links
        self.latency_s = latency_s
        self.remaining_mb = size_mb
        self.current_rate_mbps = 0.0
        self.started_at = now
        self.updated_at = now
        self.drained_at: float | None = None
        self.eta = now + latency_s
        self.on_done = on_done
        self.context = context
        self._due = None  # current drain time
        self._armed_at = None  # time of the earliest pending drain event

    def __repr__(self):
        return (f"Transfer({self.ident}, {self.kind.value}, {self.src}->{self.dst}, "
                f"{self.size_mb} MB, rate={self.current_rate_mbps:.6g})")


class Network:
    def __init__(self, engine: Engine, topology: Topology, check_capacity: bool = False):
        self.engine = engine
        self.topology = topology
        n = len(topology.links)
        self._bw = [link.bandwidth_mbps for link in topology.links]
        self._energy = [link.energy_per_mb for link in topology.links]
        self.link_flows: list[dict[int, Transfer]] = [dict() for _ in range(n)]
        self._share = list(self._bw)  # bandwidth / active flows, per link
        self.link_energy_j = [0.0] * n
        self.active: dict[int, Transfer] = {}
        self._next_id = 0
        self.delivered_mb = 0.0
        self.check_capacity = check_capacity
        self.capacity_violations = 0
        engine.on(EventKind.TRANSFER_DRAINED, self._on_drained)
        engine.on(EventKind.TRANSFER_COMPLETE, self._on_complete)

    def start_transfer(self, src: int, dst: int, size_mb: float, kind: TransferKind,
                       on_done: Callable[[Transfer], None] | None = None, context=None) -> Transfer:
        if size_mb < 0:
            raise ValueError("transfer size must be non-negative")
        engine = self.engine
        now = engine.now
        topo = self.topology
        links = topo.path(src, dst) if src != dst else ()
        latency = topo.path_latency(src, dst)
        tr = Transfer(self._next_id, src, dst, float(size_mb), kind, links, latency, now, on_done, context)
        self._next_id += 1
        if size_mb > 0:
            energy = self._energy
            for link in links:
                if energy[link]:
                    self.link_energy_j[link] += size_mb * energy[link]
        if size_mb <= 0 or not links:
            tr.remaining_mb = 0.0
            tr.drained_at = now
            tr.eta = now + latency
            engine.schedule(tr.eta, EventKind.TRANSFER_COMPLETE, tr)
            return tr
        self.active[tr.ident] = tr
        flows = self.link_flows
        share = self._share
        bw = self._bw
        for link in links:
            f = flows[link]
            f[tr.ident] = tr
            share[link] = bw[link] / len(f)
        self.rebalance(links)
        return tr

    def rebalance(self, changed_links) -> None:
        """Recompute equal-share rates of flows crossing ``changed_links``."""
        engine = self.engine
        now = engine.now
        bw = self._bw
        link_flows = self.link_flows
        affected: dict[int, Transfer] = {}
        for link in changed_links:
            affected.update(link_flows[link])
        share = self._share.__getitem__
        for tr in affected.values():
            rate = min(map(share, tr.links))
            if rate == tr.current_rate_mbps:
                continue
            if tr.current_rate_mbps > 0.0:
                tr.remaining_mb -= tr.current_rate_mbps * (now - tr.updated_at) / 8.0
                if tr.remaining_mb < 0.0:
                    tr.remaining_mb = 0.0
            tr.updated_at = now
            tr.current_rate_mbps = rate
            due = now + tr.remaining_mb * 8.0 / rate
            tr._due = due
            tr.eta = due + tr.latency_s
            if tr._armed_at is None or due < tr._armed_at:
                tr._armed_at = due
                engine.schedule(due, EventKind.TRANSFER_DRAINED, tr)
        if self.check_capacity:
            for link in changed_links:
                total = sum(t.current_rate_mbps for t in link_flows[link].values())
                if total > bw[link] * (1.0 + 1e-9):
                    self.capacity_violations += 1

    def link_rate_sum(self, link: int) -> float:
        return sum(t.current_rate_mbps for t in self.link_flows[link].values())

    def _on_drained(self, tr: Transfer) -> None:
        now = self.engine.now
        if tr.drained_at is not None or now != tr._armed_at:
            return  # superseded by an earlier event
        if now < tr._due:
            tr._armed_at = tr._due
            self.engine.schedule(tr._due, EventKind.TRANSFER_DRAINED, tr)
            return
        tr._armed_at = None
        tr.remaining_mb = 0.0
        tr.updated_at = now
        tr.current_rate_mbps = 0.0
        tr.drained_at = now
        del self.active[tr.ident]
        flows = self.link_flows
        share = self._share
        bw = self._bw
        for link in tr.links:
            f = flows[link]
            del f[tr.ident]
            share[link] = bw[link] / len(f) if f else bw[link]
        self.rebalance(tr.links)
        tr.eta = now + tr.latency_s
        self.engine.schedule(tr.eta, EventKind.TRANSFER_COMPLETE, tr)

    def _on_complete(self, tr: Transfer) -> None:
        self.delivered_mb += tr.size_mb
        if tr.on_done is not None:
            tr.on_done(tr)

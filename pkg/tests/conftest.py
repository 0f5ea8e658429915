"""Shared builders for small hand-checkable scenarios."""

from __future__ import annotations

import copy

import pytest

from ponsim.config import from_dict
from ponsim.engine import Engine
from ponsim.network import Network
from ponsim.topology import TopologyConfig, build
from ponsim.virtualization import Virtualization


def small_raw(**overrides) -> dict:
    """One OLT with one VM, one user with one application; tweak via keyword overrides."""
    raw = {
        "name": "small",
        "duration_s": 30.0,
        "seed": 7,
        "topology": {"olts": 1, "vms_per_olt": 1},
        "applications": [{
            "name": "app",
            "task_rate_per_min": 6,
            "max_latency_s": 0.2,
            "task_length_mi": 1000,
            "request_kb": 10,
            "response_kb": 10,
            "user_count": 1,
            "pattern": {"kind": "periodic"},
        }],
        "policy": {"placement": "trade_off:standard", "offloading": "round_robin:dynamic"},
    }
    for key, value in overrides.items():
        raw[key] = copy.deepcopy(value)
    return raw


def small_config(**overrides):
    return from_dict(small_raw(**overrides))


class Stack:
    """Engine + topology + network + virtualization wired together."""

    def __init__(self, n_devices=2, **topo):
        self.engine = Engine()
        self.topology = build(TopologyConfig(**topo), n_devices)
        self.network = Network(self.engine, self.topology, check_capacity=True)
        self.virt = Virtualization(self.engine, self.topology, self.network)


@pytest.fixture
def stack():
    return Stack()


def analytic_latency(links, vm_mips, task_mi, request_kb, response_kb, control_kb=1.0, lookup_s=0.001):
    """Closed-form end-to-end latency of one task on an idle device-ONT-OLT(VM) chain.

    Written from the link table alone: device->broker crosses lan, fiber and
    the OLT-internal link; device->VM crosses lan, fiber and the hypervisor link.
    """
    def leg(kinds, kb):
        latency = sum(links[k][0] for k in kinds)
        bottleneck = min(links[k][1] for k in kinds)
        return latency + (kb / 1000.0) * 8.0 / bottleneck

    to_broker = ("lan", "fiber", "internal")
    to_vm = ("lan", "fiber", "hypervisor")
    return (2 * leg(to_broker, control_kb) + lookup_s
            + leg(to_vm, request_kb)
            + task_mi / vm_mips + 2 * links["hypervisor"][0]
            + leg(to_vm, response_kb))


def single_task_raw(links, vm_mips, task_mi, request_kb, response_kb, duration_s=25.0):
    raw = small_raw(duration_s=duration_s)
    raw["topology"] = {
        "olts": 1, "vms_per_olt": 1,
        "vm": {"cores": 2, "mips_per_core": vm_mips, "ram_mb": 4096, "storage_mb": 16384},
        "links": {k: {"latency_s": lat, "bandwidth_mbps": bw} for k, (lat, bw) in links.items()},
    }
    app = raw["applications"][0]
    app.update(task_length_mi=task_mi, request_kb=request_kb, response_kb=response_kb, max_latency_s=10.0)
    app["container"] = {"image_size_mb": 1.0, "replica_count": 1}
    return raw


DEFAULT_LINKS = {"lan": (0.0005, 1000.0), "fiber": (0.001, 1000.0), "wan": (0.02, 10000.0),
                 "hypervisor": (0.0002, 10000.0), "internal": (0.0, 10000.0)}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

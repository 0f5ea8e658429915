"""Scenario configuration: YAML files validated against a JSON Schema.

Every default is materialised in :func:`effective_config`, whose YAML echo
parses back to an identical :class:`ScenarioConfig`.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .orchestration import (
    Deployment, PolicyConfig, default_mo_resource_weights, default_mo_topology_weights,
    default_trade_off_weights, parse_offloading, parse_placement,
)
from .topology import ComputeSpec, LinkParams, TopologyConfig, default_link_params
from .virtualization import ContainerSpec
from .workload import ApplicationSpec, ArrivalPattern, PatternKind, UserProfile, build_preset

DEFAULT_DURATION_S = 300 * 60.0
DEFAULT_REPLICATIONS = 5


class ConfigError(ValueError):
    """Invalid scenario; ``str()`` carries field path and line diagnostics."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_nonnegint = {"type": "integer", "minimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_compute = _obj({"cores": _posint, "mips_per_core": _pos, "ram_mb": _nonneg, "storage_mb": _nonneg})
_link = _obj({"latency_s": _nonneg, "bandwidth_mbps": _pos, "energy_per_mb": _nonneg})
_power = _obj({"active_w": _nonneg, "idle_w": _nonneg})
_kind_weights = _obj({k: _nonneg for k in ("cloud", "olt", "vm", "ont")})
_pattern = _obj({
    "kind": {"enum": [p.value for p in PatternKind]},
    "period_s": {"anyOf": [_pos, {"type": "null"}]},
    "burst_size": _posint,
    "burst_interval_s": {"anyOf": [_pos, {"type": "null"}]},
})

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ponsim scenario",
    **_obj({
        "preset": {"enum": ["S1", "S2", "S3", "S4", "S5", "mixed"]},
        "name": {"type": "string"},
        "duration_s": _pos,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "replication_count": _posint,
        "deployment_model": {"enum": [d.value for d in Deployment]},
        "queue_cap": {"anyOf": [_posint, {"type": "null"}]},
        "topology": _obj({
            "olts": _nonnegint,
            "vms_per_olt": _nonnegint,
            "onts": {"anyOf": [_nonnegint, {"type": "null"}]},
            "cloud": _compute, "olt": _compute, "vm": _compute, "ont": _compute,
            "links": _obj({k: _link for k in ("lan", "fiber", "wan", "hypervisor", "internal")}),
            "power": _obj({k: _power for k in ("cloud", "olt", "vm", "ont")}),
        }),
        "applications": {
            "type": "array",
            "minItems": 1,
            "items": _obj({
                "name": {"type": "string", "minLength": 1},
                "task_rate_per_min": _pos,
                "max_latency_s": _pos,
                "task_length_mi": _nonneg,
                "request_kb": _pos,
                "response_kb": _pos,
                "user_count": _nonnegint,
                "pattern": _pattern,
                "container": _obj({
                    "ram_mb": _pos, "storage_mb": _pos, "image_size_mb": _pos,
                    "shared": {"type": "boolean"}, "replica_count": _posint,
                }),
            }, required=("name", "task_rate_per_min", "max_latency_s", "task_length_mi",
                         "request_kb", "response_kb", "user_count")),
        },
        "profiles": {"anyOf": [{"type": "null"}, {
            "type": "array",
            "items": _obj({
                "device": _nonnegint,
                "app": {"type": "string"},
                "start_time_s": _nonneg,
                "active_duration_s": {"anyOf": [_pos, {"type": "null"}]},
                "idle_duration_s": _nonneg,
                "pattern": {"anyOf": [_pattern, {"type": "null"}]},
            }, required=("device", "app")),
        }]},
        "policy": _obj({
            "placement": {"type": "string", "pattern": r"^(round_robin|cpu_greedy|trade_off|multi_objective)(:(standard|latency|rate))?$"},
            "offloading": {"type": "string", "pattern": r"^(round_robin|best_latency|best_delay)(:(static|dynamic))?$"},
            "trade_off_weights": _kind_weights,
            "mo_topology_weights": _kind_weights,
            "mo_weights": _obj({k: _nonneg for k in ("ram", "storage", "cores", "mips")}),
            "broker_lookup_latency_s": _nonneg,
            "control_message_kb": _nonneg,
        }),
    }),
}


@dataclass
class PowerSpec:
    active_w: float = 0.0
    idle_w: float = 0.0


@dataclass
class ScenarioConfig:
    name: str = "custom"
    duration_s: float = DEFAULT_DURATION_S
    seed: int = 42
    replication_count: int = DEFAULT_REPLICATIONS
    deployment_model: Deployment = Deployment.EDGE_ONLY
    queue_cap: int | None = None
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    power: dict[str, PowerSpec] = field(default_factory=lambda: {k: PowerSpec() for k in ("cloud", "olt", "vm", "ont")})
    applications: list[ApplicationSpec] = field(default_factory=list)
    profiles: list[UserProfile] | None = None
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    @property
    def n_users(self) -> int:
        if self.profiles is not None:
            return len({p.device for p in self.profiles})
        return sum(a.user_count for a in self.applications)

    def app(self, name: str) -> ApplicationSpec:
        for a in self.applications:
            if a.name == name:
                return a
        raise KeyError(name)


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _line_of(node: yaml.Node | None, path) -> int | None:
    """1-based source line of the element at ``path`` in a composed YAML tree."""
    line = None
    for key in path:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            node = None
    if node is not None and line is None:
        line = node.start_mark.line + 1
    return line


def validate(raw: dict, source: yaml.Node | None = None, origin: str = "<config>") -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if not errors:
        return
    lines = []
    for err in errors:
        path = list(err.absolute_path)
        where = "/".join(map(str, path)) or "<root>"
        ln = _line_of(source, path) if source is not None else None
        loc = f"{origin}:{ln}" if ln else origin
        lines.append(f"{loc}: {where}: {err.message}")
    raise ConfigError("\n".join(lines))


def _compute_spec(d: dict, base: ComputeSpec) -> ComputeSpec:
    return ComputeSpec(
        cores=int(d.get("cores", base.cores)),
        mips_per_core=float(d.get("mips_per_core", base.mips_per_core)),
        ram_mb=float(d.get("ram_mb", base.ram_mb)),
        storage_mb=float(d.get("storage_mb", base.storage_mb)),
    )


def _pattern(d: dict | None) -> ArrivalPattern | None:
    if d is None:
        return None
    return ArrivalPattern(
        kind=PatternKind(d.get("kind", "periodic")),
        period_s=d.get("period_s"),
        burst_size=int(d.get("burst_size", 5)),
        burst_interval_s=d.get("burst_interval_s"),
    )


def from_dict(raw: dict, source: yaml.Node | None = None, origin: str = "<config>") -> ScenarioConfig:
    """Validate ``raw`` (optionally layered on a ``preset``) and build the config."""
    validate(raw, source, origin)
    if "preset" in raw:
        raw = _deep_merge(build_preset(raw["preset"]), {k: v for k, v in raw.items() if k != "preset"})
        if "applications" not in raw:
            raise ConfigError(f"{origin}: preset without applications")
    if "applications" not in raw:
        raise ConfigError(f"{origin}: applications: required (or give a preset)")

    topo_raw = raw.get("topology", {})
    base = TopologyConfig()
    links = default_link_params()
    for kind, params in topo_raw.get("links", {}).items():
        cur = links[kind]
        links[kind] = LinkParams(
            float(params.get("latency_s", cur.latency_s)),
            float(params.get("bandwidth_mbps", cur.bandwidth_mbps)),
            float(params.get("energy_per_mb", cur.energy_per_mb)),
        )
    topology = TopologyConfig(
        olts=int(topo_raw.get("olts", base.olts)),
        vms_per_olt=int(topo_raw.get("vms_per_olt", base.vms_per_olt)),
        onts=topo_raw.get("onts", base.onts),
        cloud=_compute_spec(topo_raw.get("cloud", {}), base.cloud),
        olt=_compute_spec(topo_raw.get("olt", {}), base.olt),
        vm=_compute_spec(topo_raw.get("vm", {}), base.vm),
        ont=_compute_spec(topo_raw.get("ont", {}), base.ont),
        links=links,
    )
    power = {k: PowerSpec() for k in ("cloud", "olt", "vm", "ont")}
    for kind, p in topo_raw.get("power", {}).items():
        power[kind] = PowerSpec(float(p.get("active_w", 0.0)), float(p.get("idle_w", 0.0)))

    apps = []
    names = set()
    for i, a in enumerate(raw["applications"]):
        if a["name"] in names:
            raise ConfigError(f"{origin}: applications/{i}/name: duplicate application {a['name']!r}")
        names.add(a["name"])
        c = a.get("container", {})
        container = ContainerSpec(
            app_id=a["name"],
            ram_mb=float(c.get("ram_mb", 512.0)),
            storage_mb=float(c.get("storage_mb", 1024.0)),
            image_size_mb=float(c.get("image_size_mb", 200.0)),
            shared=bool(c.get("shared", True)),
            replica_count=int(c.get("replica_count", 1)),
        )
        apps.append(ApplicationSpec(
            name=a["name"],
            task_rate_per_min=float(a["task_rate_per_min"]),
            max_latency_s=float(a["max_latency_s"]),
            task_length_mi=float(a["task_length_mi"]),
            request_kb=float(a["request_kb"]),
            response_kb=float(a["response_kb"]),
            user_count=int(a["user_count"]),
            container=container,
            pattern=_pattern(a.get("pattern")) or ArrivalPattern(),
        ))

    profiles = None
    if raw.get("profiles") is not None:
        profiles = []
        for i, p in enumerate(raw["profiles"]):
            if p["app"] not in names:
                raise ConfigError(f"{origin}: profiles/{i}/app: unknown application {p['app']!r}")
            active = p.get("active_duration_s")
            profiles.append(UserProfile(
                device=int(p["device"]), app=p["app"],
                start_time_s=float(p.get("start_time_s", 0.0)),
                active_duration_s=math.inf if active is None else float(active),
                idle_duration_s=float(p.get("idle_duration_s", 0.0)),
                pattern=_pattern(p.get("pattern")),
            ))
        devices = sorted({p.device for p in profiles})
        if devices != list(range(len(devices))):
            raise ConfigError(f"{origin}: profiles: devices must be numbered 0..n-1 without gaps")

    pol = raw.get("policy", {})
    p_algo, p_var = parse_placement(pol.get("placement", "trade_off:standard"))
    o_algo, o_mode = parse_offloading(pol.get("offloading", "round_robin:dynamic"))
    try:
        policy = PolicyConfig(
            placement_algorithm=p_algo, placement_variant=p_var,
            offload_algorithm=o_algo, offload_mode=o_mode,
            trade_off_weights={**default_trade_off_weights(), **pol.get("trade_off_weights", {})},
            mo_topology_weights={**default_mo_topology_weights(), **pol.get("mo_topology_weights", {})},
            mo_weights={**default_mo_resource_weights(), **pol.get("mo_weights", {})},
            broker_lookup_latency_s=float(pol.get("broker_lookup_latency_s", 0.001)),
            control_message_kb=float(pol.get("control_message_kb", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{origin}: policy: {exc}") from exc

    return ScenarioConfig(
        name=str(raw.get("name", "custom")),
        duration_s=float(raw.get("duration_s", DEFAULT_DURATION_S)),
        seed=int(raw.get("seed", 42)),
        replication_count=int(raw.get("replication_count", DEFAULT_REPLICATIONS)),
        deployment_model=Deployment(raw.get("deployment_model", "edge_only")),
        queue_cap=raw.get("queue_cap"),
        topology=topology,
        power=power,
        applications=apps,
        profiles=profiles,
        policy=policy,
    )


def parse_text(text: str, origin: str = "<config>") -> ScenarioConfig:
    try:
        source = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{origin}: not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{origin}: top level must be a mapping")
    return from_dict(raw, source, origin)


def parse_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    return parse_text(path.read_text(), str(path))


def load_preset(name: str) -> ScenarioConfig:
    return from_dict({"preset": name if name.lower() != "mixed" else "mixed"})


def _pattern_dict(p: ArrivalPattern) -> dict:
    return {"kind": p.kind.value, "period_s": p.period_s, "burst_size": p.burst_size,
            "burst_interval_s": p.burst_interval_s}


def effective_config(cfg: ScenarioConfig) -> dict:
    """Fully materialised mapping of ``cfg`` (schema-valid, round-trips)."""
    t = cfg.topology

    def compute(c: ComputeSpec) -> dict:
        return {"cores": c.cores, "mips_per_core": c.mips_per_core, "ram_mb": c.ram_mb, "storage_mb": c.storage_mb}

    out = {
        "name": cfg.name,
        "duration_s": cfg.duration_s,
        "seed": cfg.seed,
        "replication_count": cfg.replication_count,
        "deployment_model": cfg.deployment_model.value,
        "queue_cap": cfg.queue_cap,
        "topology": {
            "olts": t.olts, "vms_per_olt": t.vms_per_olt, "onts": t.onts,
            "cloud": compute(t.cloud), "olt": compute(t.olt), "vm": compute(t.vm), "ont": compute(t.ont),
            "links": {k: {"latency_s": v.latency_s, "bandwidth_mbps": v.bandwidth_mbps,
                          "energy_per_mb": v.energy_per_mb} for k, v in t.links.items()},
            "power": {k: {"active_w": v.active_w, "idle_w": v.idle_w} for k, v in cfg.power.items()},
        },
        "applications": [{
            "name": a.name, "task_rate_per_min": a.task_rate_per_min, "max_latency_s": a.max_latency_s,
            "task_length_mi": a.task_length_mi, "request_kb": a.request_kb, "response_kb": a.response_kb,
            "user_count": a.user_count, "pattern": _pattern_dict(a.pattern),
            "container": {"ram_mb": a.container.ram_mb, "storage_mb": a.container.storage_mb,
                          "image_size_mb": a.container.image_size_mb, "shared": a.container.shared,
                          "replica_count": a.container.replica_count},
        } for a in cfg.applications],
        "profiles": None if cfg.profiles is None else [{
            "device": p.device, "app": p.app, "start_time_s": p.start_time_s,
            "active_duration_s": None if math.isinf(p.active_duration_s) else p.active_duration_s,
            "idle_duration_s": p.idle_duration_s,
            "pattern": None if p.pattern is None else _pattern_dict(p.pattern),
        } for p in cfg.profiles],
        "policy": {
            "placement": cfg.policy.placement, "offloading": cfg.policy.offloading,
            "trade_off_weights": dict(cfg.policy.trade_off_weights),
            "mo_topology_weights": dict(cfg.policy.mo_topology_weights),
            "mo_weights": dict(cfg.policy.mo_weights),
            "broker_lookup_latency_s": cfg.policy.broker_lookup_latency_s,
            "control_message_kb": cfg.policy.control_message_kb,
        },
    }
    return out


def dump_effective(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(effective_config(cfg), sort_keys=False)

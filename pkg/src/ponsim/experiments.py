"""Experiment harnesses: replicated single runs, the policy grid, capacity and scalability sweeps.

Every harness expands its experiment into an ordered list of jobs, runs
them (optionally in worker processes) and returns one :class:`ResultRow`
per job in job order, so output never depends on completion order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import multiprocessing
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .config import ScenarioConfig
from .metrics import energy_total
from .orchestration import OFFLOADINGS, PLACEMENTS, Deployment, parse_offloading, parse_placement
from .simulation import RunResult, run_scenario

BASE_COLUMNS = (
    "experiment", "scenario", "row", "placement", "offloading", "deployment", "mips_per_core",
    "olts", "users", "seed", "submitted", "succeeded", "rejected", "in_flight", "tsr",
    "mean_latency_s", "l_norm", "energy_j",
)
PERF_COLUMNS = ("wall_clock_s", "peak_memory_mb")


@dataclass
class ResultRow:
    experiment: str
    scenario: str
    row: str  # "run" or "mean"
    placement: str
    offloading: str
    deployment: str
    mips_per_core: float | None
    olts: int
    users: int
    seed: int | None
    submitted: int
    succeeded: int
    rejected: int
    in_flight: int
    tsr: float | None
    mean_latency_s: float | None
    l_norm: float | None
    energy_j: float
    wall_clock_s: float
    peak_memory_mb: float
    per_app: dict[str, tuple[float | None, float | None]] = field(default_factory=dict)  # app -> (tsr, latency)


@dataclass
class Job:
    experiment: str
    cfg: ScenarioConfig
    seed: int
    mips_per_core: float | None = None


def with_policy(cfg: ScenarioConfig, placement: str | None = None, offloading: str | None = None,
                deployment: str | Deployment | None = None) -> ScenarioConfig:
    """Copy of ``cfg`` with the named policy parts replaced."""
    policy = cfg.policy
    if placement is not None:
        algo, variant = parse_placement(placement)
        policy = dataclasses.replace(policy, placement_algorithm=algo, placement_variant=variant)
    if offloading is not None:
        algo, mode = parse_offloading(offloading)
        policy = dataclasses.replace(policy, offload_algorithm=algo, offload_mode=mode)
    out = dataclasses.replace(cfg, policy=policy)
    if deployment is not None:
        out.deployment_model = Deployment(deployment)
    return out


def with_mips(cfg: ScenarioConfig, mips: float) -> ScenarioConfig:
    """Copy of ``cfg`` with VM and OLT per-core MIPS set to ``mips``."""
    topo = dataclasses.replace(
        cfg.topology,
        vm=dataclasses.replace(cfg.topology.vm, mips_per_core=float(mips)),
        olt=dataclasses.replace(cfg.topology.olt, mips_per_core=float(mips)),
    )
    return dataclasses.replace(cfg, topology=topo)


def with_users(cfg: ScenarioConfig, users: int) -> ScenarioConfig:
    """Copy of ``cfg`` with ``users`` spread over its applications in proportion to their user counts.

    Largest-remainder apportionment; remainders tie toward application order.
    """
    if cfg.profiles is not None:
        raise ValueError("cannot rescale users of a scenario with explicit profiles")
    weights = [a.user_count for a in cfg.applications]
    total = sum(weights)
    if total == 0:
        raise ValueError("scenario has no users to rescale")
    quotas = [users * w / total for w in weights]
    counts = [int(q) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: users - sum(counts)]:
        counts[i] += 1
    apps = [dataclasses.replace(a, user_count=c) for a, c in zip(cfg.applications, counts)]
    return dataclasses.replace(cfg, applications=apps)


def with_olts(cfg: ScenarioConfig, olts: int) -> ScenarioConfig:
    return dataclasses.replace(cfg, topology=dataclasses.replace(cfg.topology, olts=int(olts)))


def to_row(experiment: str, cfg: ScenarioConfig, result: RunResult, mips: float | None = None) -> ResultRow:
    aggs = result.ledger.aggregates()
    succeeded = sum(a.succeeded for a in aggs)
    completed = sum(a.completed for a in aggs)
    latency = sum(a.latency_sum_s for a in aggs) / completed if completed else None
    return ResultRow(
        experiment=experiment, scenario=cfg.name, row="run",
        placement=result.placement, offloading=result.offloading, deployment=result.deployment,
        mips_per_core=mips, olts=cfg.topology.olts, users=cfg.n_users, seed=result.seed,
        submitted=result.submitted, succeeded=succeeded,
        rejected=sum(a.rejected for a in aggs), in_flight=result.in_flight,
        tsr=result.tsr, mean_latency_s=latency, l_norm=result.l_norm,
        energy_j=energy_total(result.ledger),
        wall_clock_s=result.wall_clock_s, peak_memory_mb=result.peak_memory_mb,
        per_app={a.name: (a.tsr, a.mean_latency_s) for a in aggs},
    )


def _mean(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return statistics.fmean(vals) if vals else None


def mean_row(rows: Sequence[ResultRow]) -> ResultRow:
    """Average of replicated run rows (counts summed, rates and latencies averaged)."""
    first = rows[0]
    apps = list(first.per_app)
    return dataclasses.replace(
        first, row="mean", seed=None,
        submitted=sum(r.submitted for r in rows), succeeded=sum(r.succeeded for r in rows),
        rejected=sum(r.rejected for r in rows), in_flight=sum(r.in_flight for r in rows),
        tsr=_mean(r.tsr for r in rows), mean_latency_s=_mean(r.mean_latency_s for r in rows),
        l_norm=_mean(r.l_norm for r in rows), energy_j=statistics.fmean(r.energy_j for r in rows),
        wall_clock_s=statistics.fmean(r.wall_clock_s for r in rows),
        peak_memory_mb=max(r.peak_memory_mb for r in rows),
        per_app={a: (_mean(r.per_app[a][0] for r in rows), _mean(r.per_app[a][1] for r in rows))
                 for a in apps},
    )


def _execute(job: Job) -> ResultRow:
    return to_row(job.experiment, job.cfg, run_scenario(job.cfg, seed=job.seed), job.mips_per_core)


def execute_jobs(jobs: Sequence[Job], workers: int = 1) -> list[ResultRow]:
    if workers <= 1 or len(jobs) <= 1:
        return [_execute(j) for j in jobs]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_execute, jobs))


def run_single(cfg: ScenarioConfig, reps: int | None = None, workers: int = 1) -> list[ResultRow]:
    """``reps`` runs seeded ``seed, seed+1, ...`` followed by their mean row."""
    reps = cfg.replication_count if reps is None else reps
    jobs = [Job("run", cfg, cfg.seed + k) for k in range(reps)]
    rows = execute_jobs(jobs, workers)
    return rows + [mean_row(rows)]


def run_policy_grid(cfg: ScenarioConfig, placements: Sequence[str] | None = None,
                    offloadings: Sequence[str] | None = None,
                    deployments: Sequence[str] | None = None, reps: int | None = None,
                    workers: int = 1) -> list[ResultRow]:
    """Cartesian product deployment x placement x offloading x replication, in that nesting order."""
    reps = cfg.replication_count if reps is None else reps
    placements = PLACEMENTS if not placements else placements
    offloadings = OFFLOADINGS if not offloadings else offloadings
    deployments = [d.value for d in Deployment] if not deployments else deployments
    jobs = []
    for dep in deployments:
        for pl in placements:
            for of in offloadings:
                run_cfg = with_policy(cfg, pl, of, dep)
                jobs.extend(Job("grid", run_cfg, cfg.seed + k) for k in range(reps))
    return execute_jobs(jobs, workers)


def run_capacity_sweep(cfg: ScenarioConfig, mips_values: Sequence[float],
                       deployments: Sequence[str] | None = None, reps: int | None = None,
                       workers: int = 1) -> list[ResultRow]:
    """One sub-experiment per deployment and per-core MIPS value (VMs and OLT rescaled)."""
    reps = cfg.replication_count if reps is None else reps
    deployments = [d.value for d in Deployment] if not deployments else deployments
    jobs = []
    for dep in deployments:
        for mips in mips_values:
            run_cfg = with_policy(with_mips(cfg, mips), deployment=dep)
            jobs.extend(Job("capacity", run_cfg, cfg.seed + k, float(mips)) for k in range(reps))
    return execute_jobs(jobs, workers)


def _isolated(job: Job) -> ResultRow:
    """Run ``job`` in a fresh interpreter so its peak memory is its own."""
    ctx = multiprocessing.get_context("spawn")
    with ctx.Pool(1, maxtasksperchild=1) as pool:
        return pool.apply(_execute, (job,))


def run_scalability(cfg: ScenarioConfig, axis: str, values: Sequence[int], olts: int = 100,
                    users: int = 1000, isolate: bool = True) -> list[ResultRow]:
    """Wall-clock and peak memory per value of ``axis`` (``olts`` or ``users``).

    The other dimension is held at ``olts`` / ``users``. Runs are sequential
    and each gets its own process when ``isolate`` is set.
    """
    if axis not in ("olts", "users"):
        raise ValueError(f"axis must be 'olts' or 'users', not {axis!r}")
    rows = []
    for v in values:
        if axis == "users":
            run_cfg = with_olts(with_users(cfg, int(v)), olts)
        else:
            run_cfg = with_olts(with_users(cfg, users), int(v))
        job = Job("scale", run_cfg, cfg.seed)
        rows.append(_isolated(job) if isolate else _execute(job))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: Sequence[ResultRow], out: io.TextIOBase, perf: bool = False) -> None:
    """CSV with a fixed column order: base columns, optional perf columns, then per-app columns."""
    apps: list[str] = []
    for r in rows:
        for a in r.per_app:
            if a not in apps:
                apps.append(a)
    header = list(BASE_COLUMNS) + (list(PERF_COLUMNS) if perf else [])
    for a in apps:
        header += [f"tsr:{a}", f"mean_latency_s:{a}"]
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        line = [_fmt(getattr(r, c)) for c in BASE_COLUMNS]
        if perf:
            line += [_fmt(r.wall_clock_s), _fmt(r.peak_memory_mb)]
        for a in apps:
            t, lat = r.per_app.get(a, (None, None))
            line += [_fmt(t), _fmt(lat)]
        writer.writerow(line)


def rows_to_csv(rows: Sequence[ResultRow], perf: bool = False) -> str:
    buf = io.StringIO()
    write_csv(rows, buf, perf)
    return buf.getvalue()


def default_scale_values(axis: str) -> list[int]:
    return list(range(100, 1001, 100)) if axis == "users" else list(range(10, 101, 10))


__all__ = [
    "ResultRow", "Job", "run_single", "run_policy_grid", "run_capacity_sweep", "run_scalability",
    "write_csv", "rows_to_csv", "with_policy", "with_mips", "with_users", "with_olts", "mean_row",
    "default_scale_values", "BASE_COLUMNS", "PERF_COLUMNS",
]

import dataclasses

from hypothesis import given, settings
from hypothesis import strategies as st

from ponsim.config import from_dict, load_preset
from ponsim.experiments import (
    rows_to_csv, run_capacity_sweep, run_policy_grid, run_single, with_mips, with_users,
)
from ponsim.orchestration import OFFLOADINGS, PLACEMENTS

from conftest import small_raw


def _tiny():
    return from_dict(small_raw(duration_s=12.0))


def test_full_grid_row_count_and_order():
    rows = run_policy_grid(_tiny(), reps=1)
    assert len(rows) == 2 * 72
    expected = [(d, p, o) for d in ("edge_only", "far_edge_plus_edge") for p in PLACEMENTS for o in OFFLOADINGS]
    assert [(r.deployment, r.placement, r.offloading) for r in rows] == expected


def test_grid_reps_and_seeds():
    rows = run_policy_grid(_tiny(), placements=["cpu_greedy:rate"], offloadings=["round_robin:static"],
                           deployments=["edge_only"], reps=3)
    assert [r.seed for r in rows] == [7, 8, 9]


def test_capacity_single_value_matches_run_single():
    cfg = with_mips(_tiny(), 30_000.0)
    cap = run_capacity_sweep(_tiny(), [30_000.0], deployments=["edge_only"], reps=2)
    single = run_single(cfg, reps=2)
    assert [(r.tsr, r.mean_latency_s) for r in cap] == [(r.tsr, r.mean_latency_s) for r in single[:2]]


def test_capacity_rescales_vm_and_olt():
    cfg = with_mips(load_preset("S2"), 50_000.0)
    assert cfg.topology.vm.mips_per_core == cfg.topology.olt.mips_per_core == 50_000.0


def test_e_health_tsr_non_decreasing_in_mips():
    cfg = dataclasses.replace(load_preset("S2"), duration_s=600.0)
    rows = run_capacity_sweep(cfg, [15_000.0, 30_000.0, 50_000.0, 75_000.0, 95_000.0],
                              deployments=["edge_only"], reps=1)
    tsrs = [r.tsr for r in rows]
    assert all(b >= a for a, b in zip(tsrs, tsrs[1:])), tsrs


def test_worker_pool_matches_serial_output():
    cfg = _tiny()
    kw = dict(placements=["trade_off:latency", "round_robin:rate"], offloadings=["best_delay:dynamic"], reps=2)
    serial = run_policy_grid(cfg, **kw)
    pooled = run_policy_grid(cfg, workers=2, **kw)
    strip = lambda rows: [dataclasses.replace(r, wall_clock_s=0.0, peak_memory_mb=0.0) for r in rows]
    assert rows_to_csv(strip(serial)) == rows_to_csv(strip(pooled))


@settings(max_examples=100, deadline=None)
@given(users=st.integers(1, 5000))
def test_user_apportionment_is_exact(users):
    cfg = with_users(load_preset("mixed"), users)
    counts = [a.user_count for a in cfg.applications]
    assert sum(counts) == users
    base = [a.user_count for a in load_preset("mixed").applications]
    total = sum(base)
    for c, b in zip(counts, base):
        assert abs(c - users * b / total) < 1.0

import csv
import subprocess
import sys

import pytest
import yaml

from ponsim.cli import main
from ponsim.config import parse_scenario
from ponsim.experiments import BASE_COLUMNS, PERF_COLUMNS

from conftest import small_raw


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(small_raw(duration_s=60.0)))
    return path


def test_run_writes_rep_rows_and_mean(tmp_path, scenario):
    out = tmp_path / "run.csv"
    assert main(["run", "--scenario", str(scenario), "--reps", "5", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 6
    assert [r["row"] for r in rows] == ["run"] * 5 + ["mean"]
    assert [int(r["seed"]) for r in rows[:5]] == [7, 8, 9, 10, 11]
    assert list(rows[0])[:len(BASE_COLUMNS)] == list(BASE_COLUMNS)
    assert not set(PERF_COLUMNS) & set(rows[0])
    echoed = tmp_path / "run.effective.yaml"
    assert parse_scenario(echoed).replication_count == 5


def test_run_is_byte_identical(tmp_path, scenario):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["run", "--scenario", str(scenario), "--seed", "42", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_perf_flag_adds_columns(tmp_path, scenario):
    out = tmp_path / "p.csv"
    assert main(["run", "--scenario", str(scenario), "--reps", "1", "--perf", "--out", str(out)]) == 0
    assert set(PERF_COLUMNS) <= set(_rows(out)[0])


def test_policy_flags_apply(tmp_path, scenario):
    out = tmp_path / "p.csv"
    assert main(["run", "--scenario", str(scenario), "--reps", "1", "--placement", "cpu_greedy:latency",
                 "--offloading", "best_delay:static", "--deployment", "far_edge_plus_edge", "--out", str(out)]) == 0
    row = _rows(out)[0]
    assert (row["placement"], row["offloading"], row["deployment"]) == \
           ("cpu_greedy:latency", "best_delay:static", "far_edge_plus_edge")


def test_grid_restricted_to_one_placement(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["grid", "--preset", "S1", "--placement", "round_robin:standard", "--deployment", "edge_only",
                 "--reps", "1", "--duration-min", "0.5", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 6
    assert {r["placement"] for r in rows} == {"round_robin:standard"}
    assert len({r["offloading"] for r in rows}) == 6


def test_capacity_rows(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["capacity", "--preset", "S2", "--mips", "15000,95000", "--reps", "2", "--duration-min", "0.5",
                 "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 2 * 2 * 2
    assert [float(r["mips_per_core"]) for r in rows[:4]] == [15000.0, 15000.0, 95000.0, 95000.0]


def test_scale_rows_carry_perf(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["scale", "--preset", "S1", "--axis", "olts", "--values", "2,4", "--users", "20",
                 "--duration-min", "0.2", "--no-isolate", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [int(r["olts"]) for r in rows] == [2, 4]
    assert all(float(r["wall_clock_s"]) > 0 and float(r["peak_memory_mb"]) > 0 for r in rows)


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("topology:\n  links:\n    lan:\n      bandwidth_mbps: -1\n")
    assert main(["run", "--scenario", str(bad)]) == 2
    assert "bandwidth_mbps" in capsys.readouterr().err
    assert main(["run", "--scenario", str(tmp_path / "missing.yaml")]) == 2
    assert main(["run", "--preset", "S1", "--placement", "nope:standard"]) == 2
    assert main(["run", "--preset", "S1", "--reps", "0"]) == 2


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--preset", "S9"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["grid", "--deployment", "cloud_only"])
    assert exc.value.code == 2


def test_runtime_failure_exit_code(tmp_path, scenario):
    target = tmp_path / "dir.csv"
    target.mkdir()
    assert main(["run", "--scenario", str(scenario), "--reps", "1", "--out", str(target),
                 "--effective-config", str(tmp_path / "e.yaml")]) == 3


def test_module_entry_point_and_schema():
    proc = subprocess.run([sys.executable, "-m", "ponsim", "schema"], capture_output=True, text=True, check=True)
    assert '"additionalProperties": false' in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "ponsim", "config", "--preset", "S3"], capture_output=True,
                          text=True, check=True)
    assert yaml.safe_load(proc.stdout)["topology"]["olt"]["cores"] == 8

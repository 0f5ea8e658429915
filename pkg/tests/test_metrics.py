import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ponsim.metrics import (
    OUTCOME_IN_FLIGHT, OUTCOME_REJECTED, OUTCOME_SLO_MISS, OUTCOME_SUCCESS, MetricsLedger, energy_total,
    mean_latency, node_energy, normalized_latency, normalized_latency_from_means, tsr,
)


def _ledger(records, apps=("a",), slos=(0.05,)):
    led = MetricsLedger(list(apps), list(slos))
    for app, outcome, latency in records:
        led.record(app, outcome, 0.0, latency)
    return led


def test_tsr_95_of_100():
    led = _ledger([(0, OUTCOME_SUCCESS, 0.01)] * 95 + [(0, OUTCOME_SLO_MISS, 0.09)] * 5)
    assert tsr(led) == 0.95
    assert tsr(led, "a") == 0.95


def test_tsr_all_succeed():
    assert tsr(_ledger([(0, OUTCOME_SUCCESS, 0.01)] * 7)) == 1.0


def test_tsr_absent_when_nothing_submitted():
    led = _ledger([])
    assert tsr(led) is None
    assert normalized_latency(led) is None


def test_in_flight_and_rejected_count_as_failures():
    led = _ledger([(0, OUTCOME_SUCCESS, 0.01), (0, OUTCOME_REJECTED, float("nan")),
                   (0, OUTCOME_IN_FLIGHT, float("nan")), (0, OUTCOME_SUCCESS, 0.02)])
    assert tsr(led) == 0.5
    assert mean_latency(led) == pytest.approx(0.015)
    agg = led.aggregates()[0]
    assert (agg.submitted, agg.succeeded, agg.rejected, agg.in_flight, agg.failed) == (4, 2, 1, 1, 2)


def test_l_norm_single_app():
    led = _ledger([(0, OUTCOME_SUCCESS, 0.02), (0, OUTCOME_SUCCESS, 0.03)])
    assert normalized_latency(led) == pytest.approx(0.5, rel=1e-12)


def test_l_norm_two_apps():
    led = _ledger([(0, OUTCOME_SUCCESS, 0.01), (1, OUTCOME_SUCCESS, 0.3)], apps=("a", "b"), slos=(0.05, 0.5))
    assert normalized_latency(led) == pytest.approx(0.4, rel=1e-12)


def test_l_norm_skips_apps_without_completions():
    value, skipped = normalized_latency_from_means([(0.025, 0.05), (None, 0.5)])
    assert value == 0.5 and skipped == [1]


def test_energy_examples():
    led = MetricsLedger(["a"], [1.0])
    assert energy_total(led) == 0.0
    led.link_energy_j[0] = 100.0 * 0.01
    assert energy_total(led, "links") == pytest.approx(1.0)
    led.node_energy_j[3] = node_energy(10.0, 5.0)
    assert energy_total(led, "nodes") == 50.0
    assert energy_total(led) == pytest.approx(51.0)


def test_node_energy_idle_term():
    assert node_energy(2.0, 5.0, idle_w=1.0, cores=2, duration_s=3.0) == pytest.approx(10.0 + 4.0)


_record = st.tuples(st.integers(0, 2), st.sampled_from([OUTCOME_SUCCESS, OUTCOME_SLO_MISS, OUTCOME_REJECTED,
                                                         OUTCOME_IN_FLIGHT]), st.floats(0.001, 1.0))


@settings(max_examples=100, deadline=None)
@given(records=st.lists(_record, max_size=60), data=st.data())
def test_ledger_properties(records, data):
    apps, slos = ("a", "b", "c"), (0.05, 0.2, 0.5)
    led = _ledger(records, apps, slos)
    shuffled = _ledger(data.draw(st.permutations(records)), apps, slos)
    assert tsr(led) == tsr(shuffled)
    aggs = led.aggregates()
    assert sum(a.submitted for a in aggs) == len(led) == len(records)
    for a in aggs:
        assert a.submitted == a.succeeded + (a.completed - a.succeeded) + a.rejected + a.in_flight
    ln, ln_shuf = normalized_latency(led), normalized_latency(shuffled)
    assert (ln is None) == (ln_shuf is None)
    if ln is not None:
        assert ln == pytest.approx(ln_shuf, rel=1e-9)
    # relabelling apps permutes per-app rows but leaves L_norm unchanged
    relabelled = _ledger([((i + 1) % 3, o, lat) for i, o, lat in records], ("c", "a", "b"), (0.5, 0.05, 0.2))
    if ln is not None:
        assert normalized_latency(relabelled) == pytest.approx(ln, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(means=st.lists(st.tuples(st.floats(0.001, 1.0), st.floats(0.01, 1.0)), min_size=1, max_size=5),
       k=st.floats(0.1, 10.0))
def test_l_norm_is_linear_in_means(means, k):
    base, _ = normalized_latency_from_means(means)
    scaled, _ = normalized_latency_from_means([(m * k, s) for m, s in means])
    assert scaled == pytest.approx(k * base, rel=1e-12)

"""Model-driven provisioning: performance model fit, forecasting, scaling
plans, axis arbitration."""
import itertools
import math
import random

import pytest

from scalestore.errors import InsufficientData, ValidationError
from scalestore.provision import (Forecaster, Observation, PerfModel,
                                  ScalePlanner, arbitrate, fit_model,
                                  percentile, target_node_count)

AXES = ("availability", "latency", "read_consistency", "durability")
PRIO_AVAIL = ("availability", "read_consistency", "latency", "durability")
PRIO_RC = ("read_consistency", "availability", "latency", "durability")


def obs_for_law(rates, seed=0, noise=2.0):
    """Synthetic observations following p99 = 10 + 0.5 * rate ms."""
    rng = random.Random(seed)
    out = []
    for i, r in enumerate(rates):
        lat = [10 + 0.5 * r + rng.uniform(-noise, noise) for _ in range(20)]
        out.append(Observation(tick=i, node_id=0, rate=r,
                               latencies_ms=tuple(lat)))
    return out


def test_percentile_nearest_rank():
    xs = list(range(1, 101))
    assert percentile(xs, 0.5) == 50
    assert percentile(xs, 0.99) == 99
    assert percentile([7], 0.999) == 7


def test_observation_validation():
    with pytest.raises(ValidationError):
        Observation(tick=0, node_id=0, rate=-1, latencies_ms=(1,))


def test_fit_model_recovers_synthetic_capacity():
    # p99 hits the 100ms bound at rate 180; bucketed fit lands within one
    # 10-rps bucket of that
    rates = [5 + (i % 40) * 5 for i in range(400)]
    model = fit_model(obs_for_law(rates), 0.99, 100.0)
    assert model.fit_method == "bucketed-quantile"
    assert abs(model.capacity_rps - 180) <= 10


def test_fit_model_insufficient_data():
    with pytest.raises(InsufficientData):
        fit_model(obs_for_law([10, 20]), 0.99, 100.0)


def test_fit_model_all_violating_keeps_floor():
    rates = [100 + i % 50 for i in range(200)]
    model = fit_model(obs_for_law(rates), 0.99, 20.0)
    assert model.capacity_rps == 10.0    # one bucket of assumed headroom


def test_target_node_count_examples():
    m = PerfModel(capacity_rps=100, fit_method="t", confidence=50)
    assert target_node_count(0, m) == 2
    assert target_node_count(100, m, utilization_target=0.8) == 2
    assert target_node_count(1000, m, utilization_target=0.8) == 13
    assert target_node_count(1000, m, utilization_target=0.8, min_nodes=20) == 20


def test_forecaster_converges_and_applies_safety():
    f = Forecaster(half_life_ms=60_000, safety=1.2)
    for i in range(60):
        f.update(i * 60_000, 100.0)
    assert abs(f.forecast() - 120.0) < 1.0


def test_forecaster_tracks_step_change():
    f = Forecaster(half_life_ms=60_000, safety=1.0)
    f.update(0, 10.0)
    f.update(600_000, 100.0)    # ten half-lives later
    assert f.forecast() > 90.0


def test_planner_adds_eagerly():
    p = ScalePlanner(hysteresis_ms=1000)
    a = p.plan(2, 5, lag_at_risk=False, now_ms=0)
    assert (a.kind, a.count) == ("add", 3)
    assert a.cost_delta_node_hours > 0


def test_planner_adds_one_for_lag_risk():
    p = ScalePlanner(hysteresis_ms=1000)
    a = p.plan(5, 5, lag_at_risk=True, now_ms=0)
    assert (a.kind, a.count) == ("add", 1)


def test_planner_never_removes_under_lag_alarm():
    p = ScalePlanner(hysteresis_ms=0)
    a = p.plan(8, 2, lag_at_risk=True, now_ms=10**9)
    assert a.kind == "add"


def test_planner_hysteresis_window():
    p = ScalePlanner(hysteresis_ms=1_800_000)
    assert p.plan(8, 4, False, now_ms=0).kind == "none"
    assert p.plan(8, 4, False, now_ms=1_000_000).kind == "none"
    a = p.plan(8, 4, False, now_ms=1_800_000)
    assert (a.kind, a.count) == ("remove", 4)
    assert a.cost_delta_node_hours < 0
    # a target bounce resets the window
    assert p.plan(8, 4, False, now_ms=2_000_000).kind == "none"
    p.plan(8, 9, False, now_ms=2_060_000)
    assert p.plan(8, 4, False, now_ms=3_400_000).kind == "none"


# ---------------------------------------------------------------------------
# arbitration

def test_arbitrate_spec_example():
    dispo = arbitrate({"availability", "read_consistency"}, PRIO_AVAIL)
    assert dispo["availability"] == "satisfied"
    assert dispo["read_consistency"] == "sacrificed"
    dispo = arbitrate({"availability", "read_consistency"}, PRIO_RC)
    assert dispo["read_consistency"] == "satisfied"
    assert dispo["availability"] == "sacrificed"


def test_arbitrate_no_violations():
    assert set(arbitrate(set(), PRIO_AVAIL).values()) == {"satisfied"}


def test_arbitrate_exhaustive_subsets():
    """Over all 16 violation sets and two orders: exactly the conflicting
    pair trades off; lone violations are reported violated."""
    for order in (PRIO_AVAIL, PRIO_RC):
        for bits in itertools.product((0, 1), repeat=4):
            violated = {a for a, b in zip(AXES, bits) if b}
            dispo = arbitrate(violated, order)
            assert set(dispo) == set(AXES)
            pair = {"availability", "read_consistency"}
            for axis in AXES:
                if axis not in violated:
                    assert dispo[axis] == "satisfied"
                elif pair <= violated and axis in pair:
                    expect = "satisfied" if order.index(axis) < order.index(
                        (pair - {axis}).pop()) else "sacrificed"
                    assert dispo[axis] == expect
                else:
                    assert dispo[axis] == "violated"

"""Model-driven capacity controller.

Fits a per-node capacity estimate from observed (rate, latency) samples by
bucketed empirical quantiles, forecasts demand with an EWMA, and emits
scale-up / scale-down actions under hysteresis.  Also the pure arbitration
function that decides which axes to sacrifice when requirements conflict.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .consistency import AXES
from .errors import InsufficientData, ValidationError

DEFAULT_BUCKET_WIDTH = 10.0        # req/s per node
DEFAULT_MIN_OBSERVATIONS = 50
DEFAULT_UTILIZATION_TARGET = 0.8
DEFAULT_MIN_NODES = 2
DEFAULT_HYSTERESIS_MS = 30 * 60 * 1000
DEFAULT_SAFETY_MULTIPLIER = 1.2
FORECAST_HALF_LIFE_MS = 10 * 60 * 1000


@dataclass(frozen=True)
class Observation:
    tick: int
    node_id: int
    rate: float                 # requests/s served by this node
    latencies_ms: tuple         # sample set for the tick
    ok_count: int = 0
    fail_count: int = 0

    def __post_init__(self):
        if self.rate < 0 or self.ok_count < 0 or self.fail_count < 0:
            raise ValidationError("rates and counts must be non-negative")


@dataclass(frozen=True)
class PerfModel:
    capacity_rps: float         # max per-node rate meeting the latency SLA
    fit_method: str
    confidence: int             # observations used

    def __post_init__(self):
        if self.confidence >= DEFAULT_MIN_OBSERVATIONS and self.capacity_rps <= 0:
            raise ValidationError("fitted capacity must be positive")


@dataclass(frozen=True)
class ScalingAction:
    kind: str                   # "add" | "remove" | "none"
    count: int = 0
    reason: str = ""
    cost_delta_node_hours: float = 0.0
    moved_partitions: tuple = ()


def percentile(samples, p):
    """Empirical quantile, nearest-rank."""
    if not samples:
        return 0.0
    s = sorted(samples)
    k = max(0, min(len(s) - 1, math.ceil(p * len(s)) - 1))
    return s[k]


def fit_model(observations, sla_percentile, sla_bound_ms,
              bucket_width=DEFAULT_BUCKET_WIDTH,
              min_observations=DEFAULT_MIN_OBSERVATIONS) -> PerfModel:
    """Bucket observations by per-node rate; capacity is the upper edge of
    the highest bucket whose SLA-percentile latency stays within bound."""
    obs = list(observations)
    if len(obs) < min_observations:
        raise InsufficientData(
            "%d observations, need %d" % (len(obs), min_observations))
    buckets = {}
    for o in obs:
        b = int(o.rate // bucket_width)
        buckets.setdefault(b, []).extend(o.latencies_ms)
    capacity = 0.0
    best = None
    for b in sorted(buckets):
        lat = percentile(buckets[b], sla_percentile)
        if lat <= sla_bound_ms:
            best = b
        else:
            break
    if best is None:
        # even the lowest bucket violates; assume one bucket of headroom
        capacity = bucket_width
    else:
        capacity = (best + 1) * bucket_width
    return PerfModel(capacity_rps=capacity, fit_method="bucketed-quantile",
                     confidence=len(obs))


def target_node_count(forecast_rate, model: PerfModel,
                      utilization_target=DEFAULT_UTILIZATION_TARGET,
                      min_nodes=DEFAULT_MIN_NODES) -> int:
    effective = model.capacity_rps * utilization_target
    if forecast_rate <= 0:
        return min_nodes
    return max(min_nodes, math.ceil(forecast_rate / effective))


class Forecaster:
    """EWMA of total request rate with a safety multiplier."""

    def __init__(self, half_life_ms=FORECAST_HALF_LIFE_MS,
                 safety=DEFAULT_SAFETY_MULTIPLIER):
        self.half_life_ms = half_life_ms
        self.safety = safety
        self._value = None
        self._last_ms = None

    def update(self, now_ms, rate):
        if self._value is None or self._last_ms is None:
            self._value = rate
        else:
            dt = max(0, now_ms - self._last_ms)
            alpha = 1.0 - 0.5 ** (dt / self.half_life_ms) if dt else 0.0
            self._value += alpha * (rate - self._value)
        self._last_ms = now_ms
        return self.forecast()

    def forecast(self):
        if self._value is None:
            return 0.0
        return self._value * self.safety


@dataclass
class ScalePlanner:
    """Add eagerly, remove only after a quiet hysteresis window."""

    hysteresis_ms: int = DEFAULT_HYSTERESIS_MS
    _below_since: int | None = None

    def plan(self, current_nodes, target, lag_at_risk, now_ms,
             node_hour_rate=1.0) -> ScalingAction:
        if target > current_nodes:
            self._below_since = None
            n = target - current_nodes
            return ScalingAction(kind="add", count=n,
                                 reason="target %d > current %d" % (target, current_nodes),
                                 cost_delta_node_hours=n * node_hour_rate)
        if lag_at_risk:
            self._below_since = None
            return ScalingAction(kind="add", count=1,
                                 reason="maintenance queue at risk",
                                 cost_delta_node_hours=node_hour_rate)
        if target < current_nodes:
            if self._below_since is None:
                self._below_since = now_ms
            if now_ms - self._below_since >= self.hysteresis_ms:
                self._below_since = None
                n = current_nodes - target
                return ScalingAction(kind="remove", count=n,
                                     reason="target %d < current %d beyond hysteresis"
                                            % (target, current_nodes),
                                     cost_delta_node_hours=-n * node_hour_rate)
            return ScalingAction(kind="none", reason="hysteresis window open")
        self._below_since = None
        return ScalingAction(kind="none", reason="at target")


def arbitrate(active_violations, priority_order):
    """Greedy disposition: axes are satisfied in priority order; a violated
    axis conflicting with a higher-priority one is sacrificed.

    Pure function of (violations, priority_order).  The concrete conflict
    the system models is availability vs read_consistency: when both cannot
    hold, the lower-priority one of the pair is sacrificed.  Axes violated
    with nothing above them to yield to are reported as 'violated'.
    """
    violations = set(active_violations)
    unknown = violations - set(AXES)
    if unknown:
        raise ValueError("unknown axes: %s" % sorted(unknown))
    pair = {"availability": "read_consistency",
            "read_consistency": "availability"}
    order = list(priority_order)
    result = {}
    for axis in order:
        if axis not in violations:
            result[axis] = "satisfied"
            continue
        conflict = pair.get(axis)
        if conflict in violations:
            result[axis] = ("satisfied" if order.index(axis) < order.index(conflict)
                            else "sacrificed")
        else:
            result[axis] = "violated"
    return result

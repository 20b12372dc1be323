"""Scenario configuration: everything a simulation run depends on.

A scenario file is JSON with sections seed, duration_h, tick_ms, schema,
templates[], spec, workload, faults, controller and optional acceptance
thresholds.  File paths are resolved relative to the scenario file.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from ..consistency import parse_spec
from ..errors import ScenarioError
from ..query import DEFAULT_FANOUT_BUDGET, Catalog, parse_template
from ..schema import parse_schema


@dataclass(frozen=True)
class SpikeEvent:
    start_h: float
    ramp_h: float
    multiplier: float
    hold_h: float = 0.0         # time spent at the peak before dropping off

    def factor(self, t_h):
        if self.multiplier < 1:
            raise ScenarioError("spike multiplier must be >= 1")
        if t_h < self.start_h or t_h > self.end_h:
            return 1.0
        if t_h >= self.start_h + self.ramp_h or self.ramp_h <= 0:
            return self.multiplier
        return 1.0 + (self.multiplier - 1.0) * (t_h - self.start_h) / self.ramp_h

    @property
    def end_h(self):
        return self.start_h + self.ramp_h + self.hold_h


@dataclass(frozen=True)
class WorkloadSpec:
    base_users: int
    diurnal_amplitude: float = 0.0
    diurnal_period_h: float = 24.0
    per_user_read_rps: float = 0.1
    per_user_write_rps: float = 0.02
    spikes: tuple = ()
    sampled_reads_per_tick: int = 6
    sampled_writes_per_tick: int = 3

    def multiplier(self, t_h):
        import math
        m = 1.0 + self.diurnal_amplitude * math.sin(
            2.0 * math.pi * (t_h % self.diurnal_period_h) / self.diurnal_period_h)
        for s in self.spikes:
            m *= s.factor(t_h)
        return max(m, 0.0)


@dataclass(frozen=True)
class NetPartition:
    start_h: float
    end_h: float
    side_fraction: float = 0.5      # fraction of nodes isolated on side B

    def active(self, t_h):
        return self.start_h <= t_h < self.end_h


@dataclass(frozen=True)
class FaultSpec:
    node_failure_prob_per_epoch: float = 0.0
    epoch_ms: int = 3_600_000
    partitions: tuple = ()


@dataclass(frozen=True)
class ControllerSpec:
    control_interval_ms: int = 60_000
    min_nodes: int = 2
    max_nodes: int = 64
    utilization_target: float = 0.8
    hysteresis_ms: int = 1_800_000
    safety_multiplier: float = 1.2
    node_service_ms: float = 10.0
    node_capacity_rps: float = 30.0
    maint_tasks_per_node_per_tick: int = 50
    bucket_width_rps: float = 10.0
    min_observations: int = 50


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration_h: float
    tick_ms: int
    schema: object
    templates: dict             # name -> QueryTemplate
    spec: object                # ConsistencySpec
    workload: WorkloadSpec
    faults: FaultSpec
    controller: ControllerSpec
    acceptance: dict = field(default_factory=dict)
    fanout_budget: int = DEFAULT_FANOUT_BUDGET

    def build_catalog(self):
        cat = Catalog(self.schema, self.fanout_budget)
        for t in self.templates.values():
            cat.add(t)
        return cat

    @property
    def n_ticks(self):
        return int(self.duration_h * 3_600_000 / self.tick_ms)


def _read(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def load_scenario(path) -> Scenario:
    base = os.path.dirname(os.path.abspath(path))

    def rel(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    try:
        doc = json.loads(_read(path))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError("cannot load scenario %s: %s" % (path, exc)) from exc

    try:
        schema = parse_schema(_read(rel(doc["schema"])))
        templates = {}
        for tp in doc["templates"]:
            name = os.path.splitext(os.path.basename(tp))[0]
            templates[name] = parse_template(_read(rel(tp)), schema, name=name)
        spec = parse_spec(_read(rel(doc["spec"])))

        w = doc.get("workload", {})
        workload = WorkloadSpec(
            base_users=int(w.get("base_users", 100)),
            diurnal_amplitude=float(w.get("diurnal_amplitude", 0.0)),
            diurnal_period_h=float(w.get("diurnal_period_h", 24.0)),
            per_user_read_rps=float(w.get("per_user_read_rps", 0.1)),
            per_user_write_rps=float(w.get("per_user_write_rps", 0.02)),
            spikes=tuple(SpikeEvent(float(s["start_h"]), float(s["ramp_h"]),
                                    float(s["multiplier"]),
                                    float(s.get("hold_h", 0.0)))
                         for s in w.get("spikes", [])),
            sampled_reads_per_tick=int(w.get("sampled_reads_per_tick", 6)),
            sampled_writes_per_tick=int(w.get("sampled_writes_per_tick", 3)),
        )
        f = doc.get("faults", {})
        faults = FaultSpec(
            node_failure_prob_per_epoch=float(f.get("node_failure_prob_per_epoch", 0.0)),
            epoch_ms=int(f.get("epoch_ms", 3_600_000)),
            partitions=tuple(NetPartition(float(p["start_h"]), float(p["end_h"]),
                                          float(p.get("side_fraction", 0.5)))
                             for p in f.get("partitions", [])),
        )
        c = doc.get("controller", {})
        controller = ControllerSpec(**{k: v for k, v in c.items()})
        scenario = Scenario(
            seed=int(doc["seed"]),
            duration_h=float(doc["duration_h"]),
            tick_ms=int(doc["tick_ms"]),
            schema=schema, templates=templates, spec=spec,
            workload=workload, faults=faults, controller=controller,
            acceptance=dict(doc.get("acceptance", {})),
            fanout_budget=int(doc.get("fanout_budget", DEFAULT_FANOUT_BUDGET)),
        )
    except ScenarioError:
        raise
    except KeyError as exc:
        raise ScenarioError("scenario missing key %s" % exc) from exc
    except (OSError, TypeError, ValueError) as exc:
        raise ScenarioError("bad scenario %s: %s" % (path, exc)) from exc

    _validate(scenario)
    return scenario


def _validate(s: Scenario):
    if s.tick_ms <= 0 or s.duration_h <= 0:
        raise ScenarioError("tick_ms and duration_h must be positive")
    if not (0.0 <= s.workload.diurnal_amplitude < 1.0):
        raise ScenarioError("diurnal amplitude must be in [0,1)")
    for sp in s.workload.spikes:
        if sp.multiplier < 1.0:
            raise ScenarioError("spike multiplier must be >= 1")
    p = s.faults.node_failure_prob_per_epoch
    if not (0.0 <= p < 1.0):
        raise ScenarioError("node failure probability must be in [0,1)")
    for np_ in s.faults.partitions:
        if not (0 <= np_.start_h < np_.end_h <= s.duration_h):
            raise ScenarioError("partition interval outside scenario duration")

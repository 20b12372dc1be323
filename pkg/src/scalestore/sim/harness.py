"""Deterministic tick-driven simulation of the full control loop.

Synthetic users issue template-bound reads and base writes against the
storage engine; the update pipeline drains maintenance in deadline order;
per-tick node load feeds a queueing latency model whose observations train
the provisioner; scaling actions, node failures and network partitions
mutate the cluster.  Everything derives from the scenario seed: one RNG
stream per subsystem, never wall-clock time.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

from ..consistency import replicas_for
from ..errors import ScenarioError
from ..pipeline import SessionToken, UpdateEngine
from ..provision import (Forecaster, Observation, PerfModel, ScalePlanner,
                         fit_model, target_node_count)
from ..query import bind
from ..storage import Cluster
from .scenario import Scenario

METRICS_COLUMNS = (
    "tick", "t_ms", "active_users", "offered_rps",
    "p50_ms", "p99_ms", "p999_ms", "success_frac",
    "stale_reads", "failed_reads", "staleness_max_ms",
    "queue_depth", "tasks_applied", "deadline_misses",
    "node_count", "node_hours_cum", "cost_per_user",
    "arbitration_events", "data_loss_events", "bytes_moved",
)


class MetricsLog:
    """Per-tick series; one CSV row per tick, header on row 1."""

    def __init__(self, columns=METRICS_COLUMNS):
        self.columns = tuple(columns)
        self.rows = []

    def append(self, **values):
        self.rows.append(tuple(values[c] for c in self.columns))

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self):
        def fmt(v):
            if isinstance(v, float):
                return "%.6g" % v
            return str(v)
        lines = [",".join(self.columns)]
        lines.extend(",".join(fmt(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def summary(self):
        if not self.rows:
            return {}
        n = len(self.rows)
        succ = self.column("success_frac")
        return {
            "ticks": n,
            "mean_success": sum(succ) / n,
            "min_success": min(succ),
            "max_p999_ms": max(self.column("p999_ms")),
            "stale_reads": sum(self.column("stale_reads")),
            "failed_reads": sum(self.column("failed_reads")),
            "deadline_misses": self.column("deadline_misses")[-1],
            "final_nodes": self.column("node_count")[-1],
            "node_hours": self.column("node_hours_cum")[-1],
            "cost_per_user": self.column("cost_per_user")[-1],
            "arbitration_events": sum(self.column("arbitration_events")),
            "data_loss_events": self.column("data_loss_events")[-1],
        }


def inject_faults(faults, t_h, epoch_boundary, rng, alive_nodes):
    """Fault events for one tick: node failures at epoch boundaries plus
    the currently scheduled network bipartition (None when none active)."""
    events = []
    if epoch_boundary and faults.node_failure_prob_per_epoch > 0:
        for nid in alive_nodes:
            if rng.random() < faults.node_failure_prob_per_epoch:
                events.append(("fail", nid))
    side_fraction = None
    for p in faults.partitions:
        if p.active(t_h):
            side_fraction = p.side_fraction
            break
    return events, side_fraction


@dataclass
class _PendingStall:
    rq: object
    session: SessionToken
    template: str
    first_ms: int


class Simulation:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.catalog = scenario.build_catalog()
        ctl = scenario.controller
        p_fail = max(scenario.faults.node_failure_prob_per_epoch, 1e-9)
        self.replication = replicas_for(scenario.spec.durability_target, p_fail)
        self.min_nodes = max(ctl.min_nodes, self.replication)
        self.cluster = Cluster(n_nodes=self.min_nodes,
                               replication=self.replication)
        self.engine = UpdateEngine(self.catalog, scenario.spec, self.cluster,
                                   stall_retry_ms=scenario.tick_ms)
        # independent seeded streams per subsystem
        self.rng_workload = random.Random(scenario.seed * 7 + 1)
        self.rng_faults = random.Random(scenario.seed * 7 + 2)
        self.rng_sessions = random.Random(scenario.seed * 7 + 3)
        self.forecaster = Forecaster(safety=ctl.safety_multiplier)
        self.planner = ScalePlanner(hysteresis_ms=ctl.hysteresis_ms)
        self.model: PerfModel | None = None
        self.observations = []
        self.sessions = {}
        self.user_sides = {}
        self.stalls = []
        self.metrics = MetricsLog()
        # Data outcomes older than the staleness bound but not flagged
        # stale; must stay zero under every priority order
        self.unflagged_overbound = 0
        self._edge_list = []
        self._degree = {}
        self._link_bound = self._max_link_bound()
        self._populate()

    # ------------------------------------------------------------------

    def _max_link_bound(self):
        best = None
        for r in self.catalog.schema.relationships.values():
            if r.bounded:
                best = r.cardinality_bound if best is None \
                    else min(best, r.cardinality_bound)
        return best or 4

    def _social_tables(self):
        """The link table (two same-kind pk fields) and the entity table."""
        link = entity = None
        for t in self.catalog.schema.tables.values():
            if len(t.primary_key) == 2:
                link = t
            elif len(t.primary_key) == 1:
                entity = t
        if link is None or entity is None:
            raise ScenarioError(
                "scenario schema needs one entity table and one link table")
        return link, entity

    def _user_id(self, i):
        return "u%05d" % i

    def _populate(self):
        link, entity = self._social_tables()
        self._link = link
        self._entity = entity
        n = self.sc.workload.base_users
        rng = self.rng_workload
        date_field = next((f for f, k in entity.fields.items() if k == "date"),
                          None)
        for i in range(n):
            row = {}
            for f, kind in entity.fields.items():
                if f == entity.primary_key[0]:
                    row[f] = self._user_id(i)
                elif kind == "date":
                    row[f] = rng.randrange(0, 365 * 40)
                elif kind == "int":
                    row[f] = rng.randrange(0, 1000)
                else:
                    row[f] = "%s_%d" % (f, i)
            self.engine.write(entity.name, row, 0)
        target_deg = max(1, min(self._link_bound - 1, 3))
        for i in range(n):
            u = self._user_id(i)
            for _ in range(target_deg):
                v = self._user_id(rng.randrange(n))
                self._add_edge(u, v, 0)
        self.engine.drain_all(0)
        for i in range(n):
            self.user_sides[i] = 1 if rng.random() < 0.5 else 0

    def _deg(self, u):
        return self._degree.get(u, 0)

    def _add_edge(self, u, v, now, session=None):
        if u == v:
            return False
        f1, f2 = self._link.primary_key
        if (u, v) in self.engine.store.rows[self._link.name]:
            return False
        if self._deg(u) >= self._link_bound - 1 or \
                self._deg(v) >= self._link_bound - 1:
            return False
        extra = {f: 0 for f in self._link.fields
                 if f not in (f1, f2)}
        self.engine.write(self._link.name, {f1: u, f2: v, **extra}, now,
                          session=session)
        self.engine.write(self._link.name, {f1: v, f2: u, **extra}, now,
                          session=session)
        self._edge_list.append((u, v))
        self._degree[u] = self._deg(u) + 1
        self._degree[v] = self._deg(v) + 1
        return True

    def _remove_edge(self, u, v, now, session=None):
        f1, f2 = self._link.primary_key
        rows = self.engine.store.rows[self._link.name]
        if (u, v) not in rows:
            return False
        self.engine.write(self._link.name, dict(rows[(u, v)]), now,
                          session=session, delete=True)
        if (v, u) in rows:
            self.engine.write(self._link.name, dict(rows[(v, u)]), now,
                              session=session, delete=True)
        self._edge_list.remove((u, v))
        self._degree[u] = max(0, self._deg(u) - 1)
        self._degree[v] = max(0, self._deg(v) - 1)
        return True

    def _session(self, i):
        if i not in self.sessions:
            self.sessions[i] = SessionToken(session_id="s%d" % i)
        return self.sessions[i]

    # ------------------------------------------------------------------

    def _latency_quantiles(self, rho, ctl):
        s = ctl.node_service_ms
        if rho < 0.95:
            q = rho / (1.0 - rho)
            return s * (1 + 0.5 * q), s * (1 + 4.0 * q), s * (1 + 6.0 * q), 1.0
        # saturated: backlog dominates; success limited by capacity
        return s * 12.0, s * 60.0, s * 90.0, 0.0

    def _apply_action(self, action, ctl):
        if action.kind == "add":
            for _ in range(action.count):
                if len(self.cluster.alive_nodes()) >= ctl.max_nodes:
                    break
                self.cluster.add_node()
        elif action.kind == "remove":
            alive = sorted(self.cluster.alive_nodes(), reverse=True)
            keep = max(self.min_nodes,
                       len(alive) - action.count)
            for nid in alive[:len(alive) - keep]:
                self.cluster.decommission(nid)

    def _sides_for_partition(self, fraction):
        alive = sorted(self.cluster.alive_nodes(), reverse=True)
        k = max(1, int(len(alive) * fraction))
        if k >= len(alive):
            k = len(alive) - 1
        return frozenset(alive[:k])

    # ------------------------------------------------------------------

    def run(self) -> MetricsLog:
        sc = self.sc
        ctl = sc.controller
        wl = sc.workload
        engine = self.engine
        cluster = self.cluster
        templates = list(sc.templates.values())
        n_users = wl.base_users
        tick_ms = sc.tick_ms
        tick_h = tick_ms / 3_600_000.0
        node_hours = 0.0
        user_hours = 0.0
        last_epoch = -1
        partition_active = False

        for tick in range(sc.n_ticks):
            t_ms = tick * tick_ms
            t_h = t_ms / 3_600_000.0
            m = wl.multiplier(t_h)
            active_users = n_users * m
            offered = active_users * (wl.per_user_read_rps + wl.per_user_write_rps)

            # --- faults ---
            epoch = int(t_ms // sc.faults.epoch_ms)
            boundary = epoch != last_epoch
            last_epoch = epoch
            events, side_fraction = inject_faults(
                sc.faults, t_h, boundary, self.rng_faults,
                sorted(cluster.alive_nodes()))
            for kind, nid in events:
                if len(cluster.alive_nodes()) <= 1:
                    break
                cluster.fail_node(nid)
            if events:
                for plist in cluster.partitions.values():
                    for p in plist:
                        if any(not cluster.nodes[r].alive for r in p.replicas):
                            cluster.re_replicate(p, self.replication)
            if side_fraction is not None:
                cluster.set_network_partition(
                    self._sides_for_partition(side_fraction))
                partition_active = True
            elif partition_active:
                cluster.set_network_partition(None)
                partition_active = False

            # --- sampled writes ---
            rng = self.rng_workload
            for _ in range(wl.sampled_writes_per_tick):
                i = rng.randrange(n_users)
                session = self._session(i)
                session.side = self.user_sides[i] if partition_active else 0
                roll = rng.random()
                if roll < 0.55:
                    u = self._user_id(i)
                    v = self._user_id(rng.randrange(n_users))
                    self._add_edge(u, v, t_ms, session)
                elif roll < 0.85 or not self._edge_list:
                    row = dict(engine.store.rows[self._entity.name][
                        (self._user_id(i),)])
                    for f, k in self._entity.fields.items():
                        if k == "date":
                            row[f] = rng.randrange(0, 365 * 40)
                            break
                        if k == "int" and f not in self._entity.primary_key:
                            row[f] = rng.randrange(0, 1000)
                            break
                    engine.write(self._entity.name, row, t_ms, session=session)
                else:
                    u, v = self._edge_list[rng.randrange(len(self._edge_list))]
                    self._remove_edge(u, v, t_ms, session)

            # --- maintenance drain ---
            n_alive = len(cluster.alive_nodes())
            engine.drain(t_ms, max(1, n_alive * ctl.maint_tasks_per_node_per_tick))

            # --- reads (stall retries first) ---
            stale_reads = failed_reads = data_reads = 0
            arb_events = 0
            staleness_max = 0
            still = []
            for st in self.stalls:
                out = engine.read(st.rq, st.session, t_ms,
                                  waited_ms=t_ms - st.first_ms)
                if out.status == "stalled":
                    still.append(st)
                elif out.status == "failed":
                    failed_reads += 1
                    arb_events += 1
                else:
                    data_reads += 1
                    staleness_max = max(staleness_max, out.max_staleness_ms)
                    if out.stale_flagged:
                        stale_reads += 1
                        arb_events += 1
                    elif out.max_staleness_ms > self.sc.spec.staleness_bound_ms:
                        self.unflagged_overbound += 1
            self.stalls = still
            for _ in range(wl.sampled_reads_per_tick):
                i = rng.randrange(n_users)
                session = self._session(i)
                session.side = self.user_sides[i] if partition_active else 0
                template = templates[rng.randrange(len(templates))]
                params = {template.params[0].name: self._user_id(i)}
                rq = bind(template, params, sc.schema,
                          index_name=self.catalog.final_index_of[template.name])
                out = engine.read(rq, session, t_ms)
                if out.status == "stalled":
                    self.stalls.append(_PendingStall(rq, session,
                                                     template.name, t_ms))
                elif out.status == "failed":
                    failed_reads += 1
                    arb_events += 1
                else:
                    data_reads += 1
                    staleness_max = max(staleness_max, out.max_staleness_ms)
                    if out.stale_flagged:
                        stale_reads += 1
                        arb_events += 1
                    elif out.max_staleness_ms > self.sc.spec.staleness_bound_ms:
                        self.unflagged_overbound += 1

            # --- aggregate service model ---
            n_alive = len(cluster.alive_nodes())
            rate_per_node = offered / max(n_alive, 1)
            rho = rate_per_node / ctl.node_capacity_rps
            p50, p99, p999, cap_ok = self._latency_quantiles(rho, ctl)
            if cap_ok >= 1.0:
                cap_success = 1.0
            else:
                cap_success = min(1.0, (n_alive * ctl.node_capacity_rps)
                                  / max(offered, 1e-9))
            sampled = data_reads + failed_reads
            sample_success = 1.0 if sampled == 0 else data_reads / sampled
            success = cap_success * sample_success

            self.observations.append(Observation(
                tick=tick, node_id=0, rate=rate_per_node,
                latencies_ms=(p50, p50, p50, p50, p50, p50, p50,
                              p99, p99, p999)))
            if len(self.observations) > 720:
                del self.observations[:len(self.observations) - 720]

            # --- control loop ---
            if t_ms % ctl.control_interval_ms == 0:
                forecast = self.forecaster.update(t_ms, offered)
                try:
                    self.model = fit_model(
                        self.observations, sc.spec.latency_sla.percentile,
                        sc.spec.latency_sla.bound_ms,
                        bucket_width=ctl.bucket_width_rps,
                        min_observations=ctl.min_observations)
                except Exception:
                    self.model = None
                capacity = self.model.capacity_rps if self.model \
                    else ctl.node_capacity_rps
                model = self.model or PerfModel(capacity_rps=capacity,
                                                fit_method="prior",
                                                confidence=0)
                target = target_node_count(forecast, model,
                                           ctl.utilization_target,
                                           min_nodes=self.min_nodes)
                target = min(target, ctl.max_nodes)
                lag = engine.lag_alarm(t_ms)
                action = self.planner.plan(n_alive, target, lag.at_risk, t_ms)
                self._apply_action(action, ctl)

            # --- metrics ---
            n_alive = len(cluster.alive_nodes())
            node_hours += n_alive * tick_h
            user_hours += active_users * tick_h
            self.metrics.append(
                tick=tick, t_ms=t_ms, active_users=active_users,
                offered_rps=offered, p50_ms=p50, p99_ms=p99, p999_ms=p999,
                success_frac=success, stale_reads=stale_reads,
                failed_reads=failed_reads, staleness_max_ms=staleness_max,
                queue_depth=len(engine.queue),
                tasks_applied=engine.tasks_applied,
                deadline_misses=engine.deadline_misses,
                node_count=n_alive, node_hours_cum=node_hours,
                cost_per_user=(node_hours / user_hours) if user_hours else 0.0,
                arbitration_events=arb_events,
                data_loss_events=cluster.data_loss_events,
                bytes_moved=cluster.bytes_moved,
            )
        return self.metrics


def run(scenario: Scenario) -> MetricsLog:
    return Simulation(scenario).run()


def durability_trial(durability_target, node_failure_prob, epochs=10_000,
                     seed=0):
    """Monte Carlo check of the independent-failure durability model.

    Each epoch, R replicas (R from replicas_for) fail independently; a loss
    is an epoch where all fail.  Returns (R, observed_rate, predicted_rate,
    standard_error).
    """
    r = replicas_for(durability_target, node_failure_prob)
    rng = random.Random(seed)
    losses = 0
    for _ in range(epochs):
        if all(rng.random() < node_failure_prob for _ in range(r)):
            losses += 1
    predicted = node_failure_prob ** r
    stderr = math.sqrt(max(predicted * (1 - predicted), 1e-12) / epochs)
    return r, losses / epochs, predicted, stderr

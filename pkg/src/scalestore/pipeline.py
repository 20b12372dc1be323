"""Asynchronous index maintenance driven by a deadline priority queue.

Base writes commit immediately to the table store (and the engine's base
indices); matching maintenance rules become UpdateTasks whose deadline is
commit time plus the namespace's staleness bound.  Tasks drain in deadline
order, recompute the affected anchor slices within their op budget, push
the diffs to partition replicas, and spawn cascade tasks for downstream
indices.  Reads pick replicas under session guarantees and arbitrate
staleness violations by the declared priority order.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

from . import keys
from .chains import OpCounter, TableStore, affected_anchors, compute_slice
from .consistency import ConsistencySpec
from .errors import RangeTooWide, ReplicaUnavailable
from .query import RangeQuery
from .storage import Cluster, VersionedRecord

LAG_HEADROOM_FRACTION = 0.2


@dataclass(frozen=True)
class Change:
    """One committed base-table change; old_row None = insert, new None =
    delete."""
    table: str
    pk: tuple
    old_row: dict | None
    new_row: dict | None
    write_id: int
    commit_ms: int

    def changed_fields(self):
        if self.old_row is None or self.new_row is None:
            src = self.new_row if self.new_row is not None else self.old_row
            return set(src)
        return {f for f, v in self.new_row.items() if self.old_row.get(f) != v}


@dataclass(frozen=True)
class UpdateTask:
    rule: object                # MaintenanceRule
    change: Change
    enqueue_ms: int
    deadline: int
    seq: int


class DeadlineQueue:
    """Priority queue keyed by (deadline, enqueue sequence): earliest
    deadline first, FIFO among equals."""

    def __init__(self):
        self._heap = []
        self._seq = itertools.count()
        self.last_popped_deadline = None
        self.pop_order_violations = 0

    def push(self, rule, change, enqueue_ms, deadline):
        task = UpdateTask(rule=rule, change=change, enqueue_ms=enqueue_ms,
                          deadline=deadline, seq=next(self._seq))
        heapq.heappush(self._heap, (deadline, task.seq, task))
        return task

    def pop(self):
        deadline, _seq, task = heapq.heappop(self._heap)
        if self.last_popped_deadline is not None \
                and deadline < self.last_popped_deadline:
            self.pop_order_violations += 1
        self.last_popped_deadline = deadline
        return task

    def peek_deadline(self):
        return self._heap[0][0] if self._heap else None

    def oldest_commit(self, index_pred):
        """Earliest commit among queued tasks whose target index matches."""
        oldest = None
        for _d, _s, task in self._heap:
            if index_pred(task.rule.index):
                c = task.change.commit_ms
                if oldest is None or c < oldest:
                    oldest = c
        return oldest

    def __len__(self):
        return len(self._heap)


@dataclass
class SessionToken:
    """Per-session vectors backing read-your-writes and monotonic reads.

    write_versions[index]: commit time of the session's latest base write
    feeding that index; read_versions[index]: highest applied-through
    timestamp the session has observed from any replica of that index.
    Both are monotone non-decreasing.
    """
    session_id: str = ""
    side: int = 0
    write_versions: dict = field(default_factory=dict)
    read_versions: dict = field(default_factory=dict)

    def note_write(self, index, commit_ms):
        if commit_ms > self.write_versions.get(index, -1):
            self.write_versions[index] = commit_ms

    def note_read(self, index, applied_through):
        if applied_through > self.read_versions.get(index, -1):
            self.read_versions[index] = applied_through


@dataclass(frozen=True)
class ReadOutcome:
    status: str                     # "data" | "stalled" | "failed"
    entries: tuple = ()
    max_staleness_ms: int = 0
    stale_flagged: bool = False
    sacrificed_axis: str | None = None
    stall_until: int | None = None

    @property
    def is_data(self):
        return self.status == "data"


@dataclass(frozen=True)
class LagStatus:
    at_risk: bool
    headroom_ms: int | None     # min deadline - now; None for empty queue


class UpdateEngine:
    """Maintenance engine for one namespace (one spec, one catalog)."""

    def __init__(self, catalog, spec: ConsistencySpec, cluster: Cluster | None = None,
                 stall_retry_ms: int = 1000):
        self.catalog = catalog
        self.schema = catalog.schema
        self.spec = spec
        self.cluster = cluster
        self.store = TableStore(self.schema)
        self.queue = DeadlineQueue()
        self.canonical = {name: {} for name in catalog.indices}
        self.stall_retry_ms = stall_retry_ms
        self._write_ids = itertools.count()
        # instrumentation
        self.tasks_applied = 0
        self.deadline_misses = 0
        self.touched_by_write = {}
        self.max_ops_seen = 0
        self._downstream_memo = {}
        if cluster is not None:
            for table in self.schema.tables:
                if table not in cluster.partitions:
                    cluster.create_index(table)
            for name in catalog.indices:
                if name not in cluster.partitions:
                    cluster.create_index(name)

    # ------------------------------------------------------------------
    # write path

    def write(self, table, row, now, session: SessionToken | None = None,
              writer_id="", delete=False):
        """Commit one base-table write and enqueue its maintenance tasks."""
        t = self.schema.table(table)
        if delete:
            pk = self.store.pk_of(table, row)
            new_row = None
        else:
            pk = tuple(row[f] for f in t.primary_key)
            new_row = dict(row)
        old = self.store.apply(table, pk, new_row)
        change = Change(table=table, pk=pk, old_row=old, new_row=new_row,
                        write_id=next(self._write_ids), commit_ms=now)
        if self.cluster is not None and table in self.cluster.partitions:
            key = keys.encode_tuple(pk, t.key_kinds())
            self.cluster.put(table, key,
                             VersionedRecord(new_row, now, writer_id),
                             self.spec.write_policy)
        tasks = self.on_base_write(change, now)
        if session is not None:
            for task in tasks:
                session.note_write(task.rule.index, now)
                for downstream in self._downstream_indices(task.rule.index):
                    session.note_write(downstream, now)
        return change, tasks

    def _downstream_indices(self, index, seen=None):
        seen = seen or set()
        out = []
        for r in self.catalog.rules:
            if r.table == index and r.index not in seen:
                seen.add(r.index)
                out.append(r.index)
                out.extend(self._downstream_indices(r.index, seen))
        return out

    def _feeds(self, task_index, read_index):
        if task_index == read_index:
            return True
        if task_index not in self._downstream_memo:
            self._downstream_memo[task_index] = \
                set(self._downstream_indices(task_index))
        return read_index in self._downstream_memo[task_index]

    def _queue_floor(self, index):
        """Earliest committed write still queued (undrained) that feeds
        `index`, directly or through a cascade; None when caught up."""
        return self.queue.oldest_commit(lambda t: self._feeds(t, index))

    def on_base_write(self, change: Change, now):
        """One task per maintenance rule whose (table, field) matches."""
        tasks = []
        deadline = change.commit_ms + self.spec.staleness_bound_ms
        for rule in self.catalog.rules_for_source(change.table,
                                                  change.changed_fields()):
            tasks.append(self.queue.push(rule, change, now, deadline))
        return tasks

    # ------------------------------------------------------------------
    # drain path

    def drain(self, now, worker_capacity):
        """Apply up to worker_capacity tasks in deadline order."""
        applied = []
        for _ in range(worker_capacity):
            if not len(self.queue):
                break
            task = self.queue.pop()
            self._apply(task, now)
            applied.append(task)
        return applied

    def drain_all(self, now):
        while len(self.queue):
            self._apply(self.queue.pop(), now)

    def _apply(self, task: UpdateTask, now):
        rule = task.rule
        idx = self.catalog.indices[rule.index]
        template = self.catalog.templates[idx.source_templates[0]]
        ops = OpCounter(rule.op_budget)
        change = task.change
        anchors = affected_anchors(idx, template, self.schema, self.store,
                                   change.table, change.old_row, change.new_row,
                                   ops)
        bucket = self.canonical[idx.name]
        kinds = idx.key_kinds()
        final_table = idx.prefix_joins[-1].table if idx.prefix_joins \
            else template.base_table
        n_pk = len(self.schema.table(final_table).primary_key)
        diffs = []
        # entries counted by (anchor, end-of-chain pk): an attribute change
        # that moves a key within its slice is one touched entry, not two
        touched = set()
        for anchor in sorted(anchors, key=repr):
            new_slice = compute_slice(idx, template, self.schema, self.store,
                                      anchor, ops)
            old_slice = bucket.get(anchor, {})
            for key in old_slice:
                if key not in new_slice:
                    diffs.append((key, None))
                    touched.add((anchor, key[-n_pk:]))
                    ops.tick()
            for key, ref in new_slice.items():
                if old_slice.get(key) != ref:
                    diffs.append((key, ref))
                    touched.add((anchor, key[-n_pk:]))
                    ops.tick()
            if new_slice:
                bucket[anchor] = new_slice
            else:
                bucket.pop(anchor, None)
        self.tasks_applied += 1
        self.max_ops_seen = max(self.max_ops_seen, ops.ops)
        if now > task.deadline:
            self.deadline_misses += 1
        k = (change.write_id, idx.name)
        self.touched_by_write[k] = self.touched_by_write.get(k, 0) + len(touched)
        if diffs and self.cluster is not None:
            payload = [(keys.encode_tuple(k, kinds),
                        None if ref is None
                        else VersionedRecord(ref, change.commit_ms))
                       for k, ref in diffs]
            self.cluster.deliver_maintenance(idx.name, payload, task.deadline,
                                             change.commit_ms)
        elif self.cluster is not None:
            # nothing to ship, but the replicas are now current through this
            # deadline; advance watermarks so staleness stays honest
            self.cluster.deliver_maintenance(idx.name, [], task.deadline,
                                             change.commit_ms)
        # Cascades must fire even when this apply produced no diffs: a
        # zero-diff recompute (add/delete pairs cancelling out) can still
        # mean a downstream slice was built from an intermediate state and
        # needs recomputing against the current base.
        for rule2 in self.catalog.rules:
            if rule2.table == idx.name and rule2.kind == "cascade":
                self.queue.push(rule2, change, now, task.deadline)
        return diffs

    # ------------------------------------------------------------------
    # monitoring

    def lag_alarm(self, now):
        head = self.queue.peek_deadline()
        if head is None:
            return LagStatus(at_risk=False, headroom_ms=None)
        headroom = head - now
        threshold = int(self.spec.staleness_bound_ms * LAG_HEADROOM_FRACTION)
        return LagStatus(at_risk=headroom < threshold, headroom_ms=headroom)

    # ------------------------------------------------------------------
    # read path

    def read(self, rq: RangeQuery, session: SessionToken | None, now,
             waited_ms=0):
        """Range read under session guarantees and the priority order."""
        spec = self.spec
        side = session.side if session is not None else 0
        try:
            parts = self.cluster.partitions_for_range(rq.index, rq.low, rq.high)
        except KeyError:
            raise ReplicaUnavailable("unknown index %s" % rq.index)
        if len(parts) > 3:
            raise RangeTooWide("range spans %d partitions" % len(parts))

        need_ryw = session is not None and "ReadYourWrites" in spec.session_guarantees
        need_mono = session is not None and "MonotonicReads" in spec.session_guarantees

        # maintenance still sitting in the queue has reached no replica at
        # all; cap every replica's applied-through (and floor staleness) by
        # the oldest such commit so those writes count as unseen everywhere
        queue_oldest = self._queue_floor(rq.index)
        backlog_through = now if queue_oldest is None else queue_oldest - 1
        backlog_staleness = 0 if queue_oldest is None else max(0, now - queue_oldest)

        chosen = []
        any_reachable = True
        session_blocked = False
        for p in sorted(parts, key=lambda x: x.low):
            best = best_at = None
            reachable_any = False
            for nid in sorted(p.replicas):
                rep = p.replicas[nid]
                if not self.cluster.reachable(nid, from_side=side):
                    continue
                reachable_any = True
                at = min(rep.applied_through(now), backlog_through)
                if need_ryw and at < session.write_versions.get(rq.index, -1):
                    continue
                if need_mono and at < session.read_versions.get(rq.index, -1):
                    continue
                if best is None or at > best_at:
                    best, best_at = rep, at
            if not reachable_any:
                any_reachable = False
            elif best is None:
                session_blocked = True
            else:
                chosen.append((p, best, best_at))

        if not any_reachable or session_blocked:
            # session guarantees (or availability) unmet everywhere: stall,
            # convert to failure once the latency SLA is exhausted
            if waited_ms > spec.latency_sla.bound_ms:
                axis = "availability" if not any_reachable else "read_consistency"
                return ReadOutcome(status="failed", sacrificed_axis=axis)
            return ReadOutcome(status="stalled",
                               stall_until=now + self.stall_retry_ms)

        staleness = max((rep.staleness_ms(now) for _, rep, _at in chosen),
                        default=0)
        staleness = max(staleness, backlog_staleness)
        if staleness > spec.staleness_bound_ms:
            if spec.outranks("availability", "read_consistency"):
                return self._serve(chosen, rq, session, now,
                                   staleness, stale_flagged=True)
            if waited_ms > spec.latency_sla.bound_ms:
                return ReadOutcome(status="failed", sacrificed_axis="availability")
            return ReadOutcome(status="stalled",
                               stall_until=now + self.stall_retry_ms)
        return self._serve(chosen, rq, session, now, staleness,
                           stale_flagged=False)

    def _serve(self, chosen, rq, session, now, staleness, stale_flagged):
        entries = []
        for _p, rep, _at in chosen:
            remaining = None if rq.limit is None else rq.limit - len(entries)
            if remaining == 0:
                break
            entries.extend(rep.range(rq.low, rq.high, remaining))
        if session is not None:
            at = min(best_at for _p, _rep, best_at in chosen) if chosen else now
            session.note_read(rq.index, at)
        return ReadOutcome(status="data", entries=tuple(entries),
                           max_staleness_ms=staleness,
                           stale_flagged=stale_flagged,
                           sacrificed_axis="read_consistency" if stale_flagged
                           else None)

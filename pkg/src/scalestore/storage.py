"""Ordered key-value substrate: nodes, range partitions, replicas.

Everything is in memory; durability is modeled as replica count.  Keys are
the order-preserving byte encodings from scalestore.keys.  Each partition
replica keeps its own store plus a pending queue of maintenance payloads
that could not be delivered (node unreachable); watermarks advance as
deadline-ordered payloads are fully applied.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from . import keys
from .consistency import get_merge_fn
from .errors import (Conflict, InvalidSplitKey, NonAdjacent,
                     RangeTooWide, ReplicaUnavailable, ValidationError)

MAX_PARTITIONS_PER_READ = 3
MAX_RANGE_LIMIT = 1000


@dataclass
class VersionedRecord:
    value: object
    version: int            # logical ms
    writer_id: str = ""

    def vkey(self):
        return (self.version, self.writer_id)


@dataclass
class Node:
    node_id: int
    alive: bool = True
    side: int = 0           # network-partition side; 0 = coordinator side


class ReplicaState:
    """One replica of one partition on one node."""

    __slots__ = ("node_id", "store", "sorted_keys", "watermark", "pending")

    def __init__(self, node_id):
        self.node_id = node_id
        self.store = {}
        self.sorted_keys = []
        self.watermark = 0          # latest fully applied task deadline
        self.pending = []           # [(deadline, commit_ms, [(key, rec|None)])]

    def raw_put(self, key, record):
        if key not in self.store:
            bisect.insort(self.sorted_keys, key)
        self.store[key] = record

    def raw_delete(self, key):
        if key in self.store:
            del self.store[key]
            i = bisect.bisect_left(self.sorted_keys, key)
            del self.sorted_keys[i]

    def apply_payload(self, deadline, entries):
        for key, rec in entries:
            if rec is None:
                self.raw_delete(key)
            else:
                self.raw_put(key, rec)
        if deadline > self.watermark:
            self.watermark = deadline

    def flush_pending(self):
        for deadline, _commit, entries in self.pending:
            self.apply_payload(deadline, entries)
        self.pending.clear()

    def staleness_ms(self, now):
        if not self.pending:
            return 0
        return max(0, now - self.pending[0][1])

    def applied_through(self, now):
        """Every payload with commit time <= this has been applied."""
        if not self.pending:
            return now
        return self.pending[0][1] - 1

    def range(self, low, high, limit):
        i = bisect.bisect_left(self.sorted_keys, low)
        j = bisect.bisect_left(self.sorted_keys, high)
        out = []
        for k in self.sorted_keys[i:j]:
            out.append((k, self.store[k]))
            if limit is not None and len(out) >= limit:
                break
        return out

    def size_bytes(self):
        return sum(len(k) + 16 for k in self.sorted_keys)


class Partition:
    _counter = 0

    def __init__(self, index, low, high, node_ids):
        Partition._counter += 1
        self.pid = Partition._counter
        self.index = index
        self.low = low
        self.high = high
        self.replicas = {nid: ReplicaState(nid) for nid in node_ids}

    def covers(self, key):
        return self.low <= key < self.high

    def __repr__(self):
        return "Partition(%s, %s..%s, nodes=%s)" % (
            self.index, self.low.hex(), self.high.hex(), sorted(self.replicas))


class Cluster:
    """Simulated cluster: nodes, per-index partition maps, reachability."""

    def __init__(self, n_nodes=2, replication=2):
        self.nodes = {}
        self.replication = replication
        self.partitions = {}        # index -> [Partition] sorted by low
        self.partition_sides = None  # frozenset of node ids on side 1, or None
        self.bytes_moved = 0
        self.data_loss_events = 0
        self._next_node = 0
        for _ in range(n_nodes):
            self.add_node()

    # --- membership ---

    def add_node(self):
        nid = self._next_node
        self._next_node += 1
        self.nodes[nid] = Node(node_id=nid)
        return nid

    def alive_nodes(self):
        return [n.node_id for n in self.nodes.values() if n.alive]

    def reachable(self, node_id, from_side=0):
        node = self.nodes.get(node_id)
        if node is None or not node.alive:
            return False
        if self.partition_sides is None:
            return True
        side = 1 if node_id in self.partition_sides else 0
        return side == from_side

    def set_network_partition(self, side1_nodes):
        self.partition_sides = frozenset(side1_nodes) if side1_nodes else None
        if self.partition_sides is None:
            for plist in self.partitions.values():
                for p in plist:
                    for rep in p.replicas.values():
                        rep.flush_pending()

    def fail_node(self, node_id):
        """Permanent failure; returns partitions that lost their last replica."""
        node = self.nodes[node_id]
        node.alive = False
        lost = []
        for plist in self.partitions.values():
            for p in plist:
                if node_id in p.replicas and not any(
                        self.nodes[r].alive for r in p.replicas):
                    lost.append(p)
        self.data_loss_events += len(lost)
        return lost

    def _load(self):
        load = {nid: 0 for nid in self.alive_nodes()}
        for plist in self.partitions.values():
            for p in plist:
                for nid in p.replicas:
                    if nid in load:
                        load[nid] += 1
        return load

    def _pick_nodes(self, count, exclude=()):
        load = self._load()
        candidates = sorted((v, k) for k, v in load.items() if k not in exclude)
        if len(candidates) < count:
            raise ValidationError(
                "need %d nodes, only %d alive" % (count, len(candidates)))
        return [k for _, k in candidates[:count]]

    # --- index / partition management ---

    def create_index(self, name, replication=None):
        r = replication or self.replication
        p = Partition(name, keys.KEY_MIN, keys.KEY_MAX, self._pick_nodes(r))
        self.partitions[name] = [p]
        return p

    def partitions_for_range(self, index, low, high):
        out = [p for p in self.partitions[index]
               if p.low < high and low < p.high]
        return out

    def partition_for_key(self, index, key):
        for p in self.partitions[index]:
            if p.covers(key):
                return p
        raise ValidationError("key outside partition coverage for %s" % index)

    def split_partition(self, partition, split_key):
        if not (partition.low < split_key < partition.high):
            raise InvalidSplitKey(
                "split key must fall strictly inside the partition range")
        left = Partition(partition.index, partition.low, split_key,
                         list(partition.replicas))
        right = Partition(partition.index, split_key, partition.high,
                          list(partition.replicas))
        moved = 0
        for nid, rep in partition.replicas.items():
            for k in rep.sorted_keys:
                target = left.replicas[nid] if k < split_key else right.replicas[nid]
                target.raw_put(k, rep.store[k])
                moved += len(k) + 16
            left.replicas[nid].watermark = rep.watermark
            right.replicas[nid].watermark = rep.watermark
            for item in rep.pending:
                left.replicas[nid].pending.append(item)
                right.replicas[nid].pending.append(item)
        self.bytes_moved += moved
        plist = self.partitions[partition.index]
        i = plist.index(partition)
        plist[i:i + 1] = [left, right]
        return left, right

    def merge_partitions(self, p1, p2):
        if p1.high != p2.low:
            if p2.high == p1.low:
                p1, p2 = p2, p1
            else:
                raise NonAdjacent("partitions are not adjacent")
        if set(p1.replicas) != set(p2.replicas):
            raise NonAdjacent("replica sets differ; rebalance first")
        merged = Partition(p1.index, p1.low, p2.high, list(p1.replicas))
        moved = 0
        for nid in merged.replicas:
            rep = merged.replicas[nid]
            for src in (p1.replicas[nid], p2.replicas[nid]):
                for k in src.sorted_keys:
                    rep.raw_put(k, src.store[k])
                    moved += len(k) + 16
                rep.pending.extend(src.pending)
            rep.pending.sort(key=lambda t: t[0])
            rep.watermark = min(p1.replicas[nid].watermark,
                                p2.replicas[nid].watermark)
        self.bytes_moved += moved
        plist = self.partitions[p1.index]
        i = plist.index(p1)
        plist.remove(p2)
        plist[i] = merged
        return merged

    def re_replicate(self, partition, min_replicas):
        """Replace replicas lost to dead nodes, copying from a survivor."""
        dead = [nid for nid in partition.replicas if not self.nodes[nid].alive]
        for nid in dead:
            del partition.replicas[nid]
        survivors = [r for r in partition.replicas.values()]
        while len(partition.replicas) < min_replicas:
            try:
                newid = self._pick_nodes(1, exclude=set(partition.replicas))[0]
            except ValidationError:
                break
            rep = ReplicaState(newid)
            if survivors:
                src = survivors[0]
                for k in src.sorted_keys:
                    rep.raw_put(k, src.store[k])
                rep.watermark = src.watermark
                rep.pending = list(src.pending)
                self.bytes_moved += src.size_bytes()
            partition.replicas[newid] = rep

    def decommission(self, node_id):
        """Drain a node gracefully: move each of its replicas to another
        live node (copying data), then retire it."""
        node = self.nodes[node_id]
        if not node.alive:
            return
        for plist in self.partitions.values():
            for p in plist:
                if node_id not in p.replicas:
                    continue
                src = p.replicas.pop(node_id)
                try:
                    newid = self._pick_nodes(1, exclude=set(p.replicas)
                                             | {node_id})[0]
                except ValidationError:
                    p.replicas[node_id] = src
                    return          # nowhere to move data; keep the node
                rep = ReplicaState(newid)
                for k in src.sorted_keys:
                    rep.raw_put(k, src.store[k])
                rep.watermark = src.watermark
                rep.pending = list(src.pending)
                self.bytes_moved += src.size_bytes()
                p.replicas[newid] = rep
        node.alive = False

    # --- data path ---

    def put(self, index, key, record, policy, expected_version=None):
        """Write a record under the namespace's write policy.

        Serializable writes go through the partition leader (first live
        replica) and get a monotonically increasing version; LastWriteWins
        keeps the max-version record; Merge folds values together.
        """
        p = self.partition_for_key(index, key)
        live = [nid for nid in p.replicas if self.nodes[nid].alive]
        if not live:
            raise ReplicaUnavailable("no live replica for %s" % index)
        leader = p.replicas[live[0]]
        stored = leader.store.get(key)

        if policy.kind == "Serializable":
            if expected_version is not None and stored is not None \
                    and stored.version != expected_version:
                raise Conflict("expected version %s, stored %s"
                               % (expected_version, stored.version))
            version = record.version
            if stored is not None and version <= stored.version:
                version = stored.version + 1
            final = VersionedRecord(record.value, version, record.writer_id)
        elif policy.kind == "LastWriteWins":
            if stored is not None and record.vkey() <= stored.vkey():
                return stored
            final = record
        elif policy.kind == "Merge":
            fn = get_merge_fn(policy.merge_fn)
            if stored is None:
                final = record
            else:
                final = VersionedRecord(fn(stored.value, record.value),
                                        max(stored.version, record.version),
                                        record.writer_id)
        else:
            raise ValidationError("unknown write policy %r" % policy.kind)

        for nid, rep in p.replicas.items():
            if self.reachable(nid, from_side=0):
                rep.raw_put(key, final)
            # unreachable replicas miss base writes; maintenance payloads
            # carry the index data they will need once healed
        return final

    def get_range(self, index, low, high, limit=None, replica_choice=None,
                  reader_side=0, now=0):
        """Bounded contiguous range read from one replica per partition."""
        if limit is not None and limit > MAX_RANGE_LIMIT:
            raise ValidationError("limit above global maximum %d" % MAX_RANGE_LIMIT)
        parts = self.partitions_for_range(index, low, high)
        if len(parts) > MAX_PARTITIONS_PER_READ:
            raise RangeTooWide(
                "range spans %d partitions (bound %d)"
                % (len(parts), MAX_PARTITIONS_PER_READ))
        out = []
        for p in sorted(parts, key=lambda x: x.low):
            rep = self.choose_replica(p, replica_choice, reader_side)
            if rep is None:
                raise ReplicaUnavailable(
                    "no reachable replica for partition of %s" % index)
            remaining = None if limit is None else limit - len(out)
            if remaining == 0:
                break
            out.extend(rep.range(low, high, remaining))
        return out

    def choose_replica(self, partition, preferred=None, reader_side=0):
        if preferred is not None and preferred in partition.replicas \
                and self.reachable(preferred, from_side=reader_side):
            return partition.replicas[preferred]
        best = None
        for nid in sorted(partition.replicas):
            if self.reachable(nid, from_side=reader_side):
                rep = partition.replicas[nid]
                if best is None or rep.watermark > best.watermark:
                    best = rep
        return best

    def deliver_maintenance(self, index, diffs, deadline, commit_ms):
        """Route index diffs (key -> record|None) to partition replicas.

        Unreachable replicas queue the payload; reachable ones apply it and
        advance their watermark.
        """
        by_partition = {}
        for key, rec in diffs:
            p = self.partition_for_key(index, key)
            by_partition.setdefault(p.pid, (p, []))[1].append((key, rec))
        for p, entries in by_partition.values():
            for nid, rep in p.replicas.items():
                if self.reachable(nid, from_side=0) and not rep.pending:
                    rep.apply_payload(deadline, entries)
                else:
                    rep.pending.append((deadline, commit_ms, entries))
        # replicas that became reachable again catch up lazily
        for p, _ in by_partition.values():
            for nid, rep in p.replicas.items():
                if rep.pending and self.reachable(nid, from_side=0):
                    rep.flush_pending()

    def dump(self, index):
        """Debug dump: (hex key, version, value) lines sorted by key, from
        the freshest replica of each partition."""
        lines = []
        for p in sorted(self.partitions[index], key=lambda x: x.low):
            rep = self.choose_replica(p)
            if rep is None:
                continue
            for k in rep.sorted_keys:
                r = rep.store[k]
                lines.append("%s %s %r" % (k.hex(), r.version, r.value))
        return "\n".join(lines) + ("\n" if lines else "")

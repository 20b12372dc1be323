"""Incremental-maintenance support: base-table store and chain evaluation.

The TableStore holds committed base rows plus per-field adjacency so that
anchor slices can be recomputed with a bounded number of primitive lookups.
compute_slice re-derives the exact index entries for one anchor value;
affected_anchors performs the reverse walk from a changed row to every
anchor whose slice may involve it.  Both are bounded by the template's
admitted fan-out.
"""
from __future__ import annotations

from .errors import BudgetExceeded
from .query import IndexDefinition, QueryTemplate


class OpCounter:
    """Counts primitive lookups+writes; raises when a rule's budget is hit."""

    __slots__ = ("ops", "budget")

    def __init__(self, budget=None):
        self.ops = 0
        self.budget = budget

    def tick(self, n=1):
        self.ops += n
        if self.budget is not None and self.ops > self.budget:
            raise BudgetExceeded(
                "update function used %d primitive ops (budget %d)"
                % (self.ops, self.budget))


class TableStore:
    """Committed base-table state with per-field value -> pk adjacency."""

    def __init__(self, schema):
        self.schema = schema
        self.rows = {t: {} for t in schema.tables}
        # (table, field) -> value -> set of pks
        self.adj = {}
        for t in schema.tables.values():
            for f in t.fields:
                self.adj[(t.name, f)] = {}

    def get(self, table, pk):
        return self.rows[table].get(pk)

    def pk_of(self, table, row):
        return tuple(row[f] for f in self.schema.table(table).primary_key)

    def apply(self, table, pk, new_row):
        """Insert, update, or delete (new_row=None); returns old row."""
        old = self.rows[table].get(pk)
        if old is not None:
            for f, v in old.items():
                bucket = self.adj[(table, f)].get(v)
                if bucket is not None:
                    bucket.discard(pk)
                    if not bucket:
                        del self.adj[(table, f)][v]
        if new_row is None:
            self.rows[table].pop(pk, None)
        else:
            self.rows[table][pk] = new_row
            for f, v in new_row.items():
                self.adj[(table, f)].setdefault(v, set()).add(pk)
        return old

    def lookup(self, table, field, value, ops=None):
        """pks of rows with row[field] == value."""
        if ops is not None:
            ops.tick()
        return self.adj[(table, field)].get(value, ())


def _flip(template: QueryTemplate, left_field, orientation):
    """Mirror the base-level join field for the symmetric OR orientation.

    With an OR pair (fa, fb), the orientation anchored at fb joins through
    fa and vice versa; non-pair fields pass through unchanged.
    """
    sym = [p.fields for p in template.params if len(p.fields) == 2]
    if not sym:
        return left_field
    fa, fb = sym[0]
    cur = fa if fa in orientation else fb
    if left_field == cur:
        return fb if cur == fa else fa
    return left_field


def _orientation_fields(idx: IndexDefinition):
    return idx.orientations


def compute_slice(idx: IndexDefinition, template: QueryTemplate, schema,
                  store: TableStore, anchor, ops: OpCounter):
    """Recompute the index entries for one anchor value tuple.

    Returns {key tuple: (value table, value pk)}.
    """
    aliases = {template.base_alias: template.base_table}
    for j in template.joins:
        aliases[j.alias] = j.table
    joins = idx.prefix_joins
    chain_aliases = [template.base_alias] + [j.alias for j in joins]
    final_alias = chain_aliases[-1]
    # entries point at the end-of-chain record; keyed by its pk this is
    # deterministic even when several join paths reach the same row
    value_alias = final_alias
    entries = {}
    for orientation in idx.orientations:
        # base rows whose anchor fields equal the anchor value
        f0 = orientation[0]
        pks = store.lookup(template.base_table, f0, anchor[0], ops)
        for pk0 in list(pks):
            row0 = store.get(template.base_table, pk0)
            if row0 is None:
                continue
            if any(row0[f] != anchor[i] for i, f in enumerate(orientation)):
                continue
            paths = [{template.base_alias: row0}]
            for p, j in enumerate(joins):
                lf = _flip(template, j.left_field, orientation) if p == 0 \
                    else j.left_field
                nxt = []
                for path in paths:
                    v = path[j.left_alias][lf]
                    for pk in store.lookup(j.table, j.right_field, v, ops):
                        r = store.get(j.table, pk)
                        if r is not None and r[j.right_field] == v:
                            np = dict(path)
                            np[j.alias] = r
                            nxt.append(np)
                paths = nxt
            for path in paths:
                key = list(anchor)
                for kf in idx.key_fields:
                    if kf.role == "order":
                        key.append(path[kf.alias][kf.field])
                final_row = path[final_alias]
                for f in schema.table(aliases[final_alias]).primary_key:
                    key.append(final_row[f])
                vrow = path[value_alias]
                vt = aliases[value_alias]
                entries[tuple(key)] = (vt, store.pk_of(vt, vrow))
    return entries


def affected_anchors(idx: IndexDefinition, template: QueryTemplate, schema,
                     store: TableStore, table, old_row, new_row,
                     ops: OpCounter):
    """Anchor value tuples whose slice of `idx` may involve the changed row.

    The changed row may sit at any chain position whose table matches;
    reverse-walk each such position back to the base, then read the anchor
    fields per orientation.
    """
    joins = idx.prefix_joins
    chain_tables = [template.base_table] + [j.table for j in joins]
    anchors = set()
    for row in (old_row, new_row):
        if row is None:
            continue
        for pos, tbl in enumerate(chain_tables):
            if tbl != table:
                continue
            for orientation in idx.orientations:
                frontier = [row]
                ok = True
                for p in range(pos, 0, -1):
                    j = joins[p - 1]
                    lf = _flip(template, j.left_field, orientation) if p == 1 \
                        else j.left_field
                    prev_table = chain_tables[p - 1]
                    nxt = []
                    for r in frontier:
                        v = r[j.right_field]
                        for pk in store.lookup(prev_table, lf, v, ops):
                            pr = store.get(prev_table, pk)
                            if pr is not None:
                                nxt.append(pr)
                    frontier = nxt
                    if not frontier:
                        ok = False
                        break
                if not ok:
                    continue
                for base_row in frontier:
                    anchors.add(tuple(base_row[f] for f in orientation))
    return anchors

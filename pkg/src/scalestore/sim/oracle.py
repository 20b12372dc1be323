"""Brute-force index recomputation, independent of the incremental path.

Every index is rebuilt from scratch by nested-loop scans over the base
tables: no adjacency maps, no slices, no maintenance rules.  Deliberately
naive; used as the convergence oracle by tests and acceptance criteria.
"""
from __future__ import annotations


def _sym_pair(template):
    for p in template.params:
        if len(p.fields) == 2:
            return p.fields
    return None


def _orientation_join_field(template, left_field, orientation):
    pair = _sym_pair(template)
    if pair is None:
        return left_field
    fa, fb = pair
    cur = fa if fa in orientation else fb
    if left_field == cur:
        return fb if cur == fa else fa
    return left_field


def oracle_indices(tables, catalog, schema):
    """Expected contents of every catalog index, from base tables alone.

    tables: {table name: {pk tuple: row dict}} (a quiescent snapshot).
    Returns {index name: {key tuple: (value table, value pk)}}.
    """
    out = {}
    for name, idx in catalog.indices.items():
        template = catalog.templates[idx.source_templates[0]]
        joins = idx.prefix_joins
        aliases = {template.base_alias: template.base_table}
        for j in template.joins:
            aliases[j.alias] = j.table
        chain_aliases = [template.base_alias] + [j.alias for j in joins]
        final_alias = chain_aliases[-1]
        final_table = aliases[final_alias]
        final_pk = schema.table(final_table).primary_key
        entries = {}
        for orientation in idx.orientations:
            # all paths: nested loops, scanning full tables at every level
            paths = [{template.base_alias: row}
                     for row in tables[template.base_table].values()]
            for p, j in enumerate(joins):
                lf = _orientation_join_field(template, j.left_field, orientation) \
                    if p == 0 else j.left_field
                nxt = []
                for path in paths:
                    v = path[j.left_alias][lf]
                    for row in tables[j.table].values():
                        if row[j.right_field] == v:
                            np = dict(path)
                            np[j.alias] = row
                            nxt.append(np)
                paths = nxt
            for path in paths:
                base_row = path[template.base_alias]
                key = [base_row[f] for f in orientation]
                for kf in idx.key_fields:
                    if kf.role == "order":
                        key.append(path[kf.alias][kf.field])
                frow = path[final_alias]
                for f in final_pk:
                    key.append(frow[f])
                vpk = tuple(frow[f] for f in final_pk)
                entries[tuple(key)] = (final_table, vpk)
        out[name] = entries
    return out


def maintained_equal(engine, catalog, check_replicas=False):
    """Compare the engine's canonical indices (and optionally every replica)
    against the oracle.  Returns (ok, mismatch description or None)."""
    expected = oracle_indices(engine.store.rows, catalog, engine.schema)
    maintained_names = {r.index for r in catalog.rules}
    for name in maintained_names:
        got = {}
        for slice_ in engine.canonical[name].values():
            got.update(slice_)
        want = expected[name]
        if got != want:
            missing = set(want) - set(got)
            extra = set(got) - set(want)
            return False, "index %s: %d missing, %d extra (e.g. %s / %s)" % (
                name, len(missing), len(extra),
                next(iter(missing), None), next(iter(extra), None))
    return True, None

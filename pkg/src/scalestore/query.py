"""Restricted query-template language: parse, admit, compile, bind.

The language covers exactly the shapes the storage engine can serve from a
single bounded contiguous range read: one base table, equality predicates
binding named parameters on base-table fields (optionally symmetric via OR
over two fields and one shared parameter), joins only along declared
relationships, one ORDER BY, optional LIMIT.  No aggregation, no ad hoc
predicates.

Compilation turns an admitted template into one index (plus materialized
intermediate indices when the chain re-traverses a link table) and the
trigger rows that keep them fresh: (index, source table, field) ->
update function.  Update functions are specified by effect: recompute the
affected anchor slices from base tables, within a per-rule op budget.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from . import keys
from .errors import (MissingParameter, QuerySyntaxError, ScaleStoreError,
                     TypeMismatch, UnboundParameter, UnknownField,
                     UnknownTable, ValidationError)
from .schema import Schema, UNBOUNDED

DEFAULT_FANOUT_BUDGET = 10_000

WILDCARD = "*"


class Rejection(ScaleStoreError):
    """Template fails the constant-work-per-write requirement.

    Carries the offending relationship (or pseudo-relationship for an
    unbounded base anchor) and the computed fan-out (may be inf).
    """

    def __init__(self, template_name, offending, fanout):
        self.template_name = template_name
        self.offending = offending
        self.fanout = fanout
        super().__init__(
            "template %s rejected: %s (worst-case fan-out %s)"
            % (template_name, offending, fanout))


# ---------------------------------------------------------------------------
# parsed template

@dataclass(frozen=True)
class Join:
    alias: str
    table: str
    left_alias: str
    left_field: str
    right_field: str


@dataclass(frozen=True)
class ParamBinding:
    name: str           # parameter name as written, e.g. user_id
    fields: tuple       # base-table fields it binds; len 2 => symmetric OR


@dataclass(frozen=True)
class QueryTemplate:
    name: str
    select_alias: str
    select_field: str        # "*" or a field name
    base_table: str
    base_alias: str
    joins: tuple             # of Join, in chain order
    params: tuple            # of ParamBinding
    order_by: tuple          # (alias, field)
    limit: int | None

    @property
    def symmetric(self):
        return any(len(p.fields) == 2 for p in self.params)


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<param><\s*\w+\s*>)|(?P<num>\d+)|(?P<word>[\w\.\*]+)|(?P<punct>[=,()]))")

_KEYWORDS = {"select", "from", "join", "on", "where", "and", "or",
             "order", "by", "limit", "asc"}


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip():
                raise QuerySyntaxError("unexpected character %r" % text[pos], pos)
            break
        if m.group("param"):
            tokens.append(("param", m.group("param").strip("<> \t"), pos))
        elif m.group("num"):
            tokens.append(("num", m.group("num"), pos))
        elif m.group("word"):
            w = m.group("word")
            kind = "kw" if w.lower() in _KEYWORDS else "word"
            tokens.append((kind, w.lower() if kind == "kw" else w, pos))
        else:
            tokens.append(("punct", m.group("punct"), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens, text):
        self.tokens = tokens
        self.i = 0
        self.text = text

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_kw(self, *words):
        kind, val, pos = self.next()
        if kind != "kw" or val not in words:
            raise QuerySyntaxError("expected %s, found %r" % ("/".join(words).upper(), val), pos)
        return val

    def expect_punct(self, p):
        kind, val, pos = self.next()
        if kind != "punct" or val != p:
            raise QuerySyntaxError("expected %r, found %r" % (p, val), pos)


def _split_ref(ref, pos):
    """'p.bday' -> ('p', 'bday'); 'bday' -> (None, 'bday'); 'p.*' ok."""
    parts = ref.split(".")
    if len(parts) == 1:
        return None, parts[0]
    if len(parts) == 2 and all(parts):
        return parts[0], parts[1]
    raise QuerySyntaxError("bad field reference %r" % ref, pos)


def parse_template(text: str, schema: Schema, name: str = "query") -> QueryTemplate:
    """Parse query text and resolve all names against the schema."""
    p = _Parser(_tokenize(text), text)

    p.expect_kw("select")
    kind, sel, pos = p.next()
    if kind != "word":
        raise QuerySyntaxError("expected select list, found %r" % sel, pos)
    sel_alias, sel_field = _split_ref(sel, pos)

    p.expect_kw("from")
    kind, base_table, pos = p.next()
    if kind != "word":
        raise QuerySyntaxError("expected table name", pos)
    aliases = {}

    def read_alias(table, default):
        kind, val, _ = p.peek()
        if kind == "word":
            p.next()
            alias = val
        else:
            alias = default
        if alias in aliases:
            raise QuerySyntaxError("duplicate alias %r" % alias, pos)
        aliases[alias] = table
        return alias

    base_alias = read_alias(base_table, base_table)

    joins = []
    while p.peek()[1] == "join":
        p.next()
        kind, jtable, jpos = p.next()
        if kind != "word":
            raise QuerySyntaxError("expected table name after JOIN", jpos)
        jalias = read_alias(jtable, jtable)
        p.expect_kw("on")
        kind, lref, lpos = p.next()
        la, lf = _split_ref(lref, lpos)
        p.expect_punct("=")
        kind, rref, rpos = p.next()
        ra, rf = _split_ref(rref, rpos)
        # normalize so the joined alias is on the right
        if ra != jalias:
            if la != jalias:
                raise QuerySyntaxError(
                    "ON clause must reference the joined table %r" % jalias, lpos)
            la, lf, ra, rf = ra, rf, la, lf
        joins.append(Join(alias=jalias, table=jtable,
                          left_alias=la, left_field=lf, right_field=rf))

    params = []
    if p.peek()[1] == "where":
        p.next()
        bindings = {}            # param name -> [field, ...]
        while True:
            kind, ref, rpos = p.next()
            fa, ff = _split_ref(ref, rpos)
            p.expect_punct("=")
            kind, pname, ppos = p.next()
            if kind != "param":
                raise QuerySyntaxError("expected <param> placeholder", ppos)
            if fa not in (None, base_alias):
                raise QuerySyntaxError(
                    "parameters must bind base-table fields, got %r" % ref, rpos)
            bindings.setdefault(pname, []).append(ff)
            nxt = p.peek()
            if nxt[1] in ("and", "or"):
                p.next()
                continue
            break
        for pname, flds in bindings.items():
            if len(flds) > 2 or len(set(flds)) != len(flds):
                raise QuerySyntaxError(
                    "parameter <%s> bound %d times; at most twice (OR pair)"
                    % (pname, len(flds)))
            params.append(ParamBinding(name=pname, fields=tuple(flds)))

    order_by = None
    if p.peek()[1] == "order":
        p.next()
        p.expect_kw("by")
        kind, ref, rpos = p.next()
        order_by = _split_ref(ref, rpos)

    limit = None
    if p.peek()[1] == "limit":
        p.next()
        kind, num, npos = p.next()
        if kind != "num":
            raise QuerySyntaxError("expected number after LIMIT", npos)
        limit = int(num)

    kind, extra, xpos = p.peek()
    if kind is not None:
        raise QuerySyntaxError("trailing input %r" % extra, xpos)

    # --- name resolution ---
    chain_aliases = [base_alias] + [j.alias for j in joins]
    for alias, table in aliases.items():
        if table not in schema.tables:
            raise UnknownTable(table)

    def resolve(alias, fieldname, what):
        if fieldname == "*":
            return alias or chain_aliases[-1], fieldname
        if alias is not None:
            if alias not in aliases:
                raise UnknownTable("alias %r" % alias)
            if fieldname not in schema.table(aliases[alias]).fields:
                raise UnknownField("%s.%s" % (aliases[alias], fieldname))
            return alias, fieldname
        hits = [a for a in chain_aliases
                if fieldname in schema.table(aliases[a]).fields]
        if not hits:
            raise UnknownField(fieldname)
        return hits[0], fieldname

    sel_alias, sel_field = resolve(sel_alias, sel_field, "select")
    for j in joins:
        if j.left_alias not in aliases:
            raise UnknownTable("alias %r" % j.left_alias)
        if j.left_field not in schema.table(aliases[j.left_alias]).fields:
            raise UnknownField("%s.%s" % (aliases[j.left_alias], j.left_field))
        if j.right_field not in schema.table(j.table).fields:
            raise UnknownField("%s.%s" % (j.table, j.right_field))
    for pb in params:
        for f in pb.fields:
            if f not in schema.table(base_table).fields:
                raise UnknownField("%s.%s" % (base_table, f))
    if not params:
        raise UnboundParameter(
            "template needs at least one <param> equality predicate")
    if order_by is None:
        # default: order by the final table's first primary-key field
        final_alias = chain_aliases[-1]
        order_by = (final_alias, schema.table(aliases[final_alias]).primary_key[0])
    else:
        order_by = resolve(order_by[0], order_by[1], "order by")
    if limit is not None and limit <= 0:
        raise ValidationError("LIMIT must be positive")

    # joins must form a left-deep chain
    for k, j in enumerate(joins):
        if j.left_alias != chain_aliases[k]:
            raise ValidationError(
                "join %d must extend the chain from %r, not %r"
                % (k + 1, chain_aliases[k], j.left_alias))

    return QueryTemplate(
        name=name, select_alias=sel_alias, select_field=sel_field,
        base_table=base_table, base_alias=base_alias,
        joins=tuple(joins), params=tuple(params),
        order_by=order_by, limit=limit,
    )


# ---------------------------------------------------------------------------
# admissibility

@dataclass(frozen=True)
class FanoutReport:
    template_name: str
    per_source: dict        # source table -> worst-case entries touched
    product: int            # the chain product (same bound for every source)
    budget: int

    @property
    def admissible(self):
        return all(v <= self.budget for v in self.per_source.values())


def _alias_table(template, schema):
    m = {template.base_alias: template.base_table}
    for j in template.joins:
        m[j.alias] = j.table
    return m


def _anchor_fields(template):
    """One tuple of base fields per orientation, in template.params order."""
    sym = [p for p in template.params if len(p.fields) == 2]
    if len(sym) > 1:
        raise ValidationError("at most one symmetric OR parameter supported")
    first = tuple(p.fields[0] for p in template.params)
    if not sym:
        return [first]
    mirrored = tuple(p.fields[1] if len(p.fields) == 2 else p.fields[0]
                     for p in template.params)
    return [first, mirrored]


def _base_anchor_bound(template, schema):
    """Worst-case number of base rows sharing one anchor value.

    1 when the anchor covers the primary key; otherwise the tightest
    declared relationship bound on any anchor field, per orientation
    (worst orientation wins).  None means unbounded.
    """
    base = schema.table(template.base_table)
    worst = 1
    for fields in _anchor_fields(template):
        if set(base.primary_key) <= set(fields):
            continue
        best = None
        unbounded = []
        for f in fields:
            for r in schema.relationships.values():
                if r.from_table != template.base_table or r.from_field != f:
                    continue
                if r.bounded:
                    b = r.cardinality_bound
                    best = b if best is None else min(best, b)
                else:
                    unbounded.append(r.name)
        if best is None:
            return None, (fields, unbounded)
        worst = max(worst, best)
    return worst, None


def _join_relationship(template, schema, j, aliases):
    return schema.find_relationship(
        aliases[j.left_alias], j.left_field, j.table, j.right_field)


def _effective_forward_bound(rel, schema):
    """Rows reached by following one join edge forward."""
    if (rel.to_field,) == schema.table(rel.to_table).primary_key:
        return 1
    if not rel.bounded:
        return None
    return rel.cardinality_bound


def check_admissible(template: QueryTemplate, schema: Schema,
                     budget: int = DEFAULT_FANOUT_BUDGET) -> FanoutReport:
    """Static worst-case maintenance fan-out; raises Rejection when any
    write could touch unboundedly many (or > budget) index entries."""
    aliases = _alias_table(template, schema)

    base_bound, bad = _base_anchor_bound(template, schema)
    if base_bound is None:
        bad_fields, unbounded_rels = bad
        if unbounded_rels:
            detail = "relationship %s is UNBOUNDED" % "/".join(unbounded_rels)
        else:
            detail = "no bounded relationship declared"
        raise Rejection(template.name,
                        "unbounded base anchor %s.%s (%s)"
                        % (template.base_table, "/".join(bad_fields), detail),
                        math.inf)
    product = base_bound
    for j in template.joins:
        rel = _join_relationship(template, schema, j, aliases)
        if rel is None:
            raise Rejection(
                template.name,
                "no declared relationship %s.%s -> %s.%s"
                % (aliases[j.left_alias], j.left_field, j.table, j.right_field),
                math.inf)
        if not rel.bounded:
            raise Rejection(template.name, "relationship %s is UNBOUNDED" % rel.name,
                            math.inf)
        product *= _effective_forward_bound(rel, schema)
    per_source = {template.base_table: product}
    for j in template.joins:
        per_source.setdefault(j.table, product)
    report = FanoutReport(template_name=template.name, per_source=per_source,
                          product=product, budget=budget)
    for src, fo in per_source.items():
        if fo > budget:
            raise Rejection(template.name,
                            "fan-out for writes to %s exceeds budget %d" % (src, budget),
                            fo)
    return report


# ---------------------------------------------------------------------------
# compiled form

@dataclass(frozen=True)
class KeyField:
    role: str       # "param" | "order" | "pk"
    alias: str      # chain alias the value comes from ("" for params)
    field: str
    kind: str


@dataclass(frozen=True)
class IndexDefinition:
    name: str
    key_fields: tuple           # KeyField sequence; ends with a unique pk tiebreak
    value_table: str            # the record the entries point at
    source_templates: tuple
    # chain structure used by maintenance / the oracle
    base_table: str = ""
    prefix_joins: tuple = ()    # Join prefix materialized by this index
    orientations: tuple = ()    # tuples of base anchor fields
    signature: tuple = ()       # structural identity for catalog dedup

    def key_kinds(self):
        return tuple(kf.kind for kf in self.key_fields)


@dataclass(frozen=True)
class MaintenanceRule:
    index: str
    table: str                  # source table, or an index name for cascades
    field: str                  # field name or "*"
    update_fn: str
    op_budget: int
    kind: str = "base"          # "base" | "attr" | "cascade"
    level_joins: int = 0        # chain prefix length of the target index
    attr_depth: int = 0         # reverse-walk depth for attr rules


@dataclass(frozen=True)
class RangeQuery:
    index: str
    low: bytes
    high: bytes
    limit: int | None


def _index_signature(template, schema, n_joins):
    aliases = _alias_table(template, schema)
    chain = tuple(
        (aliases[j.left_alias], j.left_field, j.table, j.right_field)
        for j in template.joins[:n_joins])
    ors = tuple(sorted(map(tuple, _anchor_fields(template))))
    return (template.base_table, ors, chain, n_joins)


def _budget_for(product, max_bound, global_budget):
    """Honest over-estimate of lookups+writes for one rule invocation:
    up to (max_bound + 2) anchor slices, each costing ~3*product lookups
    plus writes for the diffs."""
    est = (max_bound + 2) * (4 * product + max_bound + 8)
    return min(global_budget, max(est, 16))


def compile_template(template: QueryTemplate, schema: Schema,
                     budget: int = DEFAULT_FANOUT_BUDGET):
    """Compile an admitted template.

    Returns (final IndexDefinition, [intermediate IndexDefinitions],
    [MaintenanceRule]).  Intermediate indices are materialized before any
    join that re-enters an already-traversed table (cascading maintenance);
    plain attribute joins extend the same index.
    """
    report = check_admissible(template, schema, budget)
    aliases = _alias_table(template, schema)
    orientations = tuple(tuple(fs) for fs in _anchor_fields(template))
    base = schema.table(template.base_table)

    max_bound = 1
    for j in template.joins:
        rel = _join_relationship(template, schema, j, aliases)
        if rel.bounded:
            max_bound = max(max_bound, rel.cardinality_bound)
    bb, _ = _base_anchor_bound(template, schema)
    max_bound = max(max_bound, bb)
    op_budget = _budget_for(report.product, max_bound, budget)

    # split points: before any join whose target table already occurred
    seen = {template.base_table}
    boundaries = []     # number of joins materialized in earlier levels
    for k, j in enumerate(template.joins):
        if j.table in seen:
            boundaries.append(k)
        seen.add(j.table)

    def param_key_fields():
        out = []
        first = orientations[0]
        for pb in template.params:
            f = pb.fields[0]
            out.append(KeyField(role="param", alias="", field=pb.name,
                                kind=base.fields[f]))
        return out

    def level_index(n_joins, name, final):
        chain_alias = ([template.base_alias] + [j.alias for j in template.joins])[n_joins]
        tbl = aliases[chain_alias]
        t = schema.table(tbl)
        kfs = list(param_key_fields())
        if final:
            oa, of = template.order_by
            if aliases[oa] == tbl and (of,) == t.primary_key:
                pass    # order field is the tiebreak itself
            elif oa == chain_alias or aliases[oa] == tbl:
                kfs.append(KeyField(role="order", alias=oa, field=of,
                                    kind=schema.table(aliases[oa]).fields[of]))
            else:
                kfs.append(KeyField(role="order", alias=oa, field=of,
                                    kind=schema.table(aliases[oa]).fields[of]))
        for f in t.primary_key:
            kfs.append(KeyField(role="pk", alias=chain_alias, field=f,
                                kind=t.fields[f]))
        return IndexDefinition(
            name=name, key_fields=tuple(kfs), value_table=tbl,
            source_templates=(template.name,),
            base_table=template.base_table,
            prefix_joins=template.joins[:n_joins],
            orientations=orientations,
            signature=_index_signature(template, schema, n_joins),
        )

    n = len(template.joins)
    intermediates = []
    for i, b in enumerate(boundaries):
        intermediates.append(level_index(b, "%s__l%d" % (template.name, i + 1),
                                         final=False))
    final_index = level_index(n, template.name, final=(n >= 0))

    if n == 0 and set(base.primary_key) <= set(orientations[0]):
        # primary-key lookup: the base table is its own index
        own = IndexDefinition(
            name=template.base_table, key_fields=tuple(
                KeyField(role="pk", alias=template.base_alias, field=f,
                         kind=base.fields[f]) for f in base.primary_key),
            value_table=template.base_table,
            source_templates=(template.name,),
            base_table=template.base_table, prefix_joins=(),
            orientations=orientations,
            signature=_index_signature(template, schema, 0),
        )
        return own, [], []

    rules = []
    levels = intermediates + [final_index]

    def attr_rules_for(idx, n_joins_here):
        # non-pk key fields sourced from chain tables other than the base
        out = []
        chain_aliases = [template.base_alias] + [j.alias for j in template.joins]
        for kf in idx.key_fields:
            if kf.role != "order":
                continue
            tbl = aliases[kf.alias]
            if tbl == template.base_table:
                continue
            depth = chain_aliases.index(kf.alias)
            out.append(MaintenanceRule(
                index=idx.name, table=tbl, field=kf.field,
                update_fn="maint__%s__%s_%s" % (idx.name, tbl, kf.field),
                op_budget=op_budget, kind="attr",
                level_joins=len(idx.prefix_joins), attr_depth=depth))
        return out

    # wildcard rules for chain attribute tables (first occurrence, non-base)
    def chain_table_rules(idx):
        out = []
        covered = {template.base_table}
        for i, j in enumerate(idx.prefix_joins):
            if j.table in covered:
                continue
            covered.add(j.table)
            out.append(MaintenanceRule(
                index=idx.name, table=j.table, field=WILDCARD,
                update_fn="maint__%s__%s" % (idx.name, j.table),
                op_budget=op_budget, kind="attr",
                level_joins=len(idx.prefix_joins), attr_depth=i + 1))
        return out

    for li, idx in enumerate(levels):
        final = idx is final_index
        ars = attr_rules_for(idx, len(idx.prefix_joins))
        # drop wildcard chain rules already implied by an attr rule's table
        crs = [r for r in chain_table_rules(idx)
               if all(a.table != r.table for a in ars)]
        rules.extend(ars)
        rules.extend(crs)
        if li == 0:
            rules.append(MaintenanceRule(
                index=idx.name, table=template.base_table, field=WILDCARD,
                update_fn="maint__%s__base" % idx.name,
                op_budget=op_budget, kind="base",
                level_joins=len(idx.prefix_joins)))
        else:
            rules.append(MaintenanceRule(
                index=idx.name, table=levels[li - 1].name, field=WILDCARD,
                update_fn="maint__%s__cascade" % idx.name,
                op_budget=op_budget, kind="cascade",
                level_joins=len(idx.prefix_joins)))

    return final_index, intermediates, rules


# ---------------------------------------------------------------------------
# catalog: compile many templates, dedup structurally identical indices

class Catalog:
    """Compiled templates plus the merged maintenance table."""

    def __init__(self, schema: Schema, budget: int = DEFAULT_FANOUT_BUDGET):
        self.schema = schema
        self.budget = budget
        self.templates = {}         # name -> QueryTemplate
        self.indices = {}           # name -> IndexDefinition
        self.rules = []             # ordered MaintenanceRule list
        self.reports = {}           # template name -> FanoutReport
        self._by_signature = {}     # signature -> index name
        self.final_index_of = {}    # template name -> index name

    def add(self, template: QueryTemplate):
        report = check_admissible(template, self.schema, self.budget)
        final, intermediates, rules = compile_template(
            template, self.schema, self.budget)
        rename = {}
        for idx in intermediates + [final]:
            existing = self._by_signature.get(idx.signature)
            if existing is not None:
                rename[idx.name] = existing
            else:
                self._by_signature[idx.signature] = idx.name
                self.indices[idx.name] = idx
        for r in rules:
            index = rename.get(r.index, r.index)
            table = rename.get(r.table, r.table)
            if index != r.index or table != r.table:
                r = MaintenanceRule(index=index, table=table, field=r.field,
                                    update_fn=r.update_fn, op_budget=r.op_budget,
                                    kind=r.kind, level_joins=r.level_joins,
                                    attr_depth=r.attr_depth)
            if r.index in rename.values() and any(
                    (x.index, x.table, x.field) == (r.index, r.table, r.field)
                    for x in self.rules):
                continue    # structurally identical rule already present
            if any((x.index, x.table, x.field) == (r.index, r.table, r.field)
                   for x in self.rules):
                continue
            self.rules.append(r)
        self.templates[template.name] = template
        self.reports[template.name] = report
        self.final_index_of[template.name] = rename.get(final.name, final.name)
        return report

    def rules_for_source(self, table, changed_fields):
        """Rules triggered by a write to `table` changing `changed_fields`
        (a row insert or delete counts as changing every field)."""
        out = []
        for r in self.rules:
            if r.table != table:
                continue
            if r.field == WILDCARD or r.field in changed_fields:
                out.append(r)
        return out

    def maintenance_table_text(self):
        """Aligned Index / Table / Field dump for golden-file comparison."""
        rows = [("Index", "Table", "Field")]
        rows += [(r.index, r.table, r.field) for r in self.rules]
        w0 = max(len(a) for a, _, _ in rows)
        w1 = max(len(b) for _, b, _ in rows)
        return "\n".join("%-*s  %-*s  %s" % (w0, a, w1, b, c)
                         for a, b, c in rows) + "\n"


# ---------------------------------------------------------------------------
# binding

def bind(template: QueryTemplate, params: dict, schema: Schema,
         index_name: str | None = None, limit: int | None = None) -> RangeQuery:
    """Fix parameter values, producing the single contiguous range read."""
    base = schema.table(template.base_table)
    values = []
    kinds = []
    for pb in template.params:
        if pb.name not in params:
            raise MissingParameter(pb.name)
        kind = base.fields[pb.fields[0]]
        values.append(params[pb.name])
        kinds.append(kind)
    extra = set(params) - {pb.name for pb in template.params}
    if extra:
        raise MissingParameter("unknown parameters: %s" % sorted(extra))
    prefix = keys.encode_tuple(values, kinds)   # raises TypeMismatch
    low, high = keys.prefix_range(prefix)
    return RangeQuery(
        index=index_name or template.name,
        low=low, high=high,
        limit=limit if limit is not None else template.limit,
    )

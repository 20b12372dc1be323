"""Application schema: tables, typed fields, and bounded relationships.

Cardinality bounds live on relationships.  A bound K promises that for any
value of the source field there are at most K matching rows; UNBOUNDED
relationships exist so that templates traversing them can be rejected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import SpecSyntaxError, ValidationError

UNBOUNDED = "UNBOUNDED"

FIELD_KINDS = ("int", "str", "date")


@dataclass(frozen=True)
class Table:
    name: str
    fields: dict            # field name -> kind ("int" | "str" | "date")
    primary_key: tuple      # non-empty subset of field names

    def key_kinds(self):
        return tuple(self.fields[f] for f in self.primary_key)


@dataclass(frozen=True)
class Relationship:
    """Join edge: rows of from_table reference to_table.primary-key values.

    cardinality_bound limits how many from_table rows may share one
    from_field value AND how many may reference one to_table row; UNBOUNDED
    lifts the limit (and poisons any template that traverses the edge).
    """
    name: str
    from_table: str
    from_field: str
    to_table: str
    to_field: str
    cardinality_bound: object   # positive int or UNBOUNDED

    @property
    def bounded(self):
        return self.cardinality_bound != UNBOUNDED


@dataclass(frozen=True)
class Schema:
    tables: dict = field(default_factory=dict)          # name -> Table
    relationships: dict = field(default_factory=dict)   # name -> Relationship

    def validate(self):
        for t in self.tables.values():
            if not t.primary_key:
                raise ValidationError("table %s has empty primary key" % t.name)
            for f in t.primary_key:
                if f not in t.fields:
                    raise ValidationError(
                        "table %s: pk field %s undeclared" % (t.name, f))
            for f, kind in t.fields.items():
                if kind not in FIELD_KINDS:
                    raise ValidationError(
                        "table %s field %s: unknown kind %r" % (t.name, f, kind))
        for r in self.relationships.values():
            for tbl, fld in ((r.from_table, r.from_field), (r.to_table, r.to_field)):
                if tbl not in self.tables:
                    raise ValidationError(
                        "relationship %s references unknown table %s" % (r.name, tbl))
                if fld not in self.tables[tbl].fields:
                    raise ValidationError(
                        "relationship %s references unknown field %s.%s"
                        % (r.name, tbl, fld))
            if r.bounded and (not isinstance(r.cardinality_bound, int)
                              or r.cardinality_bound < 1):
                raise ValidationError(
                    "relationship %s: bound must be positive or UNBOUNDED" % r.name)

    def table(self, name):
        return self.tables[name]

    def find_relationship(self, from_table, from_field, to_table, to_field):
        for r in self.relationships.values():
            if (r.from_table, r.from_field, r.to_table, r.to_field) == \
                    (from_table, from_field, to_table, to_field):
                return r
        return None


def parse_schema(text: str) -> Schema:
    """Load a schema from its JSON document form."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(exc.msg, "line %d col %d" % (exc.lineno, exc.colno)) from None
    tables = {}
    for t in doc.get("tables", []):
        tables[t["name"]] = Table(
            name=t["name"],
            fields=dict(t["fields"]),
            primary_key=tuple(t["primary_key"]),
        )
    rels = {}
    for r in doc.get("relationships", []):
        bound = r["cardinality_bound"]
        if bound != UNBOUNDED:
            bound = int(bound)
        rels[r["name"]] = Relationship(
            name=r["name"],
            from_table=r["from_table"],
            from_field=r["from_field"],
            to_table=r["to_table"],
            to_field=r["to_field"],
            cardinality_bound=bound,
        )
    schema = Schema(tables=tables, relationships=rels)
    schema.validate()
    return schema

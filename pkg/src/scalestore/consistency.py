"""Declarative per-namespace consistency and performance specification.

A spec fixes, for one namespace (a logical table plus the indices derived
from it): a latency SLA, an availability SLA, the write conflict policy,
a wall-clock staleness bound for replication, optional session guarantees,
a durability target, and a total priority order over the four axes used to
arbitrate when not everything can be satisfied at once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import SpecSyntaxError, UnknownMergeFunction, ValidationError

AXES = ("availability", "latency", "read_consistency", "durability")

SESSION_GUARANTEES = ("ReadYourWrites", "MonotonicReads")

WRITE_POLICIES = ("Serializable", "Merge", "LastWriteWins")


# ---------------------------------------------------------------------------
# merge registry

def _merge_last_write_wins(stored, incoming):
    return incoming


def _merge_set_union(stored, incoming):
    return set(stored) | set(incoming)


def _merge_numeric_max(stored, incoming):
    return max(stored, incoming)


MERGE_REGISTRY = {
    "last-write-wins": _merge_last_write_wins,
    "set-union": _merge_set_union,
    "numeric-max": _merge_numeric_max,
}


def register_merge_fn(name, fn):
    MERGE_REGISTRY[name] = fn


def get_merge_fn(name):
    try:
        return MERGE_REGISTRY[name]
    except KeyError:
        raise UnknownMergeFunction(name) from None


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatencySLA:
    percentile: float   # in (0,1), e.g. 0.999
    bound_ms: int       # positive


@dataclass(frozen=True)
class WritePolicy:
    kind: str                  # Serializable | Merge | LastWriteWins
    merge_fn: str | None = None


@dataclass(frozen=True)
class ConsistencySpec:
    """Immutable after parse; safe to share across readers."""

    namespace: str
    latency_sla: LatencySLA
    availability_sla: float
    write_policy: WritePolicy
    staleness_bound_ms: int
    session_guarantees: frozenset = field(default_factory=frozenset)
    durability_target: float = 0.999
    priority_order: tuple = AXES

    def validate(self):
        if not self.namespace:
            raise ValidationError("namespace must be non-empty")
        p = self.latency_sla.percentile
        if not (0.0 < p < 1.0):
            raise ValidationError("latency percentile must be in (0,1), got %r" % p)
        if self.latency_sla.bound_ms <= 0:
            raise ValidationError("latency bound_ms must be positive")
        if not (0.0 < self.availability_sla < 1.0):
            raise ValidationError("availability must be in (0,1)")
        if self.staleness_bound_ms <= 0:
            raise ValidationError("staleness_bound_ms must be positive")
        if not (0.0 < self.durability_target < 1.0):
            raise ValidationError("durability must be in (0,1)")
        if self.write_policy.kind not in WRITE_POLICIES:
            raise ValidationError("unknown write policy %r" % self.write_policy.kind)
        if self.write_policy.kind == "Merge":
            if not self.write_policy.merge_fn:
                raise ValidationError("Merge policy requires merge_fn")
            if self.write_policy.merge_fn not in MERGE_REGISTRY:
                raise UnknownMergeFunction(self.write_policy.merge_fn)
        elif self.write_policy.merge_fn is not None:
            raise ValidationError("merge_fn only valid with Merge policy")
        for g in self.session_guarantees:
            if g not in SESSION_GUARANTEES:
                raise ValidationError("unknown session guarantee %r" % g)
        if sorted(self.priority_order) != sorted(AXES):
            raise ValidationError(
                "priority order must be a permutation of %s, got %s"
                % (list(AXES), list(self.priority_order)))

    def axis_rank(self, axis):
        """Lower rank = more important."""
        return self.priority_order.index(axis)

    def outranks(self, a, b):
        return self.axis_rank(a) < self.axis_rank(b)


_TOP_KEYS = {"namespace", "latency_sla", "availability", "write_policy",
             "staleness_bound_ms", "session", "durability", "priority"}


def parse_spec(text: str) -> ConsistencySpec:
    """Parse and validate a JSON spec document.

    Raises SpecSyntaxError on malformed JSON, ValidationError on invariant
    failures, UnknownMergeFunction for an unregistered merge function.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(exc.msg, "line %d col %d" % (exc.lineno, exc.colno)) from None
    if not isinstance(doc, dict):
        raise SpecSyntaxError("spec document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValidationError("unknown spec keys: %s" % sorted(unknown))
    missing = _TOP_KEYS - set(doc) - {"session"}
    if missing:
        raise ValidationError("missing spec keys: %s" % sorted(missing))

    lat = doc["latency_sla"]
    if not isinstance(lat, dict) or set(lat) != {"percentile", "bound_ms"}:
        raise ValidationError("latency_sla must have exactly percentile and bound_ms")
    wp = doc["write_policy"]
    if not isinstance(wp, dict) or "kind" not in wp or set(wp) - {"kind", "merge_fn"}:
        raise ValidationError("write_policy must be {kind, merge_fn?}")

    spec = ConsistencySpec(
        namespace=doc["namespace"],
        latency_sla=LatencySLA(percentile=float(lat["percentile"]),
                               bound_ms=int(lat["bound_ms"])),
        availability_sla=float(doc["availability"]),
        write_policy=WritePolicy(kind=wp["kind"], merge_fn=wp.get("merge_fn")),
        staleness_bound_ms=int(doc["staleness_bound_ms"]),
        session_guarantees=frozenset(doc.get("session", [])),
        durability_target=float(doc["durability"]),
        priority_order=tuple(doc["priority"]),
    )
    spec.validate()
    return spec


def serialize_spec(spec: ConsistencySpec) -> str:
    doc = {
        "namespace": spec.namespace,
        "latency_sla": {"percentile": spec.latency_sla.percentile,
                        "bound_ms": spec.latency_sla.bound_ms},
        "availability": spec.availability_sla,
        "write_policy": {"kind": spec.write_policy.kind},
        "staleness_bound_ms": spec.staleness_bound_ms,
        "session": sorted(spec.session_guarantees),
        "durability": spec.durability_target,
        "priority": list(spec.priority_order),
    }
    if spec.write_policy.merge_fn is not None:
        doc["write_policy"]["merge_fn"] = spec.write_policy.merge_fn
    return json.dumps(doc, indent=2, sort_keys=True)


def replicas_for(durability_target: float, node_failure_prob: float) -> int:
    """Smallest replica count R >= 1 with p^R <= 1 - durability target.

    Independent per-epoch failures: a committed write is lost only when all
    R replicas fail inside one epoch.
    """
    if not (0.0 < durability_target < 1.0):
        raise ValidationError("durability_target must be in (0,1)")
    if not (0.0 < node_failure_prob < 1.0):
        raise ValidationError("node_failure_prob must be in (0,1)")
    allowed_loss = 1.0 - durability_target
    r = 1
    p = node_failure_prob
    while p > allowed_loss:
        r += 1
        p *= node_failure_prob
    return r

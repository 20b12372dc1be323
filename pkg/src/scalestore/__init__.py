"""scalestore: scale-independent storage for interactive web workloads.

Declarative query templates are admitted against developer-declared
cardinality bounds, compiled into materialized indices with an explicit
maintenance rule table, and kept current by a deadline-ordered update
pipeline running over a partitioned, replicated key-value substrate.  A
model-driven provisioner grows and shrinks the cluster, and a declarative
consistency spec arbitrates which guarantee gives way when they conflict.
"""

__version__ = "0.1.0"

from .consistency import ConsistencySpec, parse_spec, replicas_for
from .errors import ScaleStoreError
from .query import Catalog, Rejection, bind, check_admissible, parse_template
from .schema import Schema, parse_schema

__all__ = [
    "__version__",
    "ConsistencySpec", "parse_spec", "replicas_for",
    "ScaleStoreError",
    "Catalog", "Rejection", "bind", "check_admissible", "parse_template",
    "Schema", "parse_schema",
]

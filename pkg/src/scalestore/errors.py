"""Exception hierarchy shared across the package."""


class ScaleStoreError(Exception):
    """Base class for all scalestore errors."""


# --- consistency spec ---

class SpecSyntaxError(ScaleStoreError):
    """Spec document is not well-formed; carries position info when known."""

    def __init__(self, message, position=None):
        super().__init__(message if position is None
                         else "%s (at %s)" % (message, position))
        self.position = position


class ValidationError(ScaleStoreError):
    """A structural invariant of a parsed document failed."""


class UnknownMergeFunction(ScaleStoreError):
    """write_policy names a merge function missing from the registry."""


# --- query language ---

class QuerySyntaxError(ScaleStoreError):
    def __init__(self, message, position=None):
        super().__init__(message if position is None
                         else "%s (at offset %d)" % (message, position))
        self.position = position


class UnknownTable(ScaleStoreError):
    pass


class UnknownField(ScaleStoreError):
    pass


class UnboundParameter(ScaleStoreError):
    pass


class MissingParameter(ScaleStoreError):
    pass


class TypeMismatch(ScaleStoreError):
    pass


# --- storage engine ---

class ReplicaUnavailable(ScaleStoreError):
    pass


class RangeTooWide(ScaleStoreError):
    pass


class InvalidSplitKey(ScaleStoreError):
    pass


class NonAdjacent(ScaleStoreError):
    pass


class Conflict(ScaleStoreError):
    """Serializable write rejected (concurrent-writer detection)."""


# --- update pipeline ---

class BudgetExceeded(ScaleStoreError):
    """An update function ran more primitive ops than its rule allows.

    Always a compiler bug; fatal in tests.
    """


# --- provisioner ---

class InsufficientData(ScaleStoreError):
    pass


# --- simulation ---

class ScenarioError(ScaleStoreError):
    pass


class SchemaMismatch(ScaleStoreError):
    """Metrics CSV header does not match the expected column set."""

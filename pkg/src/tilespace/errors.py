"""Exception taxonomy shared by all modules.

CLI exit codes: SchemaError -> 2, PreconditionError (and subclasses) -> 3,
BudgetError -> 4.  ConsistencyError signals an internal bug and is never
mapped to a friendly exit code.
"""


class TileSpaceError(Exception):
    pass


class SchemaError(TileSpaceError):
    """Malformed input document (rule file, complex file, group table)."""


class PreconditionError(TileSpaceError):
    """Operation called outside its contract (wrong route, bad level, ...)."""


class UndeterminedError(PreconditionError):
    """A corona or context is not determined by the given patch."""


class BudgetError(TileSpaceError):
    """A configured resource budget was exhausted."""


class ConsistencyError(TileSpaceError):
    """Internal invariant violated; indicates a construction bug."""

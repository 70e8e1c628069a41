"""Exception hierarchy; the CLI maps each class to an exit code."""


class GeoGCPError(Exception):
    """Base class for pipeline errors."""


class ValidationError(GeoGCPError, ValueError):
    """Input data violate a documented format or invariant."""


class InvariantError(GeoGCPError, RuntimeError):
    """An internal consistency check failed."""

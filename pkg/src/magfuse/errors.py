"""Exception types shared across the toolkit."""


class FormatError(ValueError):
    """A file on disk is missing, truncated, or malformed."""


class ConsistencyError(ValueError):
    """Two artifacts that must agree (dimensions, ids, metadata) do not."""

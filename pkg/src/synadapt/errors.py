class SynAdaptError(Exception):
    """Base class for data and configuration errors (CLI exit code 2)."""


class FormatError(SynAdaptError):
    """A persisted artifact is malformed, truncated, or has the wrong version."""


class ConfigError(SynAdaptError):
    """Inconsistent configuration, e.g. resuming with a different config."""

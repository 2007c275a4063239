"""Exception hierarchy. The CLI maps these onto exit codes."""


class TaggroundError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TaggroundError):
    """Invalid configuration or invalid argument combination (exit code 2)."""


class DataError(TaggroundError):
    """Malformed or inconsistent data files / records (exit code 3)."""


class SamplingError(TaggroundError):
    """A negative sampler could not satisfy its contract (exit code 3)."""

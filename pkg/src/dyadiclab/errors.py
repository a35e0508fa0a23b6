class DyadicLabError(Exception):
    """Base class for all errors raised by dyadiclab."""


class InvalidArgument(DyadicLabError, ValueError):
    pass


class DegenerateMetric(DyadicLabError, ValueError):
    pass


class NotIntegrable(DyadicLabError, ValueError):
    pass


class ResourceLimit(DyadicLabError, MemoryError):
    pass


class DomainViolation(DyadicLabError, ValueError):
    """A point that should lie in the Bellman domain does not."""


class ConfigError(DyadicLabError, ValueError):
    pass


class CsvParseError(DyadicLabError, ValueError):
    """A results CSV could not be read; the message names the offending row."""

"""Exception types shared across the package."""


class DpsbeamError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DpsbeamError):
    """Malformed or inconsistent scenario configuration."""


class DegenerateGeometryError(DpsbeamError):
    """A mobile coincides with a base station, so the path-loss law blows up."""


class DegenerateAssociationError(DpsbeamError):
    """An association references a zero-gain link, e.g. a dead channel."""


class InfeasibleScalingError(DpsbeamError):
    """The downlink power-scaling system has no positive solution."""


class EnumerationGuardError(DpsbeamError):
    """Brute-force enumeration would exceed the configured size guard."""

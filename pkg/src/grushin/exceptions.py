"""Exception types raised across the package."""


class GrushinError(Exception):
    """Base class for all package errors."""


class DomainError(GrushinError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class SingularPointError(DomainError):
    """A pointwise quantity was requested on the singular set ``x = 0``."""


class ConfigurationError(GrushinError, ValueError):
    """An extension, simulation setting or experiment is inconsistent.

    ``field`` names the offending configuration entry when one is known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class UnsupportedError(GrushinError, NotImplementedError):
    """The requested combination has no implementation (e.g. exact BESQ with d < 0)."""

"""Exception types shared across the package."""


class HitlabError(Exception):
    """Base class for all package errors."""


class DomainError(HitlabError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class RangeError(DomainError):
    """A value lies outside the range of a function being inverted."""


class NumericalError(HitlabError, ArithmeticError):
    """A numerical routine (quadrature, optimizer, factorization) failed."""


class ConstructionError(HitlabError, ValueError):
    """A discretization could not be built (e.g. a negative radicand)."""


class ResourceError(HitlabError, MemoryError):
    """A request would need more memory than is reasonable."""


class BoundNotEstablished(HitlabError):
    """A theoretical bound was requested outside the cases where it holds."""
